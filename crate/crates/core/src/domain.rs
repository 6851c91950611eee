//! Discrete domains, sampled fields, kernels and involutions.
//!
//! A domain is a set of `N` equal-measure cells, each represented by one
//! point. Because all cells carry the same measure, every permutation of
//! cell indices is a measure-preserving map, and an involution is simply a
//! permutation that is its own inverse.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{dist, norm};

/// Serialized description of a grid, as read from a domain JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    /// `[a, b]` split into `cells` equal intervals.
    Interval { bounds: [f64; 2], cells: usize },
    /// Axis-aligned box, one `[lo, hi]` pair and one cell count per axis.
    Box {
        bounds: Vec<[f64; 2]>,
        cells: Vec<usize>,
    },
    /// `[-bounds, bounds]^2` with `cells` cells per axis. The point set is
    /// closed under `x -> -x` and under the quarter turn `(x1, x2) -> (x2, -x1)`.
    SymmetricSquare { bounds: f64, cells: usize },
}

impl DomainSpec {
    pub fn interval(a: f64, b: f64, cells: usize) -> Self {
        DomainSpec::Interval {
            bounds: [a, b],
            cells,
        }
    }

    pub fn symmetric_square(half_width: f64, cells: usize) -> Self {
        DomainSpec::SymmetricSquare {
            bounds: half_width,
            cells,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Box { bounds, .. } => bounds.len(),
            DomainSpec::SymmetricSquare { .. } => 2,
        }
    }
}

/// `N` equal-measure cells of a bounded domain, stored as a flat
/// row-major coordinate array.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDomain {
    coords: Vec<f64>,
    dim: usize,
    cell_measure: f64,
    radius: f64,
    mesh: f64,
}

impl DiscreteDomain {
    /// Builds a domain from explicit representatives.
    ///
    /// `mesh` is the largest cell diameter along an axis; it only feeds the
    /// mesh-aware tolerances.
    pub fn from_points(coords: Vec<f64>, dim: usize, cell_measure: f64, mesh: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if coords.is_empty() {
            return Err(Error::InvalidDomain("zero cells".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidDomain(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if !(cell_measure > 0.0 && cell_measure.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "cell measure must be positive, got {cell_measure}"
            )));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: k / dim });
        }
        let n = coords.len() / dim;
        let mut seen = HashSet::with_capacity(n);
        for i in 0..n {
            let key: Vec<u64> = coords[i * dim..(i + 1) * dim]
                .iter()
                .map(|c| (c + 0.0).to_bits())
                .collect();
            if !seen.insert(key) {
                return Err(Error::InvalidDomain(format!("duplicate point at index {i}")));
            }
        }
        let radius = coords.chunks(dim).map(norm).fold(0.0, f64::max);
        Ok(DiscreteDomain {
            coords,
            dim,
            cell_measure,
            radius,
            mesh,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    /// Total measure `N * cell_measure`.
    pub fn volume(&self) -> f64 {
        self.cell_measure * self.len() as f64
    }

    /// Largest point norm.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Index of the point within `tol` of `p`, if any (smallest index wins).
    pub fn locate(&self, p: &[f64], tol: f64) -> Option<usize> {
        (0..self.len()).find(|&i| dist(self.point(i), p) <= tol)
    }

    /// Permutation induced by a point map that sends grid points to grid points.
    pub fn induced_permutation<F>(&self, map: F) -> Result<Permutation>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let tol = 1e-12 * self.radius.max(1.0);
        let sigma = (0..self.len())
            .map(|i| {
                let image = map(self.point(i));
                self.locate(&image, tol).ok_or_else(|| {
                    Error::NotPermutation(format!("image of point {i} is not a grid point"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(sigma)
    }
}

/// Midpoints of `cells` equal cells of `[lo, hi]`.
///
/// Written as `center + (2k + 1 - cells) * half / cells` so that mirrored
/// cells of a centered interval are exact negatives of each other.
fn axis_midpoints(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..cells)
        .map(|k| {
            let offset = (2 * k + 1) as f64 - cells as f64;
            center + offset * half / cells as f64
        })
        .collect()
}

fn check_axis(lo: f64, hi: f64, cells: usize) -> Result<()> {
    if cells == 0 {
        return Err(Error::InvalidDomain("zero cells".into()));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::InvalidDomain(format!(
            "non-positive extent [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn tensor_grid(axes: &[Vec<f64>]) -> Vec<f64> {
    let dim = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut coords = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        for (a, &k) in idx.iter().enumerate() {
            coords.push(axes[a][k]);
        }
        // last axis fastest
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    coords
}

/// Builds the midpoint grid described by `spec`.
pub fn build_grid(spec: &DomainSpec) -> Result<DiscreteDomain> {
    match spec {
        DomainSpec::Interval { bounds, cells } => {
            let [a, b] = *bounds;
            check_axis(a, b, *cells)?;
            let width = (b - a) / *cells as f64;
            DiscreteDomain::from_points(axis_midpoints(a, b, *cells), 1, width, width)
        }
        DomainSpec::Box { bounds, cells } => {
            if bounds.is_empty() {
                return Err(Error::InvalidDomain("box needs at least one axis".into()));
            }
            if bounds.len() != cells.len() {
                return Err(Error::InvalidDomain(format!(
                    "{} axis bounds but {} cell counts",
                    bounds.len(),
                    cells.len()
                )));
            }
            let mut measure = 1.0;
            let mut mesh: f64 = 0.0;
            let mut axes = Vec::with_capacity(bounds.len());
            for (&[lo, hi], &n) in bounds.iter().zip(cells) {
                check_axis(lo, hi, n)?;
                let w = (hi - lo) / n as f64;
                measure *= w;
                mesh = mesh.max(w);
                axes.push(axis_midpoints(lo, hi, n));
            }
            DiscreteDomain::from_points(tensor_grid(&axes), bounds.len(), measure, mesh)
        }
        DomainSpec::SymmetricSquare { bounds, cells } => {
            let r = *bounds;
            check_axis(-r, r, *cells)?;
            let w = 2.0 * r / *cells as f64;
            let axis = axis_midpoints(-r, r, *cells);
            DiscreteDomain::from_points(tensor_grid(&[axis.clone(), axis]), 2, w * w, w)
        }
    }
}

/// A vector field evaluated at the domain points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    values: Vec<f64>,
    dim: usize,
    radius: f64,
}

impl SampledField {
    /// Wraps precomputed values (row-major, one `dim`-vector per point).
    pub fn from_values(dom: &DiscreteDomain, values: Vec<f64>) -> Result<Self> {
        let expected = dom.len() * dom.dim();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: k / dom.dim(),
            });
        }
        let radius = values.chunks(dom.dim()).map(norm).fold(0.0, f64::max);
        Ok(SampledField {
            values,
            dim: dom.dim(),
            radius,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest value norm, `R_u`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Evaluates `f` at every domain point.
pub fn sample_field<F>(dom: &DiscreteDomain, f: F) -> Result<SampledField>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut values = Vec::with_capacity(dom.len() * dom.dim());
    for (i, x) in dom.points().enumerate() {
        let v = f(x);
        if v.len() != dom.dim() {
            return Err(Error::DimensionMismatch {
                expected: dom.dim(),
                actual: v.len(),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        values.extend(v);
    }
    SampledField::from_values(dom, values)
}

/// Radius `R` of a ball containing both the domain and the field values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallRadius(f64);

impl BallRadius {
    /// `R = (1 + margin) * max(R_Ω, R_u)`; a degenerate all-zero problem gets `R = 1 + margin`.
    pub fn new(dom: &DiscreteDomain, field: &SampledField, margin: f64) -> Result<Self> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::Config(format!("radius margin must be >= 0, got {margin}")));
        }
        let base = dom.radius().max(field.radius());
        let base = if base > 0.0 { base } else { 1.0 };
        Ok(BallRadius((1.0 + margin) * base))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Finite stand-in for the ball `B_R` in every supremum over dual points.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPointSet {
    pts: Vec<f64>,
    dim: usize,
    radius: f64,
}

impl DualPointSet {
    /// `{0} ∪ {u_i} ∪` `sphere_samples` quasi-uniform points of norm `R`.
    ///
    /// Exact duplicates are dropped, keeping first occurrences, so the
    /// origin is always index 0 and field values keep their relative order.
    /// In one dimension the sphere is `{-R, R}` whatever `sphere_samples` is.
    pub fn build(field: &SampledField, radius: BallRadius, sphere_samples: usize) -> Result<Self> {
        let dim = field.dim();
        let r = radius.value();
        if field.radius() > r {
            return Err(Error::Config(format!(
                "ball radius {r} does not contain the field (R_u = {})",
                field.radius()
            )));
        }
        let mut pts = vec![0.0; dim];
        pts.extend_from_slice(field.values());
        pts.extend(sphere_points(dim, sphere_samples.max(1), r));
        Ok(Self::dedup(pts, dim, r))
    }

    /// An arbitrary point set inside `B_R`. Only the norm bound is checked.
    pub fn from_points(pts: Vec<f64>, dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || pts.is_empty() || !pts.len().is_multiple_of(dim) {
            return Err(Error::InvalidDomain("dual point set must be non-empty".into()));
        }
        let slack = 1e-12 * radius.max(1.0);
        if let Some(k) = pts.chunks(dim).position(|p| !(norm(p) <= radius + slack)) {
            return Err(Error::Config(format!(
                "dual point {k} lies outside the ball of radius {radius}"
            )));
        }
        Ok(Self::dedup(pts, dim, radius))
    }

    fn dedup(pts: Vec<f64>, dim: usize, radius: f64) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(pts.len());
        for p in pts.chunks(dim) {
            let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
            if seen.insert(key) {
                out.extend_from_slice(p);
            }
        }
        DualPointSet {
            pts: out,
            dim,
            radius,
        }
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.pts[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.pts.chunks(self.dim)
    }

    /// Covering radius of the set inside `B_R`: the largest distance from a
    /// ball point to its nearest dual point.
    ///
    /// Exact in one dimension; in higher dimensions it is the maximum over a
    /// seeded uniform sample of the ball, so it may underestimate slightly.
    pub fn covering_radius(&self, probes: usize, seed: u64) -> f64 {
        let r = self.radius;
        if self.dim == 1 {
            let mut xs: Vec<f64> = self.pts.clone();
            xs.sort_by(f64::total_cmp);
            let mut worst = (xs[0] + r).max(r - xs[xs.len() - 1]);
            for w in xs.windows(2) {
                worst = worst.max(0.5 * (w[1] - w[0]));
            }
            return worst;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut q = vec![0.0; self.dim];
        let mut probe = |q: &[f64]| {
            let d = self
                .points()
                .map(|p| dist(p, q))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        };
        for _ in 0..probes {
            // uniform in the ball: gaussian direction, radius ~ U^(1/d)
            for c in q.iter_mut() {
                *c = StandardNormal.sample(&mut rng);
            }
            let n = norm(&q);
            let u: f64 = rand::Rng::random(&mut rng);
            let s = r * u.powf(1.0 / self.dim as f64) / n;
            q.iter_mut().for_each(|c| *c *= s);
            probe(&q);
        }
        worst
    }
}

/// Quasi-uniform points on the sphere of radius `r` in `R^dim`.
pub fn sphere_points(dim: usize, count: usize, r: f64) -> Vec<f64> {
    match dim {
        1 => vec![-r, r],
        2 => (0..count)
            .flat_map(|k| {
                let t = std::f64::consts::TAU * (k as f64 + 0.5) / count as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .flat_map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * k as f64;
                    [r * rho * t.cos(), r * rho * t.sin(), r * z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_d0a1);
            let mut out = Vec::with_capacity(count * dim);
            for _ in 0..count {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = norm(&v);
                out.extend(v.iter().map(|c| r * c / n));
            }
            out
        }
    }
}

/// `H(x_i, x_j)` on the grid, stored once per unordered pair.
///
/// The entry for `i < j` is stored; `K[j][i]` is its negation and the
/// diagonal is zero, so `K[i][j] + K[j][i] == 0.0` holds bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr")]
pub struct AntiSymmetricKernel {
    n: usize,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRepr {
    n: usize,
    upper: Vec<f64>,
}

impl TryFrom<KernelRepr> for AntiSymmetricKernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        AntiSymmetricKernel::from_upper(r.n, r.upper)
    }
}

impl AntiSymmetricKernel {
    pub fn zeros(n: usize) -> Self {
        AntiSymmetricKernel {
            n,
            upper: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    /// Wraps the strictly-upper entries `K[i][j]`, `i < j`, in row-major order.
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: upper.len(),
            });
        }
        if let Some(k) = upper.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: k });
        }
        Ok(AntiSymmetricKernel { n, upper })
    }

    /// Anti-symmetrizes an arbitrary pair function: `K[i][j] = (f(i,j) - f(j,i)) / 2`.
    pub fn from_fn<F>(n: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (f(i, j) - f(j, i));
                if !v.is_finite() {
                    return Err(Error::NonFinite { index: i });
                }
                upper.push(v);
            }
        }
        Ok(AntiSymmetricKernel { n, upper })
    }

    /// Anti-symmetrizes a dense row-major `n x n` matrix.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                actual: dense.len(),
            });
        }
        Self::from_fn(n, |i, j| dense[i * n + j])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub(crate) fn upper_mut(&mut self) -> &mut [f64] {
        &mut self.upper
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Less => self.upper[self.slot(i, j)],
            Greater => -self.upper[self.slot(j, i)],
            Equal => 0.0,
        }
    }

    /// Sets `K[i][j] = v` (and hence `K[j][i] = -v`). Panics on the diagonal.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert_ne!(i, j, "the diagonal of an anti-symmetric kernel is fixed at zero");
        if i < j {
            let s = self.slot(i, j);
            self.upper[s] = v;
        } else {
            let s = self.slot(j, i);
            self.upper[s] = -v;
        }
    }

    /// Dense row-major copy, `out[i * n + j] = K[i][j]`.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.upper[self.slot(i, j)];
                out[i * n + j] = v;
                out[j * n + i] = -v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Restricts a pointwise Hamiltonian to the grid, anti-symmetrizing it.
pub fn make_kernel<H>(dom: &DiscreteDomain, h: H) -> Result<AntiSymmetricKernel>
where
    H: Fn(&[f64], &[f64]) -> f64,
{
    AntiSymmetricKernel::from_fn(dom.len(), |i, j| h(dom.point(i), dom.point(j)))
}

/// A bijection of `{0, …, N-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let n = sigma.len();
        let mut hit = vec![false; n];
        for (i, &s) in sigma.iter().enumerate() {
            if s >= n {
                return Err(Error::NotPermutation(format!("sigma({i}) = {s} is out of range")));
            }
            if std::mem::replace(&mut hit[s], true) {
                return Err(Error::NotPermutation(format!("{s} has two preimages")));
            }
        }
        Ok(Permutation(sigma))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_involution(&self) -> bool {
        compose_check(self)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

/// `true` iff `sigma(sigma(i)) == i` for every `i`.
pub fn compose_check(s: &Permutation) -> bool {
    s.0.iter().enumerate().all(|(i, &j)| s.0[j] == i)
}

/// A permutation that is its own inverse: the discrete self-dual map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Involution(Permutation);

impl Involution {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        Self::try_from(Permutation::new(sigma)?)
    }

    pub fn identity(n: usize) -> Self {
        Involution(Permutation::identity(n))
    }

    /// `i -> N - 1 - i`.
    pub fn reversal(n: usize) -> Self {
        Involution(Permutation((0..n).rev().collect()))
    }

    /// Involution whose 2-cycles are `pairs`; every other index is fixed.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut sigma: Vec<usize> = (0..n).collect();
        for &(i, j) in pairs {
            if i >= n || j >= n || i == j || sigma[i] != i || sigma[j] != j {
                return Err(Error::NotPermutation(format!("pair ({i}, {j}) is invalid")));
            }
            sigma[i] = j;
            sigma[j] = i;
        }
        Ok(Involution(Permutation(sigma)))
    }

    /// 2-cycles `(i, j)` with `i < j`, in increasing `i`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.0
             .0
            .iter()
            .enumerate()
            .filter(|&(i, &j)| i < j)
            .map(|(i, &j)| (i, j))
            .collect()
    }

    pub fn fixed_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.apply(i) == i).collect()
    }

    pub fn as_permutation(&self) -> &Permutation {
        &self.0
    }
}

impl std::ops::Deref for Involution {
    type Target = Permutation;
    fn deref(&self) -> &Permutation {
        &self.0
    }
}

impl TryFrom<Permutation> for Involution {
    type Error = Error;
    fn try_from(p: Permutation) -> Result<Self> {
        if let Some(index) = (0..p.len()).find(|&i| p.0[p.0[i]] != i) {
            return Err(Error::NotInvolution { index });
        }
        Ok(Involution(p))
    }
}

impl TryFrom<Vec<usize>> for Involution {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Involution::new(v)
    }
}

impl From<Involution> for Vec<usize> {
    fn from(s: Involution) -> Self {
        s.0 .0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_midpoints() {
        let dom = build_grid(&DomainSpec::interval(0.0, PI, 4)).unwrap();
        let expected = [PI / 8.0, 3.0 * PI / 8.0, 5.0 * PI / 8.0, 7.0 * PI / 8.0];
        for (p, e) in dom.points().zip(expected) {
            assert!((p[0] - e).abs() < 1e-15);
        }
        assert!((dom.cell_measure() - PI / 4.0).abs() < 1e-15);

        let one = build_grid(&DomainSpec::interval(0.0, 1.0, 1)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.point(0), &[0.5]);
        assert_eq!(one.cell_measure(), 1.0);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            build_grid(&DomainSpec::interval(0.0, 1.0, 0)),
            Err(Error::InvalidDomain(_))
        ));
        assert!(build_grid(&DomainSpec::interval(1.0, 1.0, 3)).is_err());
        assert!(build_grid(&DomainSpec::symmetric_square(-1.0, 3)).is_err());
        let bad = DomainSpec::Box {
            bounds: vec![[0.0, 1.0]],
            cells: vec![2, 2],
        };
        assert!(build_grid(&bad).is_err());
    }

    #[test]
    fn symmetric_square_closed_under_quarter_turn() {
        let dom = build_grid(&DomainSpec::symmetric_square(1.0, 4)).unwrap();
        assert_eq!(dom.len(), 16);
        // enumerate and check closure by exact lookup
        for x in dom.points() {
            let rot = [x[1], -x[0]];
            let neg = [-x[0], -x[1]];
            assert!(dom.locate(&rot, 0.0).is_some());
            assert!(dom.locate(&neg, 0.0).is_some());
        }
        let rot = dom.induced_permutation(|x| vec![x[1], -x[0]]).unwrap();
        assert!(!rot.is_involution());
        // four quarter turns are the identity
        for i in 0..16 {
            let mut k = i;
            for _ in 0..4 {
                k = rot.apply(k);
            }
            assert_eq!(k, i);
        }
    }

    #[test]
    fn box_grid_shape() {
        let spec = DomainSpec::Box {
            bounds: vec![[0.0, 2.0], [0.0, 1.0]],
            cells: vec![2, 4],
        };
        let dom = build_grid(&spec).unwrap();
        assert_eq!(dom.len(), 8);
        assert_eq!(dom.dim(), 2);
        assert!((dom.cell_measure() - 0.25).abs() < 1e-15);
        assert!((dom.volume() - 2.0).abs() < 1e-15);
        assert_eq!(dom.point(1), &[0.5, 0.375]);
    }

    #[test]
    fn duplicate_points_rejected() {
        let e = DiscreteDomain::from_points(vec![0.0, 1.0, 0.0], 1, 1.0, 1.0);
        assert!(matches!(e, Err(Error::InvalidDomain(_))));
        // -0.0 and 0.0 are the same point
        assert!(DiscreteDomain::from_points(vec![0.0, -0.0], 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn sampling() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 2)).unwrap();
        let f = sample_field(&dom, |x| vec![x[0]]).unwrap();
        assert_eq!(f.values(), &[0.25, 0.75]);
        assert_eq!(f.radius(), 0.75);

        let sincos = |x: f64| x.sin() + x * x.cos();
        assert!((sincos(PI / 2.0) - 1.0).abs() < 1e-15);
        let tent = |x: f64| if x <= 0.5 { 2.0 * x } else { 3.0 - 2.0 * x };
        assert_eq!(tent(0.75), 1.5);

        let nan = sample_field(&dom, |x| vec![if x[0] > 0.5 { f64::NAN } else { 0.0 }]);
        assert!(matches!(nan, Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn kernel_examples() {
        let dom = build_grid(&DomainSpec::interval(0.0, PI, 8)).unwrap();
        let k = make_kernel(&dom, |x, y| x[0] * y[0].sin() - y[0] * x[0].sin()).unwrap();
        for i in 0..8 {
            assert_eq!(k.get(i, i), 0.0);
            for j in 0..8 {
                assert_eq!(k.get(i, j) + k.get(j, i), 0.0);
            }
        }
        let c = make_kernel(&dom, |_, _| 3.5).unwrap();
        assert_eq!(c.max_abs(), 0.0);

        let sq = make_kernel(&dom, |x, y| x[0] * x[0] - y[0] * y[0]).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let (a, b) = (dom.point(i)[0], dom.point(j)[0]);
                assert!((sq.get(i, j) - (a * a - b * b)).abs() < 1e-15);
            }
        }
        let inf = make_kernel(&dom, |x, _| if x[0] > 2.5 { f64::INFINITY } else { 0.0 });
        assert!(matches!(inf, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn kernel_set_get_dense() {
        let mut k = AntiSymmetricKernel::zeros(4);
        k.set(3, 1, 2.5);
        assert_eq!(k.get(1, 3), -2.5);
        assert_eq!(k.get(3, 1), 2.5);
        let d = k.to_dense();
        assert_eq!(d[3 * 4 + 1], 2.5);
        assert_eq!(AntiSymmetricKernel::from_dense(4, &d).unwrap(), k);
    }

    #[test]
    fn compose_check_examples() {
        assert!(compose_check(&Permutation::identity(5)));
        assert!(compose_check(&Involution::reversal(6)));
        let cyc = Permutation::new(vec![1, 2, 0]).unwrap();
        assert!(!compose_check(&cyc));
        assert!(matches!(
            Involution::try_from(cyc),
            Err(Error::NotInvolution { .. })
        ));
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
    }

    #[test]
    fn involution_pairs() {
        let s = Involution::from_pairs(5, &[(0, 3), (4, 1)]).unwrap();
        assert_eq!(s.as_slice(), &[3, 4, 2, 0, 1]);
        assert_eq!(s.pairs(), vec![(0, 3), (1, 4)]);
        assert_eq!(s.fixed_points(), vec![2]);
        assert!(Involution::from_pairs(3, &[(0, 1), (1, 2)]).is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "[3,4,2,0,1]");
        let back: Involution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Involution>("[1,2,0]").is_err());
    }

    #[test]
    fn dual_point_set_contents() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 4)).unwrap();
        let f = sample_field(&dom, |x| vec![2.0 * x[0]]).unwrap();
        let r = BallRadius::new(&dom, &f, 0.05).unwrap();
        assert!((r.value() - 1.05 * 1.75).abs() < 1e-15);
        let ps = DualPointSet::build(&f, r, 64).unwrap();
        // origin + 4 values + {-R, R}
        assert_eq!(ps.len(), 7);
        assert_eq!(ps.point(0), &[0.0]);
        assert!(ps.points().any(|p| p[0].abs() >= 0.99 * r.value()));
        for i in 0..4 {
            assert!(ps.points().any(|p| p == f.value(i)));
        }
        let cov = ps.covering_radius(0, 0);
        // largest gap is between 1.75 and R = 1.8375, or between -R and 0
        assert!((cov - 0.5 * r.value()).abs() < 1e-12);
    }

    #[test]
    fn sphere_points_have_radius() {
        for dim in 1..=5 {
            let pts = sphere_points(dim, 32, 2.0);
            for p in pts.chunks(dim) {
                assert!((norm(p) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn domain_spec_json() {
        let s: DomainSpec =
            serde_json::from_str(r#"{"kind":"interval","bounds":[0,1],"cells":8}"#).unwrap();
        assert_eq!(s, DomainSpec::interval(0.0, 1.0, 8));
        let s: DomainSpec =
            serde_json::from_str(r#"{"kind":"symmetric-square","bounds":1.0,"cells":12}"#)
                .unwrap();
        assert_eq!(s.dim(), 2);
        let s: DomainSpec = serde_json::from_str(
            r#"{"kind":"box","bounds":[[0,1],[0,2]],"cells":[3,4]}"#,
        )
        .unwrap();
        assert_eq!(build_grid(&s).unwrap().len(), 12);
        assert!(serde_json::from_str::<DomainSpec>(
            r#"{"kind":"interval","bounds":[0,1],"cells":8,"extra":1}"#
        )
        .is_err());
    }
}
