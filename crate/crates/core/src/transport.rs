//! Mass-transport view of the factorization.
//!
//! The graph measure `mu` sits on the atoms `(x_i, u_i)` and its transpose
//! `nu` on `(u_i, x_i)`. An involution `s` induces the atom map
//! `(x_i, u_i) -> (u_s(i), x_s(i))` from `mu` onto `nu`, whose quadratic cost
//! equals the distance of `u` to `s`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{DiscreteDomain, Permutation, SampledField};
use crate::vecops::dist;
use crate::{Error, Result};

/// Weighted atoms in `R^{2d}`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
}

impl PairMeasure {
    pub fn new(dim: usize, coords: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() != 2 * dim * masses.len() {
            return Err(Error::LengthMismatch { expected: 2 * dim * masses.len(), actual: coords.len() });
        }
        if let Some(k) = masses.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::NonFinite { index: k });
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: k / (2 * dim) });
        }
        Ok(PairMeasure { dim, coords, masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Dimension `d` of each half of an atom.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.coords[k * 2 * self.dim..(k + 1) * 2 * self.dim]
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.masses[k]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Swaps the two halves of every atom.
    pub fn transpose(&self) -> PairMeasure {
        let d = self.dim;
        let mut coords = Vec::with_capacity(self.coords.len());
        for k in 0..self.len() {
            let a = self.atom(k);
            coords.extend_from_slice(&a[d..]);
            coords.extend_from_slice(&a[..d]);
        }
        PairMeasure { dim: d, coords, masses: self.masses.clone() }
    }

    /// Writes `mass,p0,...,p{2d-1}` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["mass".to_string()];
        header.extend((0..2 * self.dim).map(|k| format!("p{k}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.mass(k).to_string()];
            row.extend(self.atom(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_inputs(dom: &DiscreteDomain, field: &SampledField) -> Result<()> {
    if dom.len() != field.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: field.len() });
    }
    if dom.dim() != field.dim() {
        return Err(Error::DimensionMismatch { expected: dom.dim(), actual: field.dim() });
    }
    Ok(())
}

fn check_perm(dom: &DiscreteDomain, s: &Permutation) -> Result<()> {
    if s.len() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: s.len() });
    }
    Ok(())
}

/// The graph measure on `(x_i, u_i)` and its transpose on `(u_i, x_i)`.
pub fn build_pair_measures(dom: &DiscreteDomain, field: &SampledField) -> Result<(PairMeasure, PairMeasure)> {
    check_inputs(dom, field)?;
    let mut coords = Vec::with_capacity(2 * dom.dim() * dom.len());
    for i in 0..dom.len() {
        coords.extend_from_slice(dom.point(i));
        coords.extend_from_slice(field.value(i));
    }
    let mu = PairMeasure::new(dom.dim(), coords, vec![dom.cell_measure(); dom.len()])?;
    let nu = mu.transpose();
    Ok((mu, nu))
}

/// `1/2 sum_i (|u_s(i) - x_i|^2 + |u_i - x_s(i)|^2) * mu`.
pub fn transport_cost(dom: &DiscreteDomain, field: &SampledField, s: &Permutation) -> Result<f64> {
    check_inputs(dom, field)?;
    check_perm(dom, s)?;
    let sum: f64 = (0..dom.len())
        .map(|i| {
            let j = s.apply(i);
            dist(field.value(j), dom.point(i)).powi(2) + dist(field.value(i), dom.point(j)).powi(2)
        })
        .sum();
    Ok(0.5 * sum * dom.cell_measure())
}

/// Atom-level map `T(x_i, u_i) = (u_s(i), x_s(i))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap {
    /// `image[i]` is the index of the `nu` atom hit by the `i`-th `mu` atom.
    pub image: Vec<usize>,
    /// Every `nu` atom receives exactly the mass of its preimage.
    pub pushes_forward: bool,
    /// Largest coordinate mismatch between `T(mu atom)` and its target `nu` atom.
    pub max_atom_error: f64,
}

/// Builds `T` from `s` and checks mass bookkeeping against `nu`.
pub fn parametrize_map(dom: &DiscreteDomain, field: &SampledField, s: &Permutation) -> Result<TransportMap> {
    check_perm(dom, s)?;
    let (mu, nu) = build_pair_measures(dom, field)?;
    let d = dom.dim();
    let n = dom.len();
    let mut received = vec![0.0; n];
    let mut max_err: f64 = 0.0;
    for i in 0..n {
        let j = s.apply(i);
        let mut t = Vec::with_capacity(2 * d);
        t.extend_from_slice(field.value(j));
        t.extend_from_slice(dom.point(j));
        max_err = max_err.max(dist(&t, nu.atom(j)));
        received[j] += mu.mass(i);
    }
    let pushes_forward = max_err == 0.0 && received.iter().zip(&nu.masses).all(|(a, b)| a == b);
    Ok(TransportMap { image: s.as_slice().to_vec(), pushes_forward, max_atom_error: max_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, sample_field, DomainSpec, Involution};
    use crate::dual::distance_objective;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_involution(rng: &mut ChaCha8Rng, n: usize) -> Involution {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let pairs: Vec<(usize, usize)> = idx.chunks(2).filter(|c| c.len() == 2 && rng.random_bool(0.7)).map(|c| (c[0], c[1])).collect();
        Involution::from_pairs(n, &pairs).unwrap()
    }

    #[test]
    fn single_atom() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 1)).unwrap();
        let field = sample_field(&dom, |_| vec![0.25]).unwrap();
        let (mu, nu) = build_pair_measures(&dom, &field).unwrap();
        assert_eq!(mu.atom(0), &[0.5, 0.25]);
        assert_eq!(nu.atom(0), &[0.25, 0.5]);
        assert_eq!(mu.mass(0), 1.0);
        assert_eq!(nu.mass(0), 1.0);
    }

    #[test]
    fn masses_and_double_transpose() {
        let dom = build_grid(&DomainSpec::interval(0.0, PI, 10)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0].sin()]).unwrap();
        let (mu, nu) = build_pair_measures(&dom, &field).unwrap();
        assert!((mu.total_mass() - PI).abs() < 1e-12 && (nu.total_mass() - PI).abs() < 1e-12);
        assert_eq!(mu.transpose().transpose(), mu);
        assert_eq!(mu.transpose(), nu);
    }

    #[test]
    fn cost_equals_distance_for_involutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sq = build_grid(&DomainSpec::symmetric_square(1.0, 6)).unwrap();
        let field = sample_field(&sq, |x| vec![x[0] * x[1], x[0] - 2.0 * x[1]]).unwrap();
        for _ in 0..200 {
            let s = random_involution(&mut rng, sq.len());
            let t = transport_cost(&sq, &field, &s).unwrap();
            let d = distance_objective(&sq, &field, &s).unwrap();
            assert!((t - d).abs() <= 1e-12 * d.abs(), "{t} vs {d}");
        }
    }

    #[test]
    fn identity_field_costs_nothing() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 9)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0]]).unwrap();
        assert_eq!(transport_cost(&dom, &field, &Permutation::identity(9)).unwrap(), 0.0);
    }

    #[test]
    fn three_cycle_differs_from_distance() {
        let dom = build_grid(&DomainSpec::interval(0.0, 3.0, 3)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0] * x[0]]).unwrap();
        let cyc = Permutation::new(vec![1, 2, 0]).unwrap();
        let t = transport_cost(&dom, &field, &cyc).unwrap();
        // half of sum over i of (u_{i+1} - x_i)^2 + (u_i - x_{i+1})^2, points 0.5, 1.5, 2.5
        let x = [0.5f64, 1.5, 2.5];
        let u = [0.25f64, 2.25, 6.25];
        let mut expected = 0.0;
        let mut direct = 0.0;
        for i in 0..3 {
            let j = (i + 1) % 3;
            expected += 0.5 * ((u[j] - x[i]).powi(2) + (u[i] - x[j]).powi(2));
            direct += (u[i] - x[j]).powi(2);
        }
        assert!((t - expected).abs() < 1e-12);
        assert!((t - direct).abs() > 1.0);
    }

    #[test]
    fn identity_map_is_transposition() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 5)).unwrap();
        let field = sample_field(&dom, |x| vec![1.0 - x[0] * x[0]]).unwrap();
        let m = parametrize_map(&dom, &field, &Permutation::identity(5)).unwrap();
        assert!(m.pushes_forward);
        assert_eq!(m.image, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn reflection_map_and_mass_bookkeeping() {
        let n = 16;
        let dom = build_grid(&DomainSpec::interval(0.0, PI, n)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0].sin() + x[0] * x[0].cos()]).unwrap();
        let s = Involution::reversal(n);
        let m = parametrize_map(&dom, &field, &s).unwrap();
        assert!(m.pushes_forward);
        for i in 0..n {
            assert_eq!(m.image[i], n - 1 - i);
            // T(x, u(x)) = (u(pi - x), pi - x)
            let target = dom.point(n - 1 - i)[0];
            assert!((target - (PI - dom.point(i)[0])).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        assert!(parametrize_map(&dom, &field, &Permutation::new(p).unwrap()).unwrap().pushes_forward);
    }

    #[test]
    fn csv_export() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 2)).unwrap();
        let field = sample_field(&dom, |x| vec![2.0 * x[0]]).unwrap();
        let (mu, _) = build_pair_measures(&dom, &field).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "mass,p0,p1\n0.5,0.25,0.5\n0.5,0.75,1.5\n");
    }
}
