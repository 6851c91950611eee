//! The assembled factorization `u(x) = grad_1 H(Sx, x)` and its diagnostics.
//!
//! [`decompose`] solves the dual and primal problems, regularizes the primal
//! kernel into an off-grid Hamiltonian and measures how well the two
//! identities `u(x) = grad_1 H(Sx, x)` and `u(Sx) = -grad_2 H(Sx, x)` hold.
//! [`verify`] runs the same measurements on a supplied kernel and involution.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conjugacy::{regularize_with, RegularHamiltonian, RegularizationTolerance};
use crate::domain::{AntiSymmetricKernel, BallRadius, DiscreteDomain, DualPointSet, Involution, Permutation, SampledField};
use crate::dual::{self, DualConfig, DualMethod, DualSolution, Optimality};
use crate::exec::Execution;
use crate::primal::{self, pair_cancellation, recover_involution, recovery_eps, round_recovery, PrimalConfig};
use crate::vecops::{dist, dot, max_of, median, min_of, norm};
use crate::{Error, Result};

/// Default radius margin `eps_R`.
pub const DEFAULT_MARGIN: f64 = 0.05;
/// Default number of sphere samples per dimension in the dual point set.
pub const SPHERE_SAMPLES_PER_DIM: usize = 64;
/// Default finite-difference step relative to the ball radius.
pub const FD_STEP_FACTOR: f64 = 1e-4;
/// Relative threshold of the uniqueness heuristic.
pub const UNIQUENESS_EPS: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub margin: f64,
    /// `None` means `64 d`.
    pub sphere_samples: Option<usize>,
    /// `None` means `1e-4 R`.
    pub fd_step: Option<f64>,
    /// `None` means the measured `2 R * covering radius`.
    pub tol_reg: Option<f64>,
    /// Neighbourhood radius of the Jacobian fit; `None` means `1.5 * mesh`.
    pub jacobian_radius: Option<f64>,
    pub seed: u64,
    pub dual: DualConfig,
    pub primal: PrimalConfig,
    pub exec: Execution,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            margin: DEFAULT_MARGIN,
            sphere_samples: None,
            fd_step: None,
            tol_reg: None,
            jacobian_radius: None,
            seed: 0,
            dual: DualConfig::default(),
            primal: PrimalConfig::default(),
            exec: Execution::default(),
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Config(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        if self.sphere_samples == Some(0) {
            return Err(Error::Config("sphere_samples must be >= 1".into()));
        }
        positive("fd_step", self.fd_step)?;
        positive("tol_reg", self.tol_reg)?;
        positive("jacobian_radius", self.jacobian_radius)?;
        positive("primal tolerance", Some(self.primal.tol))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub median: f64,
    pub max: f64,
}

impl ResidualStats {
    pub fn of(values: &[f64]) -> Self {
        ResidualStats {
            median: median(values),
            max: if values.is_empty() { 0.0 } else { max_of(values) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityStats {
    pub min: f64,
    pub max: f64,
    /// `sum_i slack_i * mu`, equal to the gap up to rounding.
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    StrictlyMonotone,
    Monotone,
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub verdict: Monotonicity,
    /// Pair minimizing `<x_i - x_j, u_i - u_j>`, if `N >= 2`.
    pub worst_pair: Option<(usize, usize)>,
    pub min_pairing: f64,
}

/// Classifies `<x_i - x_j, u_i - u_j>` over all pairs.
pub fn check_monotone(dom: &DiscreteDomain, field: &SampledField) -> MonotoneCheck {
    check_monotone_with(dom, field, Execution::default())
}

pub fn check_monotone_with(dom: &DiscreteDomain, field: &SampledField, exec: Execution) -> MonotoneCheck {
    let n = dom.len();
    let rows = exec.map(n, |i| {
        let (xi, ui) = (dom.point(i), field.value(i));
        let mut worst = (f64::INFINITY, 0usize);
        let mut scale = 0.0f64;
        let mut dx = vec![0.0; dom.dim()];
        let mut du = vec![0.0; dom.dim()];
        for j in i + 1..n {
            for k in 0..dom.dim() {
                dx[k] = xi[k] - dom.point(j)[k];
                du[k] = ui[k] - field.value(j)[k];
            }
            let q = dot(&dx, &du);
            scale = scale.max(norm(&dx) * norm(&du));
            if q < worst.0 {
                worst = (q, j);
            }
        }
        (worst, scale)
    });
    let scale = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut min = (f64::INFINITY, None);
    for (i, ((q, j), _)) in rows.into_iter().enumerate() {
        if q < min.0 {
            min = (q, Some((i, j)));
        }
    }
    let verdict = if n < 2 || min.0 > tol {
        Monotonicity::StrictlyMonotone
    } else if min.0 >= -tol {
        Monotonicity::Monotone
    } else {
        Monotonicity::NonMonotone
    };
    MonotoneCheck {
        verdict,
        worst_pair: min.1,
        min_pairing: if n < 2 { 0.0 } else { min.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Uniqueness {
    UniquenessPlausible,
    NotUnique,
}

/// Sampled proxy for the absence of critical points of
/// `x -> <u(x), y1 - y2> + <u(y1) - u(y2), x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCheck {
    pub verdict: Uniqueness,
    /// Always `true`: finite sampling never proves uniqueness.
    pub heuristic: bool,
    /// Smallest `|Du(x)^T (y1 - y2) + u(y1) - u(y2)| / |y1 - y2|` seen.
    pub min_ratio: f64,
    pub threshold: f64,
    pub samples: usize,
    /// Triple `(x, y1, y2)` attaining the minimum.
    pub worst: Option<(usize, usize, usize)>,
}

/// Least-squares Jacobians from grid neighbours within `radius` (doubled until
/// the neighbourhood spans `R^d`). Row-major `d x d` per point.
pub fn jacobians(dom: &DiscreteDomain, field: &SampledField, radius: f64, exec: Execution) -> Vec<Vec<f64>> {
    let d = dom.dim();
    let n = dom.len();
    exec.map(n, |i| {
        let xi = dom.point(i);
        let ui = field.value(i);
        let mut r = radius;
        for _ in 0..64 {
            let mut a = DMatrix::<f64>::zeros(d, d);
            let mut b = DMatrix::<f64>::zeros(d, d);
            let mut count = 0;
            for j in 0..n {
                if j == i || dist(xi, dom.point(j)) > r {
                    continue;
                }
                let dx = DVector::from_iterator(d, (0..d).map(|k| dom.point(j)[k] - xi[k]));
                let du = DVector::from_iterator(d, (0..d).map(|k| field.value(j)[k] - ui[k]));
                a += &dx * dx.transpose();
                b += &du * dx.transpose();
                count += 1;
            }
            if count >= d {
                if let Some(inv) = a.clone().try_inverse() {
                    if a.norm() > 0.0 && (inv.norm() * a.norm()) < 1e12 {
                        let j = b * inv;
                        return (0..d * d).map(|k| j[(k / d, k % d)]).collect();
                    }
                }
            }
            r *= 2.0;
        }
        vec![0.0; d * d]
    })
}

pub fn check_uniqueness(dom: &DiscreteDomain, field: &SampledField, du: f64, seed: u64) -> UniquenessCheck {
    check_uniqueness_with(dom, field, du, seed, Execution::default())
}

/// Exhaustive over all triples when `N^3` is at most `4 * 10^6`, otherwise
/// `10^6` seeded random triples.
pub fn check_uniqueness_with(
    dom: &DiscreteDomain,
    field: &SampledField,
    du: f64,
    seed: u64,
    exec: Execution,
) -> UniquenessCheck {
    const EXHAUSTIVE: usize = 4_000_000;
    const SAMPLED: usize = 1_000_000;
    let n = dom.len();
    let d = dom.dim();
    let jac = jacobians(dom, field, du, exec);
    let jmax = jac
        .iter()
        .map(|j| j.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let threshold = UNIQUENESS_EPS * (1.0 + jmax);

    let ratio = |x: usize, a: usize, b: usize| {
        let j = &jac[x];
        let mut r2 = 0.0;
        let mut y2 = 0.0;
        for k in 0..d {
            // (Du^T v)_k = sum_l J[l][k] v_l
            let mut g = field.value(a)[k] - field.value(b)[k];
            for l in 0..d {
                g += j[l * d + k] * (dom.point(a)[l] - dom.point(b)[l]);
            }
            r2 += g * g;
            let dy = dom.point(a)[k] - dom.point(b)[k];
            y2 += dy * dy;
        }
        (r2 / y2).sqrt()
    };

    let (best, samples) = if n < 2 {
        ((f64::INFINITY, None), 0)
    } else if n.saturating_mul(n).saturating_mul(n) <= EXHAUSTIVE {
        let rows = exec.map(n, |x| {
            let mut best = (f64::INFINITY, None);
            for a in 0..n {
                for b in a + 1..n {
                    let r = ratio(x, a, b);
                    if r < best.0 {
                        best = (r, Some((x, a, b)));
                    }
                }
            }
            best
        });
        let best = rows.into_iter().fold((f64::INFINITY, None), |acc, r| if r.0 < acc.0 { r } else { acc });
        (best, n * n * (n - 1) / 2)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = (f64::INFINITY, None);
        for _ in 0..SAMPLED {
            let x = rng.random_range(0..n);
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let r = ratio(x, a, b);
            if r < best.0 {
                best = (r, Some((x, a, b)));
            }
        }
        (best, SAMPLED)
    };
    UniquenessCheck {
        verdict: if best.0 > threshold { Uniqueness::UniquenessPlausible } else { Uniqueness::NotUnique },
        heuristic: true,
        min_ratio: if best.0.is_finite() { best.0 } else { 0.0 },
        threshold,
        samples,
        worst: best.1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfDualVerdict {
    SelfDualConsistent,
    NotSelfDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfDualTest {
    /// `sum_i K[i][s(i)] * mu`.
    pub sum: f64,
    pub verdict: SelfDualVerdict,
}

/// `sum_i K[i][s(i)] * mu`; zero exactly when `s` is an involution.
pub fn selfdual_test(kernel: &AntiSymmetricKernel, s: &Permutation, mu: f64) -> Result<SelfDualTest> {
    if kernel.n() != s.len() {
        return Err(Error::LengthMismatch { expected: kernel.n(), actual: s.len() });
    }
    let n = s.len();
    let (raw, scale) = if s.is_involution() {
        (0.0 - pair_cancellation(kernel, s), 0.0)
    } else {
        let mut sum = 0.0;
        let mut scale = 0.0;
        for i in 0..n {
            let v = kernel.get(i, s.apply(i));
            sum += v;
            scale += v.abs();
        }
        (sum, scale)
    };
    let sum = raw * mu;
    let consistent = sum.abs() <= 1e-12 * scale * mu;
    Ok(SelfDualTest {
        sum,
        verdict: if consistent { SelfDualVerdict::SelfDualConsistent } else { SelfDualVerdict::NotSelfDual },
    })
}

fn check_involution(dom: &DiscreteDomain, s: &Involution) -> Result<()> {
    if s.len() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: s.len() });
    }
    Ok(())
}

/// `|u_i - grad_1 H(x_s(i), x_i)|` for every index.
pub fn first_identity_residuals(
    dom: &DiscreteDomain,
    field: &SampledField,
    hreg: &RegularHamiltonian,
    s: &Involution,
    h: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_involution(dom, s)?;
    Ok(exec.map(dom.len(), |i| {
        let g = hreg.grad1(dom.point(s.apply(i)), dom.point(i), h);
        dist(field.value(i), &g)
    }))
}

/// `|u_s(i) + grad_2 H(x_s(i), x_i)|` for every index.
pub fn second_identity_residuals(
    dom: &DiscreteDomain,
    field: &SampledField,
    hreg: &RegularHamiltonian,
    s: &Involution,
    h: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_involution(dom, s)?;
    Ok(exec.map(dom.len(), |i| {
        let j = s.apply(i);
        let g = hreg.grad2(dom.point(j), dom.point(i), h);
        let r: Vec<f64> = field.value(j).iter().zip(&g).map(|(u, g)| u + g).collect();
        norm(&r)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub stats: ResidualStats,
    pub residuals: Vec<f64>,
}

/// Diagonal representation `u(x) = grad_1 H(x, x)`; refused for non-monotone fields.
pub fn krauss_check(dom: &DiscreteDomain, field: &SampledField, hreg: &RegularHamiltonian, h: f64) -> Result<IdentityCheck> {
    let mono = check_monotone(dom, field);
    if mono.verdict == Monotonicity::NonMonotone {
        return Err(Error::Precondition(format!(
            "the diagonal representation needs a monotone field; pair {:?} has <x_i - x_j, u_i - u_j> = {:e}",
            mono.worst_pair, mono.min_pairing
        )));
    }
    let residuals = first_identity_residuals(dom, field, hreg, &Involution::identity(dom.len()), h, Execution::default())?;
    Ok(IdentityCheck { stats: ResidualStats::of(&residuals), residuals })
}

pub fn second_identity_check(
    dom: &DiscreteDomain,
    field: &SampledField,
    hreg: &RegularHamiltonian,
    s: &Involution,
    h: f64,
) -> Result<IdentityCheck> {
    let residuals = second_identity_residuals(dom, field, hreg, s, h, Execution::default())?;
    Ok(IdentityCheck { stats: ResidualStats::of(&residuals), residuals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub radius: f64,
    pub covering_radius: f64,
    pub tol_reg: f64,
    pub fd_step: f64,
    pub mesh: f64,
    pub eps_p: f64,
    /// `h + mesh`, the scale residuals are compared against.
    pub residual_scale: f64,
    pub dual_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSummary {
    pub value: f64,
    pub method: DualMethod,
    pub optimality: Optimality,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSummary {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub candidate: Vec<usize>,
    pub is_permutation: bool,
    pub is_involution: bool,
    pub involutive_fraction: f64,
    pub slack_eps: f64,
    /// Involution rounded from the slack pairs.
    pub rounded: Involution,
    pub rounded_value: f64,
    /// `rounded == sigma`; when `false` both optima are reported.
    pub agrees_with_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSummary {
    /// `max_i L_{H_reg}(x_i, u_i) - L_K(x_i, u_i)`.
    pub max_excess: f64,
    pub within_tol: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerIndex {
    pub residual1: Vec<f64>,
    pub residual2: Vec<f64>,
    pub complementarity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub gap: f64,
    pub sigma: Involution,
    pub residual1: ResidualStats,
    pub residual2: ResidualStats,
    pub complementarity: ComplementarityStats,
    pub monotone: MonotoneCheck,
    pub uniqueness: UniquenessCheck,
    pub config: DecomposeConfig,
    pub tolerances: Tolerances,
    pub dual: Option<DualSummary>,
    pub primal: Option<PrimalSummary>,
    pub recovery: RecoverySummary,
    pub selfdual: SelfDualTest,
    pub regularization: RegularizationSummary,
    pub krauss: Option<ResidualStats>,
    /// `false` when the recovered involution differs from `sigma` or the
    /// uniqueness heuristic fails.
    pub sigma_unique: bool,
    pub per_index: PerIndex,
}

impl DecompositionReport {
    /// `false` only when the primal descent stopped at its iteration cap.
    pub fn converged(&self) -> bool {
        self.primal.as_ref().is_none_or(|p| p.converged)
    }
}

/// Dual point set, tolerances and regularized Hamiltonian shared by every run.
pub struct Regularized {
    pub pset: DualPointSet,
    pub tolerances: Tolerances,
    pub hreg: RegularHamiltonian,
}

pub fn regularize_kernel(
    dom: &DiscreteDomain,
    field: &SampledField,
    kernel: &AntiSymmetricKernel,
    cfg: &DecomposeConfig,
) -> Result<Regularized> {
    cfg.validate()?;
    let radius = BallRadius::new(dom, field, cfg.margin)?;
    let samples = cfg.sphere_samples.unwrap_or(SPHERE_SAMPLES_PER_DIM * dom.dim());
    let pset = DualPointSet::build(field, radius, samples)?;
    let measured = RegularizationTolerance::measure(&pset, cfg.seed);
    let r = radius.value();
    let fd_step = cfg.fd_step.unwrap_or(FD_STEP_FACTOR * r);
    let tolerances = Tolerances {
        radius: r,
        covering_radius: measured.covering_radius,
        tol_reg: cfg.tol_reg.unwrap_or(measured.tol_reg),
        fd_step,
        mesh: dom.mesh(),
        eps_p: cfg.primal.tol,
        residual_scale: fd_step + dom.mesh(),
        dual_points: pset.len(),
    };
    let hreg = regularize_with(kernel, dom, &pset, cfg.exec)?;
    Ok(Regularized { pset, tolerances, hreg })
}

/// Measurements shared by [`decompose`] and [`verify`].
fn assemble_report(
    dom: &DiscreteDomain,
    field: &SampledField,
    kernel: &AntiSymmetricKernel,
    sigma: Involution,
    dual: Option<DualSummary>,
    primal: Option<PrimalSummary>,
    cfg: &DecomposeConfig,
) -> Result<DecompositionReport> {
    let exec = cfg.exec;
    let mu = dom.cell_measure();
    let reg = regularize_kernel(dom, field, kernel, cfg)?;
    let tol = reg.tolerances;
    let h = tol.fd_step;

    let cert = primal::weak_duality(dom, field, kernel, &sigma)?;
    let residual1 = first_identity_residuals(dom, field, &reg.hreg, &sigma, h, exec)?;
    let residual2 = second_identity_residuals(dom, field, &reg.hreg, &sigma, h, exec)?;
    let monotone = check_monotone_with(dom, field, exec);
    let du = cfg.jacobian_radius.unwrap_or(1.5 * dom.mesh());
    let uniqueness = check_uniqueness_with(dom, field, du, cfg.seed, exec);

    let eps = recovery_eps(cert.primal, cert.dual, mu);
    let rec = recover_involution(kernel, dom, field, eps)?;
    let rounded = round_recovery(dom, field, &rec)?;
    let agrees = rounded.sigma == sigma;

    let regk = reg.hreg.grid_kernel();
    let excess = exec.map(dom.len(), |i| {
        let p = field.value(i);
        reg.hreg.regularized_lagrangian(i, p) - crate::conjugacy::l_of_h_at(kernel, dom, i, p).value
    });
    let max_excess = if excess.is_empty() { 0.0 } else { max_of(&excess) };
    debug_assert_eq!(regk.n(), dom.len());

    let krauss = if monotone.verdict != Monotonicity::NonMonotone {
        let id = Involution::identity(dom.len());
        let r = first_identity_residuals(dom, field, &reg.hreg, &id, h, exec)?;
        Some(ResidualStats::of(&r))
    } else {
        None
    };

    let selfdual = selfdual_test(kernel, &sigma, mu)?;
    let sigma_unique = agrees && uniqueness.verdict == Uniqueness::UniquenessPlausible;
    let slack = cert.slack;
    Ok(DecompositionReport {
        p: cert.primal,
        d: cert.dual,
        gap: cert.gap,
        sigma,
        residual1: ResidualStats::of(&residual1),
        residual2: ResidualStats::of(&residual2),
        complementarity: ComplementarityStats {
            min: if slack.is_empty() { 0.0 } else { min_of(&slack) },
            max: if slack.is_empty() { 0.0 } else { max_of(&slack) },
            sum: slack.iter().sum::<f64>() * mu,
        },
        monotone,
        uniqueness,
        config: *cfg,
        tolerances: tol,
        dual,
        primal,
        recovery: RecoverySummary {
            candidate: rec.candidate,
            is_permutation: rec.is_permutation,
            is_involution: rec.is_involution,
            involutive_fraction: rec.involutive_fraction,
            slack_eps: eps,
            rounded: rounded.sigma,
            rounded_value: rounded.value,
            agrees_with_sigma: agrees,
        },
        selfdual,
        regularization: RegularizationSummary { max_excess, within_tol: max_excess <= tol.tol_reg },
        krauss,
        sigma_unique,
        per_index: PerIndex { residual1, residual2, complementarity: slack },
    })
}

/// Full pipeline: dual solve, primal descent, regularization and diagnostics.
pub fn decompose(dom: &DiscreteDomain, field: &SampledField, cfg: &DecomposeConfig) -> Result<DecompositionReport> {
    cfg.validate()?;
    let dual_cfg = DualConfig { exec: cfg.exec, ..cfg.dual };
    let primal_cfg = PrimalConfig { exec: cfg.exec, ..cfg.primal };
    let dual_sol: DualSolution = dual::solve(dom, field, &dual_cfg)?;
    let mut primal_sol = primal::minimize_primal(dom, field, &primal_cfg)?;
    primal_sol.attach_dual(dual_sol.value);
    let dual = DualSummary {
        value: dual_sol.value,
        method: dual_sol.method,
        optimality: dual_sol.optimality,
        bound: dual_sol.bound,
    };
    let primal = PrimalSummary {
        value: primal_sol.value,
        iterations: primal_sol.iterations,
        converged: primal_sol.converged,
        lower_bound: primal_sol.lower_bound,
    };
    assemble_report(dom, field, &primal_sol.kernel, dual_sol.sigma, Some(dual), Some(primal), cfg)
}

/// Runs every check on a supplied kernel and involution, without solving.
pub fn verify(
    dom: &DiscreteDomain,
    field: &SampledField,
    kernel: &AntiSymmetricKernel,
    sigma: &Involution,
    cfg: &DecomposeConfig,
) -> Result<DecompositionReport> {
    cfg.validate()?;
    if kernel.n() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: kernel.n() });
    }
    assemble_report(dom, field, kernel, sigma.clone(), None, None, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, make_kernel, sample_field, DomainSpec};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn sincos(n: usize) -> (DiscreteDomain, SampledField) {
        let dom = build_grid(&DomainSpec::interval(0.0, PI, n)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0].sin() + x[0] * x[0].cos()]).unwrap();
        (dom, field)
    }

    fn tent(n: usize) -> (DiscreteDomain, SampledField) {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, n)).unwrap();
        let field = sample_field(&dom, |x| vec![if x[0] <= 0.5 { 2.0 * x[0] } else { 3.0 - 2.0 * x[0] }]).unwrap();
        (dom, field)
    }

    fn square(cells: usize) -> DiscreteDomain {
        build_grid(&DomainSpec::symmetric_square(1.0, cells)).unwrap()
    }

    #[test]
    fn monotone_verdicts() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 20)).unwrap();
        let id = sample_field(&dom, |x| vec![x[0]]).unwrap();
        assert_eq!(check_monotone(&dom, &id).verdict, Monotonicity::StrictlyMonotone);
        let flat = sample_field(&dom, |_| vec![1.0]).unwrap();
        assert_eq!(check_monotone(&dom, &flat).verdict, Monotonicity::Monotone);
        let (dom, f) = sincos(32);
        let m = check_monotone(&dom, &f);
        assert_eq!(m.verdict, Monotonicity::NonMonotone);
        assert!(m.worst_pair.is_some() && m.min_pairing < 0.0);
        let sq = square(8);
        let gs = sample_field(&sq, |x| vec![2.0 * x[0] + x[1], 2.0 * x[1] - x[0]]).unwrap();
        assert_eq!(check_monotone(&sq, &gs).verdict, Monotonicity::StrictlyMonotone);
    }

    #[test]
    fn uniqueness_verdicts() {
        let sq = square(8);
        let field = sample_field(&sq, |x| vec![x[1], 0.0]).unwrap();
        let u = check_uniqueness(&sq, &field, 1.5 * sq.mesh(), 1);
        assert_eq!(u.verdict, Uniqueness::UniquenessPlausible, "{u:?}");
        assert!(u.heuristic);

        let (dom, f) = tent(32);
        assert_eq!(check_uniqueness(&dom, &f, 1.5 * dom.mesh(), 1).verdict, Uniqueness::NotUnique);

        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 32)).unwrap();
        let f = sample_field(&dom, |x| vec![x[0] + 0.3 * x[0] * x[0]]).unwrap();
        assert_eq!(check_uniqueness(&dom, &f, 1.5 * dom.mesh(), 1).verdict, Uniqueness::UniquenessPlausible);
    }

    #[test]
    fn jacobian_of_linear_field_is_exact() {
        let sq = square(6);
        let field = sample_field(&sq, |x| vec![x[0] + 2.0 * x[1], -3.0 * x[0]]).unwrap();
        for j in jacobians(&sq, &field, 1.5 * sq.mesh(), Execution::Sequential) {
            let expected = [1.0, 2.0, -3.0, 0.0];
            for (a, b) in j.iter().zip(expected) {
                assert!((a - b).abs() < 1e-10, "{j:?}");
            }
        }
    }

    #[test]
    fn selfdual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10;
        for _ in 0..100 {
            let upper = (0..n * (n - 1) / 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = AntiSymmetricKernel::from_upper(n, upper).unwrap();
            let s = Involution::from_pairs(n, &[(0, 3), (5, 9)]).unwrap();
            let t = selfdual_test(&k, &s, 0.1).unwrap();
            assert_eq!(t.sum.to_bits(), 0.0f64.to_bits());
            assert_eq!(t.verdict, SelfDualVerdict::SelfDualConsistent);
        }
        // f(x) - f(y) is blind to every permutation
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 6)).unwrap();
        let k = make_kernel(&dom, |x, y| x[0] * x[0] - y[0] * y[0]).unwrap();
        let cyc = Permutation::new(vec![1, 2, 0, 4, 5, 3]).unwrap();
        let t = selfdual_test(&k, &cyc, dom.cell_measure()).unwrap();
        assert_eq!(t.verdict, SelfDualVerdict::SelfDualConsistent, "{t:?}");

        // rotation by a quarter turn is measure preserving but not self-dual
        let sq = square(6);
        let k = make_kernel(&sq, |x, y| -x[1] * y[0] + x[0] * y[1]).unwrap();
        let rot = sq.induced_permutation(|x| vec![x[1], -x[0]]).unwrap();
        let t = selfdual_test(&k, &rot, sq.cell_measure()).unwrap();
        let norms: f64 = sq.points().map(|x| dot(x, x)).sum::<f64>() * sq.cell_measure();
        assert!((t.sum + norms).abs() <= 1e-12 * norms);
        assert_eq!(t.verdict, SelfDualVerdict::NotSelfDual);
    }

    #[test]
    fn sincos_decomposition() {
        let n = 64;
        let (dom, field) = sincos(n);
        let rep = decompose(&dom, &field, &DecomposeConfig::default()).unwrap();
        let hits = (0..n).filter(|&i| rep.sigma.apply(i) == n - 1 - i).count();
        assert!(hits as f64 >= 0.95 * n as f64);
        assert!((rep.d - PI).abs() <= 0.02 * PI && (rep.p - PI).abs() <= 0.02 * PI);
        assert!(rep.residual1.median <= 0.1, "{:?}", rep.residual1);
        assert!(rep.residual2.median <= 0.1, "{:?}", rep.residual2);
        assert!(rep.gap >= -1e-12 * rep.p.abs());
        assert!(rep.complementarity.min >= -1e-12);
        assert!((rep.complementarity.sum - rep.gap).abs() <= 1e-12 * rep.p.abs());
        assert_eq!(rep.monotone.verdict, Monotonicity::NonMonotone);
        assert!(rep.krauss.is_none());
        assert!(rep.regularization.within_tol, "{:?} vs {}", rep.regularization, rep.tolerances.tol_reg);
        assert_eq!(rep.selfdual.sum, 0.0);
        assert!(rep.converged());
    }

    #[test]
    fn monotone_decomposition() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 8)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0]]).unwrap();
        let rep = decompose(&dom, &field, &DecomposeConfig::default()).unwrap();
        assert_eq!(rep.sigma, Involution::identity(8));
        assert!(rep.gap <= 1e-9, "gap {}", rep.gap);
        let k = rep.krauss.unwrap();
        assert!(k.median <= 3.0 * rep.tolerances.residual_scale + 0.05, "{k:?}");
        assert!(rep.recovery.agrees_with_sigma);
    }

    #[test]
    fn krauss_refuses_non_monotone() {
        let (dom, field) = sincos(16);
        let reg = regularize_kernel(&dom, &field, &AntiSymmetricKernel::zeros(16), &DecomposeConfig::default()).unwrap();
        assert!(matches!(krauss_check(&dom, &field, &reg.hreg, 1e-4), Err(Error::Precondition(_))));
    }

    #[test]
    fn krauss_on_analytic_hamiltonians() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 32)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0]]).unwrap();
        let k = make_kernel(&dom, |x, y| 0.5 * x[0] * x[0] - 0.5 * y[0] * y[0]).unwrap();
        let reg = regularize_kernel(&dom, &field, &k, &DecomposeConfig::default()).unwrap();
        let c = krauss_check(&dom, &field, &reg.hreg, 1e-4).unwrap();
        assert!(c.stats.median <= 2.0 * (1e-4 + dom.mesh()), "{:?}", c.stats);

        let sq = square(8);
        let a = [[0.0, 0.5], [-0.5, 0.0]];
        let field = sample_field(&sq, |x| {
            vec![2.0 * x[0] + a[0][0] * x[0] + a[0][1] * x[1], 2.0 * x[1] + a[1][0] * x[0] + a[1][1] * x[1]]
        })
        .unwrap();
        // H = phi(x) - phi(y) - <Ax, y>, phi = |x|^2
        let k = make_kernel(&sq, |x, y| {
            let ax = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
            dot(x, x) - dot(y, y) - dot(&ax, y)
        })
        .unwrap();
        let reg = regularize_kernel(&sq, &field, &k, &DecomposeConfig::default()).unwrap();
        let c = krauss_check(&sq, &field, &reg.hreg, 1e-4).unwrap();
        assert!(c.stats.median <= 5.0 * (1e-4 + sq.mesh()), "{:?}", c.stats);
    }

    #[test]
    fn second_identity_consistency() {
        let (dom, field) = sincos(32);
        let k = make_kernel(&dom, |x, y| x[0] * y[0].sin() - y[0] * x[0].sin()).unwrap();
        let reg = regularize_kernel(&dom, &field, &k, &DecomposeConfig::default()).unwrap();
        let s = Involution::reversal(32);
        let h = 1e-4 * reg.tolerances.radius;
        let c = second_identity_check(&dom, &field, &reg.hreg, &s, h).unwrap();
        assert!(c.stats.median <= 0.1, "{:?}", c.stats);
        // grad2 at (x_s(i), x_i) is -grad1 at the swapped arguments
        for i in (0..32).step_by(5) {
            let (xs, xi) = (dom.point(s.apply(i)), dom.point(i));
            let g2 = reg.hreg.grad2(xs, xi, h);
            let g1 = reg.hreg.grad1(xi, xs, h);
            assert_eq!(g2[0], -g1[0]);
        }
    }

    #[test]
    fn verify_runs_without_solving() {
        let (dom, field) = sincos(32);
        let k = make_kernel(&dom, |x, y| x[0] * y[0].sin() - y[0] * x[0].sin()).unwrap();
        let rep = verify(&dom, &field, &k, &Involution::reversal(32), &DecomposeConfig::default()).unwrap();
        assert!(rep.dual.is_none() && rep.primal.is_none());
        assert!(rep.complementarity.min >= -1e-12);
        assert!(rep.residual1.median <= 0.1);
    }

    #[test]
    fn report_round_trips() {
        let (dom, field) = tent(8);
        let rep = decompose(&dom, &field, &DecomposeConfig::default()).unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        for key in ["\"P\"", "\"D\"", "\"gap\"", "\"sigma\"", "\"residual1\"", "\"residual2\"", "\"complementarity\"", "\"monotone\"", "\"uniqueness\"", "\"config\""] {
            assert!(text.contains(key), "missing {key}");
        }
        let back: DecompositionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        let again = decompose(&dom, &field, &DecomposeConfig::default()).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), text);
    }

    #[test]
    fn config_validation() {
        let bad = DecomposeConfig { fd_step: Some(0.0), ..DecomposeConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = DecomposeConfig { sphere_samples: Some(0), ..DecomposeConfig::default() };
        assert!(bad.validate().is_err());
        assert!(DecomposeConfig::default().validate().is_ok());
    }
}
