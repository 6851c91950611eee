//! The primal problem: minimize `P(K) = sum_i L_K(x_i, u_i) mu` over
//! anti-symmetric kernels.
//!
//! `P` is a maximum of affine functions of the `N(N-1)/2` free entries, so it
//! is minimized by projected-free subgradient descent. Its LP dual is the
//! symmetric doubly-stochastic relaxation, whose value is the Polyak target.

use serde::{Deserialize, Serialize};

use crate::conjugacy::l_of_h_at;
use crate::domain::{AntiSymmetricKernel, DiscreteDomain, Permutation, SampledField};
use crate::dual::{lp_relaxation, profit_matrix, solve_matching_on, DualSolution, LpRelaxation, DEFAULT_LP_CAP};
use crate::exec::Execution;
use crate::vecops::dot;
use crate::{Error, Result};

fn check_inputs(dom: &DiscreteDomain, field: &SampledField, kernel: &AntiSymmetricKernel) -> Result<()> {
    if field.len() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: field.len() });
    }
    if field.dim() != dom.dim() {
        return Err(Error::DimensionMismatch { expected: dom.dim(), actual: field.dim() });
    }
    if kernel.n() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: kernel.n() });
    }
    Ok(())
}

/// `sum_i max_j (<x_j, u_i> - K[j][i]) * mu`.
pub fn primal_objective(dom: &DiscreteDomain, field: &SampledField, kernel: &AntiSymmetricKernel) -> Result<f64> {
    check_inputs(dom, field, kernel)?;
    let sum: f64 = (0..dom.len())
        .map(|i| l_of_h_at(kernel, dom, i, field.value(i)).value)
        .sum();
    Ok(sum * dom.cell_measure())
}

/// Weak-duality certificate for a kernel and an involution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCertificate {
    pub primal: f64,
    pub dual: f64,
    /// `primal - dual`.
    pub gap: f64,
    /// `L_K(x_i, u_i) + K[s(i)][i] - <u_i, x_s(i)>`, non-negative up to rounding.
    pub slack: Vec<f64>,
    /// `sum_i K[s(i)][i]`, summed pair by pair.
    pub cancellation: f64,
}

/// `sum_i K[s(i)][i]` with each 2-cycle added as one term `K[j][i] + K[i][j]`.
///
/// The two entries are exact negatives, so each term and the total are `0.0`
/// for every involution.
pub fn pair_cancellation(kernel: &AntiSymmetricKernel, s: &Permutation) -> f64 {
    let mut sum = 0.0;
    for i in 0..s.len() {
        let j = s.apply(i);
        if j > i {
            sum += kernel.get(j, i) + kernel.get(i, j);
        } else if j == i {
            sum += kernel.get(i, i);
        }
    }
    sum
}

pub fn weak_duality(
    dom: &DiscreteDomain,
    field: &SampledField,
    kernel: &AntiSymmetricKernel,
    s: &Permutation,
) -> Result<DualityCertificate> {
    check_inputs(dom, field, kernel)?;
    if s.len() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: s.len() });
    }
    if let Some(index) = (0..s.len()).find(|&i| s.apply(s.apply(i)) != i) {
        return Err(Error::NotInvolution { index });
    }
    let mu = dom.cell_measure();
    let n = dom.len();
    let mut lh = Vec::with_capacity(n);
    let mut slack = Vec::with_capacity(n);
    let mut pairing = Vec::with_capacity(n);
    for i in 0..n {
        let u = field.value(i);
        let l = l_of_h_at(kernel, dom, i, u).value;
        let j = s.apply(i);
        let inner = dot(u, dom.point(j));
        slack.push(l + kernel.get(j, i) - inner);
        lh.push(l);
        pairing.push(inner);
    }
    let primal = lh.iter().sum::<f64>() * mu;
    let dual = pairing.iter().sum::<f64>() * mu;
    Ok(DualityCertificate {
        primal,
        dual,
        gap: primal - dual,
        slack,
        cancellation: pair_cancellation(kernel, s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `(P - target) / |g|^2` with the LP value as target.
    #[default]
    Polyak,
    /// `scale / (sqrt(t + 1) |g|)`.
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimalConfig {
    /// Iteration cap; `None` means `50 N^2`.
    pub max_iters: Option<usize>,
    /// Relative stopping tolerance against the LP lower bound.
    pub tol: f64,
    pub step: StepRule,
    /// Largest `N` for which the LP lower bound is computed.
    pub lp_cap: usize,
    pub exec: Execution,
}

impl Default for PrimalConfig {
    fn default() -> Self {
        PrimalConfig {
            max_iters: None,
            tol: 1e-6,
            step: StepRule::Polyak,
            lp_cap: DEFAULT_LP_CAP,
            exec: Execution::default(),
        }
    }
}

impl PrimalConfig {
    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(50 * n * n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub kernel: AntiSymmetricKernel,
    /// `primal_objective(kernel)`.
    pub value: f64,
    pub iterations: usize,
    /// `value - lower_bound <= tol * |value|` was reached, up to an `O(N eps)` rounding floor.
    pub converged: bool,
    /// LP relaxation value, when within the size cap.
    pub lower_bound: Option<f64>,
    /// `j*(i)`, the smallest maximizing index of `L_K(x_i, u_i)`.
    pub argmax_map: Vec<usize>,
    /// `value - D` once a dual solution is attached.
    pub gap_vs_dual: Option<f64>,
}

impl PrimalSolution {
    pub fn attach_dual(&mut self, dual_value: f64) {
        self.gap_vs_dual = Some(self.value - dual_value);
    }
}

/// Dense `M[i][j] = <u_i, x_j> - K[j][i]` with a max tournament tree per row.
///
/// Each row keeps a complete binary tree over its `N` entries whose internal
/// nodes hold the larger child (the left one on ties), so the root is the
/// first maximizing index and a single-entry update costs `O(log N)`.
struct Scores {
    n: usize,
    width: usize,
    c: Vec<f64>,
    m: Vec<f64>,
    /// Per row, `2 * width` node slots holding column indices; slot 1 is the root.
    tree: Vec<u32>,
}

const PAD: u32 = u32::MAX;

impl Scores {
    fn new(c: Vec<f64>, kernel: &AntiSymmetricKernel, exec: Execution) -> Self {
        let n = kernel.n();
        let width = n.next_power_of_two().max(1);
        let mut m = vec![0.0; n * n];
        exec.fill_rows(&mut m, n, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = c[i * n + j] - kernel.get(j, i);
            }
        });
        let mut tree = vec![PAD; n * 2 * width];
        let build = |i: usize, t: &mut [u32]| {
            let row = &m[i * n..(i + 1) * n];
            for j in 0..width {
                t[width + j] = if j < n { j as u32 } else { PAD };
            }
            for node in (1..width).rev() {
                t[node] = Self::winner(row, t[2 * node], t[2 * node + 1]);
            }
        };
        if exec.is_parallel() {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                tree.par_chunks_mut(2 * width).enumerate().for_each(|(i, t)| build(i, t));
            }
        } else {
            tree.chunks_mut(2 * width).enumerate().for_each(|(i, t)| build(i, t));
        }
        Scores { n, width, c, m, tree }
    }

    #[inline]
    fn winner(row: &[f64], l: u32, r: u32) -> u32 {
        if r == PAD {
            return l;
        }
        if l == PAD {
            return r;
        }
        if row[r as usize] > row[l as usize] {
            r
        } else {
            l
        }
    }

    #[inline]
    fn argmax(&self, i: usize) -> usize {
        let w = self.width;
        if w == 1 {
            return 0;
        }
        self.tree[i * 2 * w + 1] as usize
    }

    #[inline]
    fn max(&self, i: usize) -> f64 {
        self.m[i * self.n + self.argmax(i)]
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }

    fn value(&self, mu: f64) -> f64 {
        (0..self.n).map(|i| self.max(i)).sum::<f64>() * mu
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (n, w) = (self.n, self.width);
        self.m[i * n + j] = v;
        let row = &self.m[i * n..(i + 1) * n];
        let t = &mut self.tree[i * 2 * w..(i + 1) * 2 * w];
        let mut node = (w + j) / 2;
        while node >= 1 {
            t[node] = Self::winner(row, t[2 * node], t[2 * node + 1]);
            node /= 2;
        }
    }

    /// Writes the two entries that depend on the free variable `k_ab`, `a < b`:
    /// row `a` column `b` sees `K[b][a] = -k_ab`, row `b` column `a` sees `K[a][b] = k_ab`.
    fn refresh_pair(&mut self, a: usize, b: usize, k: f64) {
        let n = self.n;
        self.set(a, b, self.c[a * n + b] - (-k));
        self.set(b, a, self.c[b * n + a] - k);
    }
}

/// Subgradient descent on `P` from the zero kernel.
pub fn minimize_primal(dom: &DiscreteDomain, field: &SampledField, cfg: &PrimalConfig) -> Result<PrimalSolution> {
    minimize_primal_from(dom, field, AntiSymmetricKernel::zeros(dom.len()), cfg)
}

/// Subgradient descent on `P` from a given kernel; returns the best iterate.
pub fn minimize_primal_from(
    dom: &DiscreteDomain,
    field: &SampledField,
    start: AntiSymmetricKernel,
    cfg: &PrimalConfig,
) -> Result<PrimalSolution> {
    check_inputs(dom, field, &start)?;
    if !(cfg.tol > 0.0) {
        return Err(Error::Config(format!("primal tolerance must be positive, got {}", cfg.tol)));
    }
    let n = dom.len();
    let mu = dom.cell_measure();
    let exec = cfg.exec;
    let lower_bound = if n <= cfg.lp_cap { Some(lp_relaxation(dom, field, cfg.lp_cap)?.value) } else { None };
    let c = profit_matrix(dom, field, exec);
    let scale = c.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(f64::MIN_POSITIVE);

    let mut kernel = start;
    let mut scores = Scores::new(c, &kernel, exec);
    let mut value = scores.value(mu);
    let mut best_value = value;
    let mut best_upper = kernel.upper().to_vec();
    // entries changed since the best iterate was last synchronized
    let mut log: Vec<usize> = Vec::new();
    let mut log_overflow = false;
    let mut iterations = 0;

    // rounding floor of an N-term sum of profits, for optima near zero
    let floor = 4.0 * n as f64 * f64::EPSILON * scale * mu * n as f64;
    let done = |v: f64| lower_bound.is_some_and(|lb| v - lb <= cfg.tol * v.abs() + floor);
    let mut converged = done(best_value);
    let cap = cfg.iteration_cap(n);

    let mut grad = vec![0.0f64; kernel.upper().len()];
    let mut touched: Vec<(usize, usize, usize)> = Vec::with_capacity(n);
    let slot = |a: usize, b: usize| a * (2 * n - a - 1) / 2 + (b - a - 1);

    while !converged && iterations < cap && n > 1 {
        // subgradient in the free upper-triangle variables
        touched.clear();
        for i in 0..n {
            let j = scores.argmax(i);
            if j == i {
                continue;
            }
            let (a, b, g) = if j < i { (j, i, -mu) } else { (i, j, mu) };
            let s = slot(a, b);
            if grad[s] == 0.0 {
                touched.push((s, a, b));
            }
            grad[s] += g;
        }
        let norm2: f64 = touched.iter().map(|&(s, _, _)| grad[s] * grad[s]).sum();
        if norm2 == 0.0 {
            // zero subgradient: the current kernel is optimal
            for &(s, _, _) in &touched {
                grad[s] = 0.0;
            }
            converged = lower_bound.is_none() || done(value);
            break;
        }
        let t = match (cfg.step, lower_bound) {
            (StepRule::Polyak, Some(lb)) => (value - lb).max(cfg.tol * value.abs() * 1e-3) / norm2,
            _ => scale / ((iterations as f64 + 1.0).sqrt() * norm2.sqrt()),
        };
        iterations += 1;

        for &(s, a, b) in &touched {
            let upper = kernel.upper_mut();
            upper[s] -= t * grad[s];
            grad[s] = 0.0;
            let k = upper[s];
            scores.refresh_pair(a, b, k);
            if !log_overflow {
                log.push(s);
            }
        }
        if log.len() >= best_upper.len() {
            log_overflow = true;
            log.clear();
        }
        value = scores.value(mu);

        if value < best_value {
            best_value = value;
            if log_overflow {
                best_upper.copy_from_slice(kernel.upper());
                log_overflow = false;
            } else {
                for &s in &log {
                    best_upper[s] = kernel.upper()[s];
                }
            }
            log.clear();
            converged = done(best_value);
        }
    }

    let kernel = AntiSymmetricKernel::from_upper(n, best_upper)?;
    let value = primal_objective(dom, field, &kernel)?;
    let argmax_map = (0..n).map(|i| l_of_h_at(&kernel, dom, i, field.value(i)).index).collect();
    Ok(PrimalSolution {
        kernel,
        value,
        iterations,
        converged: converged || done(value),
        lower_bound,
        argmax_map,
        gap_vs_dual: None,
    })
}

/// Inverse of the strict-upper-triangle slot numbering.
#[cfg(test)]
fn slot_pair(n: usize, s: usize) -> (usize, usize) {
    let mut a = 0;
    let mut start = 0;
    loop {
        let row = n - a - 1;
        if s < start + row {
            return (a, a + 1 + (s - start));
        }
        start += row;
        a += 1;
    }
}

/// Optimal kernel read off the LP dual potentials.
///
/// With `c_ij = <u_i, x_j>` and assignment potentials `a, b` of the
/// symmetrized profit, `K[j][i] = (c_ij - c_ji) / 2 + b_j - b_i` gives
/// `L_K(x_i, u_i) <= a_i + b_i`, so `P(K)` equals the LP value.
pub fn lp_certificate_kernel(dom: &DiscreteDomain, field: &SampledField, lp: &LpRelaxation) -> Result<AntiSymmetricKernel> {
    let n = dom.len();
    if lp.assignment.col_of_row.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: lp.assignment.col_of_row.len() });
    }
    let b = &lp.assignment.col_potential;
    let c = profit_matrix(dom, field, Execution::default());
    AntiSymmetricKernel::from_fn(n, |j, i| 0.5 * (c[i * n + j] - c[j * n + i]) + b[j] - b[i])
}

/// Candidate map read off the argmax of `L_K(x_i, u_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub candidate: Vec<usize>,
    pub is_permutation: bool,
    pub is_involution: bool,
    /// Fraction of indices with `candidate(candidate(i)) == i`.
    pub involutive_fraction: f64,
    /// Unordered pairs `(i, j)`, `i < j`, tight within `eps` in both directions.
    pub slack_pairs: Vec<(usize, usize)>,
}

pub fn recover_involution(
    kernel: &AntiSymmetricKernel,
    dom: &DiscreteDomain,
    field: &SampledField,
    eps: f64,
) -> Result<Recovery> {
    check_inputs(dom, field, kernel)?;
    let n = dom.len();
    let c = profit_matrix(dom, field, Execution::default());
    let scores = Scores::new(c, kernel, Execution::default());
    let slack = |i: usize, j: usize| scores.max(i) - scores.entry(i, j);
    // among the eps-maximizers of row i, prefer the partner whose own row is tightest at i
    let candidate: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = scores.argmax(i);
            let mut best_back = slack(best, i);
            for j in 0..n {
                if slack(i, j) <= eps {
                    let back = slack(j, i);
                    if back < best_back || (back == best_back && j < best) {
                        best = j;
                        best_back = back;
                    }
                }
            }
            best
        })
        .collect();
    let is_permutation = Permutation::new(candidate.clone()).is_ok();
    let involutive = (0..n).filter(|&i| candidate[candidate[i]] == i).count();
    let is_involution = is_permutation && involutive == n;
    let mut slack_pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if slack(i, j) <= eps && slack(j, i) <= eps {
                slack_pairs.push((i, j));
            }
        }
    }
    Ok(Recovery {
        candidate,
        is_permutation,
        is_involution,
        involutive_fraction: if n == 0 { 1.0 } else { involutive as f64 / n as f64 },
        slack_pairs,
    })
}

/// Rounds a recovery to an involution by matching over its slack pairs.
pub fn round_recovery(dom: &DiscreteDomain, field: &SampledField, recovery: &Recovery) -> Result<DualSolution> {
    solve_matching_on(dom, field, &recovery.slack_pairs)
}

/// Slack threshold under which every pair of an optimal involution is tight:
/// the per-index slacks of `(K, sigma)` sum to `(P - D) / mu`.
pub fn recovery_eps(primal: f64, dual: f64, mu: f64) -> f64 {
    2.0 * (primal - dual).max(0.0) / mu + 1e-12 * (1.0 + primal.abs() / mu)
}
