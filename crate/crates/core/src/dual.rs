//! The dual problem: maximize `sum_i <u_i, x_sigma(i)> mu` over involutions.
//!
//! Writing an involution as a set of 2-cycles plus fixed points gives
//! `D(sigma) = mu * (sum_i diag_i + sum_{pairs} w'_ij)` with reduced weights
//! `w'_ij = W_ij - diag_i - diag_j`, so the exact optimum is a maximum-weight
//! (not necessarily perfect) matching on `w'`.

use serde::{Deserialize, Serialize};

use crate::assignment::{max_assignment, Assignment};
use crate::domain::{DiscreteDomain, Involution, SampledField};
use crate::exec::Execution;
use crate::matching::{max_weight_matching, scale_weights};
use crate::vecops::{dist, dot};
use crate::{Error, Result};

/// Largest `N` accepted by [`solve_brute`].
pub const BRUTE_MAX_N: usize = 12;

/// Default size above which [`solve`] switches from exact matching to local search.
pub const DEFAULT_LOCAL_THRESHOLD: usize = 2000;

/// Default cap on `N` for the dense [`lp_bound`].
pub const DEFAULT_LP_CAP: usize = 3000;

/// `W[i][j] = <u_i, x_j> + <u_j, x_i>` and `diag[i] = <u_i, x_i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeightMatrix {
    n: usize,
    w: Vec<f64>,
    diag: Vec<f64>,
}

impl PairWeightMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `w'[i][j] = W[i][j] - diag[i] - diag[j]`, the gain of pairing `i` with `j`
    /// over leaving both fixed.
    #[inline]
    pub fn reduced(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j] - self.diag[i] - self.diag[j]
    }

    /// `sum_i diag[i] + sum_{pairs} w'`, the dual objective divided by the cell measure.
    pub fn score(&self, s: &Involution) -> f64 {
        let base: f64 = self.diag.iter().sum();
        base + s.pairs().iter().map(|&(i, j)| self.reduced(i, j)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualMethod {
    Brute,
    Matching,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimality {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub sigma: Involution,
    /// `dual_objective(sigma)`.
    pub value: f64,
    pub method: DualMethod,
    pub optimality: Optimality,
    /// Symmetric doubly-stochastic relaxation value, when computed.
    pub bound: Option<f64>,
}

/// Solver selection for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualSolver {
    /// Matching up to the local-search threshold, local search above it.
    #[default]
    Auto,
    Brute,
    Matching,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub solver: DualSolver,
    pub local_threshold: usize,
    pub local_max_iters: usize,
    pub lp_cap: usize,
    pub exec: Execution,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            solver: DualSolver::Auto,
            local_threshold: DEFAULT_LOCAL_THRESHOLD,
            local_max_iters: 100_000,
            lp_cap: DEFAULT_LP_CAP,
            exec: Execution::default(),
        }
    }
}

fn check_lengths(dom: &DiscreteDomain, field: &SampledField) -> Result<()> {
    if field.len() != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: field.len() });
    }
    if field.dim() != dom.dim() {
        return Err(Error::DimensionMismatch { expected: dom.dim(), actual: field.dim() });
    }
    Ok(())
}

fn check_sigma(dom: &DiscreteDomain, len: usize) -> Result<()> {
    if len != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: len });
    }
    Ok(())
}

/// `sum_i <u_i, x_s(i)> * mu`.
pub fn dual_objective(dom: &DiscreteDomain, field: &SampledField, s: &Involution) -> Result<f64> {
    check_lengths(dom, field)?;
    check_sigma(dom, s.len())?;
    let sum: f64 = (0..dom.len()).map(|i| dot(field.value(i), dom.point(s.apply(i)))).sum();
    Ok(sum * dom.cell_measure())
}

/// `sum_i |u_i - x_s(i)|^2 * mu`.
pub fn distance_objective(dom: &DiscreteDomain, field: &SampledField, s: &Involution) -> Result<f64> {
    check_lengths(dom, field)?;
    check_sigma(dom, s.len())?;
    let sum: f64 = (0..dom.len())
        .map(|i| dist(field.value(i), dom.point(s.apply(i))).powi(2))
        .sum();
    Ok(sum * dom.cell_measure())
}

/// `sum_i (|u_i|^2 + |x_i|^2) * mu`, the involution-independent part of
/// `distance_objective`.
pub fn energy(dom: &DiscreteDomain, field: &SampledField) -> f64 {
    let sum: f64 = (0..dom.len())
        .map(|i| dot(field.value(i), field.value(i)) + dot(dom.point(i), dom.point(i)))
        .sum();
    sum * dom.cell_measure()
}

/// Row-major `c[i][j] = <u_i, x_j>`.
pub(crate) fn profit_matrix(dom: &DiscreteDomain, field: &SampledField, exec: Execution) -> Vec<f64> {
    let n = dom.len();
    let mut c = vec![0.0; n * n];
    exec.fill_rows(&mut c, n, |i, row| {
        let u = field.value(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = dot(u, dom.point(j));
        }
    });
    c
}

pub fn build_weights(dom: &DiscreteDomain, field: &SampledField) -> Result<PairWeightMatrix> {
    build_weights_with(dom, field, Execution::default())
}

pub fn build_weights_with(dom: &DiscreteDomain, field: &SampledField, exec: Execution) -> Result<PairWeightMatrix> {
    check_lengths(dom, field)?;
    let n = dom.len();
    let c = profit_matrix(dom, field, exec);
    let mut w = vec![0.0; n * n];
    // floating-point addition commutes, so W is symmetric bit-for-bit
    exec.fill_rows(&mut w, n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c[i * n + j] + c[j * n + i];
        }
    });
    let diag = (0..n).map(|i| c[i * n + i]).collect();
    Ok(PairWeightMatrix { n, w, diag })
}

/// Calls `f` on every involution of `{0, …, n-1}` in lexicographic order of
/// the image vector; returns the number enumerated.
pub fn for_each_involution<F: FnMut(&[usize])>(n: usize, mut f: F) -> u64 {
    fn rec<F: FnMut(&[usize])>(sigma: &mut [usize], start: usize, f: &mut F) -> u64 {
        let n = sigma.len();
        let Some(i) = (start..n).find(|&i| sigma[i] == usize::MAX) else {
            f(sigma);
            return 1;
        };
        sigma[i] = i;
        let mut count = rec(sigma, i + 1, f);
        for j in i + 1..n {
            if sigma[j] == usize::MAX {
                sigma[i] = j;
                sigma[j] = i;
                count += rec(sigma, i + 1, f);
                sigma[j] = usize::MAX;
            }
        }
        sigma[i] = usize::MAX;
        count
    }
    let mut sigma = vec![usize::MAX; n];
    rec(&mut sigma, 0, &mut f)
}

/// Number of involutions on `n` elements: `I(n) = I(n-1) + (n-1) I(n-2)`.
pub fn involution_count(n: usize) -> u128 {
    let (mut a, mut b) = (1u128, 1u128);
    for k in 2..=n {
        let c = b + (k as u128 - 1) * a;
        a = b;
        b = c;
    }
    b
}

/// Exhaustive search; ties keep the lexicographically smallest image vector.
pub fn solve_brute(dom: &DiscreteDomain, field: &SampledField) -> Result<DualSolution> {
    check_lengths(dom, field)?;
    let n = dom.len();
    if n > BRUTE_MAX_N {
        return Err(Error::TooLarge { what: "brute-force involution search", n, limit: BRUTE_MAX_N });
    }
    let weights = build_weights_with(dom, field, Execution::Sequential)?;
    let mut best = Vec::new();
    let mut best_score = f64::NEG_INFINITY;
    for_each_involution(n, |sigma| {
        let score: f64 = (0..n)
            .filter(|&i| sigma[i] > i)
            .map(|i| weights.reduced(i, sigma[i]))
            .sum();
        if score > best_score {
            best_score = score;
            best = sigma.to_vec();
        }
    });
    let sigma = Involution::new(best)?;
    finish(dom, field, sigma, DualMethod::Brute, Optimality::Exact, None)
}

fn finish(
    dom: &DiscreteDomain,
    field: &SampledField,
    sigma: Involution,
    method: DualMethod,
    optimality: Optimality,
    bound: Option<f64>,
) -> Result<DualSolution> {
    let value = dual_objective(dom, field, &sigma)?;
    Ok(DualSolution { sigma, value, method, optimality, bound })
}

/// Maximum-weight matching on the positive reduced weights of the given
/// candidate pairs, scaled to integers.
fn match_pairs(weights: &PairWeightMatrix, candidates: impl Iterator<Item = (usize, usize)>) -> Result<Involution> {
    let n = weights.n();
    let positive: Vec<(usize, usize, f64)> = candidates
        .filter_map(|(i, j)| {
            let w = weights.reduced(i, j);
            (w > 0.0).then_some((i.min(j), i.max(j), w))
        })
        .collect();
    let max_w = positive.iter().map(|e| e.2).fold(0.0, f64::max);
    let scale = scale_weights(max_w);
    let edges: Vec<(usize, usize, i128)> = positive
        .iter()
        .map(|&(i, j, w)| (i, j, 2 * (w * scale).round() as i128))
        .filter(|e| e.2 > 0)
        .collect();
    let mate = max_weight_matching(n, &edges);
    let pairs: Vec<(usize, usize)> = mate
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.filter(|&j| i < j).map(|j| (i, j)))
        .collect();
    Involution::from_pairs(n, &pairs)
}

/// Exact optimum through maximum-weight matching on the reduced weights.
pub fn solve_matching(dom: &DiscreteDomain, field: &SampledField) -> Result<DualSolution> {
    solve_matching_with(dom, field, Execution::default())
}

pub fn solve_matching_with(dom: &DiscreteDomain, field: &SampledField, exec: Execution) -> Result<DualSolution> {
    let weights = build_weights_with(dom, field, exec)?;
    let n = dom.len();
    let sigma = match_pairs(&weights, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))?;
    finish(dom, field, sigma, DualMethod::Matching, Optimality::Exact, None)
}

/// Best involution whose 2-cycles are drawn from `pairs`; optimal only
/// relative to that edge set.
pub fn solve_matching_on(dom: &DiscreteDomain, field: &SampledField, pairs: &[(usize, usize)]) -> Result<DualSolution> {
    let weights = build_weights(dom, field)?;
    let n = dom.len();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n || i == j) {
        return Err(Error::NotPermutation(format!("pair ({i}, {j}) is invalid")));
    }
    let sigma = match_pairs(&weights, pairs.iter().copied())?;
    finish(dom, field, sigma, DualMethod::Matching, Optimality::Heuristic, None)
}

/// Greedy matching on positive reduced weights, heaviest first.
pub fn greedy_involution(weights: &PairWeightMatrix) -> Involution {
    let n = weights.n();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = weights.reduced(i, j);
            if w > 0.0 {
                edges.push((w, i, j));
            }
        }
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut sigma: Vec<usize> = (0..n).collect();
    for (_, i, j) in edges {
        if sigma[i] == i && sigma[j] == j {
            sigma[i] = j;
            sigma[j] = i;
        }
    }
    Involution::new(sigma).expect("greedy pairs are disjoint")
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Break(usize, usize),
    Join(usize, usize),
    Repair { keep: usize, drop: usize, with: usize },
    Swap { a: usize, b: usize, c: usize, d: usize, cross: bool },
}

fn best_move(w: &PairWeightMatrix, sigma: &[usize]) -> Option<(f64, Move)> {
    let n = sigma.len();
    let pairs: Vec<(usize, usize)> = (0..n).filter(|&i| sigma[i] > i).map(|i| (i, sigma[i])).collect();
    let fixed: Vec<usize> = (0..n).filter(|&i| sigma[i] == i).collect();
    let mut best: Option<(f64, Move)> = None;
    let mut offer = |gain: f64, mv: Move| {
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, mv));
        }
    };
    for &(a, b) in &pairs {
        let wab = w.reduced(a, b);
        offer(-wab, Move::Break(a, b));
        for &f in &fixed {
            offer(w.reduced(a, f) - wab, Move::Repair { keep: a, drop: b, with: f });
            offer(w.reduced(b, f) - wab, Move::Repair { keep: b, drop: a, with: f });
        }
    }
    for (x, &f) in fixed.iter().enumerate() {
        for &g in &fixed[x + 1..] {
            offer(w.reduced(f, g), Move::Join(f, g));
        }
    }
    for (x, &(a, b)) in pairs.iter().enumerate() {
        for &(c, d) in &pairs[x + 1..] {
            let old = w.reduced(a, b) + w.reduced(c, d);
            offer(w.reduced(a, c) + w.reduced(b, d) - old, Move::Swap { a, b, c, d, cross: false });
            offer(w.reduced(a, d) + w.reduced(b, c) - old, Move::Swap { a, b, c, d, cross: true });
        }
    }
    best
}

fn apply_move(sigma: &mut [usize], mv: Move) {
    let mut pair = |i: usize, j: usize| {
        sigma[i] = j;
        sigma[j] = i;
    };
    match mv {
        Move::Break(a, b) => {
            pair(a, a);
            pair(b, b);
        }
        Move::Join(f, g) => pair(f, g),
        Move::Repair { keep, drop, with } => {
            pair(drop, drop);
            pair(keep, with);
        }
        Move::Swap { a, b, c, d, cross } => {
            if cross {
                pair(a, d);
                pair(b, c);
            } else {
                pair(a, c);
                pair(b, d);
            }
        }
    }
}

/// Best-improvement hill climbing over break, join, re-pair and swap moves.
///
/// Returns the solution and the score history (dual value after each
/// accepted move, starting with the initial value).
pub fn refine_local_trace(
    dom: &DiscreteDomain,
    field: &SampledField,
    start: &Involution,
    max_iters: usize,
) -> Result<(DualSolution, Vec<f64>)> {
    let weights = build_weights(dom, field)?;
    check_sigma(dom, start.len())?;
    let n = dom.len();
    let mu = dom.cell_measure();
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            scale = scale.max(weights.reduced(i, j).abs());
        }
    }
    // accepted gains exceed rounding in the score, so the value never decreases
    let min_gain = 1e-12 * (1.0 + scale);
    let mut sigma = start.as_slice().to_vec();
    let mut score = weights.score(start);
    let mut history = vec![score * mu];
    for _ in 0..max_iters {
        match best_move(&weights, &sigma) {
            Some((gain, mv)) if gain > min_gain => {
                apply_move(&mut sigma, mv);
                score += gain;
                history.push(score * mu);
            }
            _ => break,
        }
    }
    let sigma = Involution::new(sigma)?;
    let sol = finish(dom, field, sigma, DualMethod::Local, Optimality::Heuristic, None)?;
    Ok((sol, history))
}

pub fn refine_local(dom: &DiscreteDomain, field: &SampledField, start: &Involution, max_iters: usize) -> Result<DualSolution> {
    refine_local_trace(dom, field, start, max_iters).map(|(s, _)| s)
}

/// Optimal value and potentials of the symmetric doubly-stochastic relaxation.
#[derive(Debug, Clone)]
pub struct LpRelaxation {
    /// Relaxation value including the cell measure.
    pub value: f64,
    /// Assignment solving the symmetrized profit `(c_ij + c_ji) / 2`.
    pub assignment: Assignment,
}

/// Solves `max sum pi_ij <u_i, x_j> mu` over symmetric doubly-stochastic `pi`.
///
/// Symmetrizing any doubly-stochastic matrix keeps the symmetrized objective,
/// so the relaxation is the assignment problem on `(c + c^T) / 2`.
pub fn lp_relaxation(dom: &DiscreteDomain, field: &SampledField, cap: usize) -> Result<LpRelaxation> {
    check_lengths(dom, field)?;
    let n = dom.len();
    if n > cap {
        return Err(Error::TooLarge { what: "dense LP relaxation", n, limit: cap });
    }
    let weights = build_weights(dom, field)?;
    let profit: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i == j {
                weights.diag(i)
            } else {
                0.5 * weights.get(i, j)
            }
        })
        .collect();
    let assignment = max_assignment(n, &profit);
    Ok(LpRelaxation { value: assignment.value * dom.cell_measure(), assignment })
}

pub fn lp_bound(dom: &DiscreteDomain, field: &SampledField, cap: usize) -> Result<f64> {
    lp_relaxation(dom, field, cap).map(|r| r.value)
}

/// Runs the configured solver and attaches the LP bound when within its cap.
pub fn solve(dom: &DiscreteDomain, field: &SampledField, cfg: &DualConfig) -> Result<DualSolution> {
    let n = dom.len();
    let mut sol = match cfg.solver {
        DualSolver::Brute => solve_brute(dom, field)?,
        DualSolver::Matching => solve_matching_with(dom, field, cfg.exec)?,
        DualSolver::Auto if n <= cfg.local_threshold => solve_matching_with(dom, field, cfg.exec)?,
        DualSolver::Auto | DualSolver::Local => {
            let weights = build_weights_with(dom, field, cfg.exec)?;
            let start = greedy_involution(&weights);
            refine_local(dom, field, &start, cfg.local_max_iters)?
        }
    };
    if n <= cfg.lp_cap {
        sol.bound = Some(lp_bound(dom, field, cfg.lp_cap)?);
    }
    Ok(sol)
}
