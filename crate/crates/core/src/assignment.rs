//! Dense linear assignment (Hungarian method, shortest augmenting paths).

/// Optimal assignment together with dual potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `col_of_row[i]` is the column assigned to row `i`.
    pub col_of_row: Vec<usize>,
    /// Total profit of the assignment.
    pub value: f64,
    /// Row potentials `a` with `profit[i][j] <= a[i] + b[j]`.
    pub row_potential: Vec<f64>,
    /// Column potentials `b`.
    pub col_potential: Vec<f64>,
}

/// Maximizes `sum_i profit[i][col_of_row[i]]` over permutations.
///
/// `profit` is row-major `n x n`. Potentials are tight on assigned cells and
/// feasible everywhere up to rounding.
pub fn max_assignment(n: usize, profit: &[f64]) -> Assignment {
    assert_eq!(profit.len(), n * n, "profit matrix must be n x n");
    if n == 0 {
        return Assignment { col_of_row: Vec::new(), value: 0.0, row_potential: Vec::new(), col_potential: Vec::new() };
    }
    // minimize cost = -profit; 1-based with a virtual column 0
    let cost = |i: usize, j: usize| -profit[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[p[j] - 1] = j - 1;
    }
    let value = col_of_row.iter().enumerate().map(|(i, &j)| profit[i * n + j]).sum();
    Assignment {
        col_of_row,
        value,
        row_potential: u[1..].iter().map(|x| -x).collect(),
        col_potential: v[1..].iter().map(|x| -x).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(n: usize, profit: &[f64]) -> f64 {
        fn rec(i: usize, n: usize, profit: &[f64], used: &mut [bool]) -> f64 {
            if i == n {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.max(profit[i * n + j] + rec(i + 1, n, profit, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, n, profit, &mut vec![false; n])
    }

    #[test]
    fn matches_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..=7);
            let profit: Vec<f64> = (0..n * n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = max_assignment(n, &profit);
            let b = brute(n, &profit);
            assert!((a.value - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} vs {}", a.value, b);
            let mut seen = vec![false; n];
            for &j in &a.col_of_row {
                assert!(!seen[j]);
                seen[j] = true;
            }
            for i in 0..n {
                for j in 0..n {
                    let slack = a.row_potential[i] + a.col_potential[j] - profit[i * n + j];
                    assert!(slack >= -1e-12, "potential infeasible by {slack}");
                }
                let j = a.col_of_row[i];
                let tight = a.row_potential[i] + a.col_potential[j] - profit[i * n + j];
                assert!(tight.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(max_assignment(0, &[]).value, 0.0);
        let a = max_assignment(1, &[3.5]);
        assert_eq!(a.col_of_row, vec![0]);
        assert_eq!(a.value, 3.5);
    }
}
