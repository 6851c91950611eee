//! Restricted Fenchel conjugation and the regularized Hamiltonian.
//!
//! Every supremum over the domain is a maximum over grid points and every
//! supremum over the ball `B_R` is a maximum over a [`DualPointSet`]. The
//! chain is
//!
//! ```text
//! L_H(x, p)    = max_y  <y, p> - H(y, x)
//! L*(q, y)     = max_{x, p} <y, p> + <q, x> - L_H(x, p)
//! L**(y, q)    = max_{x, p} <y, p> + <q, x> - L*(p, x)
//! H_L(x, y)    = max_p  <x, p> - L(y, p)
//! H_reg(x, y)  = (H_{L**}(x, y) - H_{L**}(y, x)) / 2
//! ```
//!
//! with `x, y` ranging over the grid and `p, q` over the dual points. Only
//! the `L*` table is stored; everything after it is evaluated on demand and
//! is defined at arbitrary points of `R^d`.

use std::sync::OnceLock;

use crate::domain::{AntiSymmetricKernel, DiscreteDomain, DualPointSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::vecops::dot;

/// A maximum together with the (smallest) index attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgMax {
    pub value: f64,
    pub index: usize,
}

/// `L_H(x_i, p) = max_j <x_j, p> - K[j][i]` for one grid index.
pub fn l_of_h_at(kernel: &AntiSymmetricKernel, dom: &DiscreteDomain, i: usize, p: &[f64]) -> ArgMax {
    let mut best = ArgMax {
        value: f64::NEG_INFINITY,
        index: 0,
    };
    for j in 0..dom.len() {
        let v = dot(dom.point(j), p) - kernel.get(j, i);
        if v > best.value {
            best = ArgMax { value: v, index: j };
        }
    }
    best
}

/// `L_H(x_i, p)` for every grid index `i`, with argmax indices.
pub fn l_of_h(kernel: &AntiSymmetricKernel, dom: &DiscreteDomain, p: &[f64]) -> Vec<ArgMax> {
    (0..dom.len()).map(|i| l_of_h_at(kernel, dom, i, p)).collect()
}

/// `out[j * M + k] = <x_j, p_k>`.
fn grid_dual_products(dom: &DiscreteDomain, pset: &DualPointSet, exec: Execution) -> Vec<f64> {
    let m = pset.len();
    let mut out = vec![0.0; dom.len() * m];
    exec.fill_rows(&mut out, m, |j, row| {
        let x = dom.point(j);
        for (k, v) in row.iter_mut().enumerate() {
            *v = dot(x, pset.point(k));
        }
    });
    out
}

/// `L_H(x_i, p_k)` for all grid points and dual points, row-major `[i * M + k]`.
pub fn lagrangian_table(
    kernel: &AntiSymmetricKernel,
    dom: &DiscreteDomain,
    pset: &DualPointSet,
    exec: Execution,
) -> Vec<f64> {
    let xp = grid_dual_products(dom, pset, exec);
    lagrangian_table_from(kernel, dom.len(), pset.len(), &xp, exec)
}

fn lagrangian_table_from(
    kernel: &AntiSymmetricKernel,
    n: usize,
    m: usize,
    xp: &[f64],
    exec: Execution,
) -> Vec<f64> {
    let mut lh = vec![0.0; n * m];
    exec.fill_rows(&mut lh, m, |i, row| {
        row.fill(f64::NEG_INFINITY);
        for j in 0..n {
            let kji = kernel.get(j, i);
            for (r, &a) in row.iter_mut().zip(&xp[j * m..(j + 1) * m]) {
                *r = r.max(a - kji);
            }
        }
    });
    lh
}

/// The restricted dual `L*_H(q_k, x_j)` on dual points × grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LStarTable {
    values: Vec<f64>,
    n: usize,
    m: usize,
}

impl LStarTable {
    /// `L*(p_k, x_j)`.
    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n + j]
    }

    /// Row `k`: `L*(p_k, x_j)` for all grid points `j`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn grid_len(&self) -> usize {
        self.n
    }

    pub fn dual_len(&self) -> usize {
        self.m
    }
}

/// Tabulates `L*_H(q, y) = max_{x, p} <y, p> + <q, x> - L_H(x, p)`.
pub fn restricted_dual(
    kernel: &AntiSymmetricKernel,
    dom: &DiscreteDomain,
    pset: &DualPointSet,
) -> LStarTable {
    restricted_dual_with(kernel, dom, pset, Execution::default())
}

pub fn restricted_dual_with(
    kernel: &AntiSymmetricKernel,
    dom: &DiscreteDomain,
    pset: &DualPointSet,
    exec: Execution,
) -> LStarTable {
    let (n, m) = (dom.len(), pset.len());
    let xp = grid_dual_products(dom, pset, exec);
    let lh = lagrangian_table_from(kernel, n, m, &xp, exec);

    // The joint maximum splits as max_x [<q, x> + max_p (<y, p> - L_H(x, p))];
    // the inner part only depends on the grid pair (x, y).
    let mut inner = vec![0.0; n * n];
    exec.fill_rows(&mut inner, n, |x, row| {
        let lx = &lh[x * m..(x + 1) * m];
        for (y, r) in row.iter_mut().enumerate() {
            let yp = &xp[y * m..(y + 1) * m];
            *r = yp
                .iter()
                .zip(lx)
                .fold(f64::NEG_INFINITY, |acc, (a, l)| acc.max(a - l));
        }
    });

    let mut values = vec![0.0; m * n];
    exec.fill_rows(&mut values, n, |q, row| {
        row.fill(f64::NEG_INFINITY);
        for x in 0..n {
            let qx = xp[x * m + q];
            for (r, g) in row.iter_mut().zip(&inner[x * n..(x + 1) * n]) {
                *r = r.max(qx + g);
            }
        }
    });
    LStarTable { values, n, m }
}

/// `L**_H(x, p) = max_{x', p'} <x, p'> + <p, x'> - L*(p', x')` at an arbitrary point.
pub fn restricted_bidual(
    table: &LStarTable,
    dom: &DiscreteDomain,
    pset: &DualPointSet,
    x: &[f64],
    p: &[f64],
) -> f64 {
    let px: Vec<f64> = dom.points().map(|g| dot(p, g)).collect();
    let mut best = f64::NEG_INFINITY;
    for k in 0..pset.len() {
        let a = dot(x, pset.point(k));
        for (j, &b) in px.iter().enumerate() {
            best = best.max(a + b - table.get(k, j));
        }
    }
    best
}

/// The `B_R`-Hamiltonian `H_L(x, y) = max_p <x, p> - L(y, p)` of a Lagrangian.
pub fn ball_hamiltonian<L>(lagrangian: L, pset: &DualPointSet, x: &[f64], y: &[f64]) -> f64
where
    L: Fn(&[f64], &[f64]) -> f64,
{
    pset.points()
        .map(|p| dot(x, p) - lagrangian(y, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_k <x, p_k> - row[k]`, the `B_R`-Hamiltonian once `L(y, ·)` is tabulated.
fn ball_hamiltonian_row(pset: &DualPointSet, x: &[f64], row: &[f64]) -> f64 {
    pset.points()
        .zip(row)
        .map(|(p, l)| dot(x, p) - l)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The regularized Hamiltonian of a grid kernel, evaluable anywhere in `R^d × R^d`.
///
/// `H_reg` is anti-symmetric bit for bit, bounded by `R|x| + R|y| + 4R^2`,
/// and Lipschitz with constant at most `R` in each argument (every affine
/// piece has a slope taken from the dual point set).
#[derive(Debug)]
pub struct RegularHamiltonian {
    dom: DiscreteDomain,
    pset: DualPointSet,
    lstar: LStarTable,
    /// `<p_k, x_j>`, row-major `[k * N + j]`.
    px: Vec<f64>,
    exec: Execution,
    grid: OnceLock<AntiSymmetricKernel>,
}

/// Builds `H_reg` from a grid kernel.
pub fn regularize(
    kernel: &AntiSymmetricKernel,
    dom: &DiscreteDomain,
    pset: &DualPointSet,
) -> Result<RegularHamiltonian> {
    regularize_with(kernel, dom, pset, Execution::default())
}

pub fn regularize_with(
    kernel: &AntiSymmetricKernel,
    dom: &DiscreteDomain,
    pset: &DualPointSet,
    exec: Execution,
) -> Result<RegularHamiltonian> {
    if kernel.n() != dom.len() {
        return Err(Error::LengthMismatch {
            expected: dom.len(),
            actual: kernel.n(),
        });
    }
    if pset.dim() != dom.dim() {
        return Err(Error::DimensionMismatch {
            expected: dom.dim(),
            actual: pset.dim(),
        });
    }
    let lstar = restricted_dual_with(kernel, dom, pset, exec);
    let n = dom.len();
    let mut px = vec![0.0; pset.len() * n];
    exec.fill_rows(&mut px, n, |k, row| {
        let p = pset.point(k);
        for (j, v) in row.iter_mut().enumerate() {
            *v = dot(p, dom.point(j));
        }
    });
    Ok(RegularHamiltonian {
        dom: dom.clone(),
        pset: pset.clone(),
        lstar,
        px,
        exec,
        grid: OnceLock::new(),
    })
}

impl RegularHamiltonian {
    pub fn domain(&self) -> &DiscreteDomain {
        &self.dom
    }

    pub fn dual_points(&self) -> &DualPointSet {
        &self.pset
    }

    pub fn lstar(&self) -> &LStarTable {
        &self.lstar
    }

    /// Ball radius `R` of the dual point set.
    pub fn radius(&self) -> f64 {
        self.pset.radius()
    }

    /// `L**(y, p_k)` for every dual point `p_k`.
    pub fn bidual_row(&self, y: &[f64]) -> Vec<f64> {
        let (n, m) = (self.dom.len(), self.pset.len());
        // c[j] = max_k <y, p_k> - L*(p_k, x_j)
        let mut c = vec![f64::NEG_INFINITY; n];
        for k in 0..m {
            let a = dot(y, self.pset.point(k));
            for (cj, l) in c.iter_mut().zip(self.lstar.row(k)) {
                *cj = cj.max(a - l);
            }
        }
        (0..m)
            .map(|k| {
                self.px[k * n..(k + 1) * n]
                    .iter()
                    .zip(&c)
                    .fold(f64::NEG_INFINITY, |acc, (a, cj)| acc.max(a + cj))
            })
            .collect()
    }

    /// `L**(x, p)` at an arbitrary point.
    pub fn bidual(&self, x: &[f64], p: &[f64]) -> f64 {
        restricted_bidual(&self.lstar, &self.dom, &self.pset, x, p)
    }

    /// `H_{L**}(x, y)`: convex in `x`, anti-symmetric only after symmetrization.
    pub fn h_bidual(&self, x: &[f64], y: &[f64]) -> f64 {
        ball_hamiltonian_row(&self.pset, x, &self.bidual_row(y))
    }

    /// `H_reg(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let a = self.h_bidual(x, y);
        let b = self.h_bidual(y, x);
        0.5 * (a - b)
    }

    /// `H_{L**}(x_i, x_j)` on the grid, row-major.
    pub fn grid_h_bidual(&self) -> Vec<f64> {
        let n = self.dom.len();
        // column j needs L**(x_j, ·) once
        let cols: Vec<Vec<f64>> = self.exec.map(n, |j| {
            let row = self.bidual_row(self.dom.point(j));
            (0..n)
                .map(|i| ball_hamiltonian_row(&self.pset, self.dom.point(i), &row))
                .collect()
        });
        let mut out = vec![0.0; n * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                out[i * n + j] = *v;
            }
        }
        out
    }

    /// `H_reg` restricted to the grid (computed once, then cached).
    pub fn grid_kernel(&self) -> &AntiSymmetricKernel {
        self.grid.get_or_init(|| {
            let n = self.dom.len();
            let hb = self.grid_h_bidual();
            let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    upper.push(0.5 * (hb[i * n + j] - hb[j * n + i]));
                }
            }
            AntiSymmetricKernel::from_upper(n, upper).expect("finite by construction")
        })
    }

    /// `L_{H_reg}(x_i, p)`, the Lagrangian of the regularized Hamiltonian at a grid point.
    pub fn regularized_lagrangian(&self, i: usize, p: &[f64]) -> f64 {
        l_of_h_at(self.grid_kernel(), &self.dom, i, p).value
    }

    /// Central-difference gradient in the first argument.
    pub fn grad1(&self, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
        grad1(self, x, y, h)
    }

    /// Central-difference gradient in the second argument.
    pub fn grad2(&self, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
        grad2(self, x, y, h)
    }

    /// One-sided difference quotient `(H(x + h u, y) - H(x, y)) / h`.
    pub fn directional1(&self, x: &[f64], y: &[f64], u: &[f64], h: f64) -> f64 {
        let shifted: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + h * b).collect();
        (self.eval(&shifted, y) - self.eval(x, y)) / h
    }
}

/// `(H(x + h e_k, y) - H(x - h e_k, y)) / 2h` for each coordinate `k`.
pub fn grad1(hreg: &RegularHamiltonian, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            xp[k] = x[k] + h;
            let up = hreg.eval(&xp, y);
            xp[k] = x[k] - h;
            let down = hreg.eval(&xp, y);
            xp[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Same scheme as [`grad1`] in the second argument.
pub fn grad2(hreg: &RegularHamiltonian, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut yp = y.to_vec();
    (0..y.len())
        .map(|k| {
            yp[k] = y[k] + h;
            let up = hreg.eval(x, &yp);
            yp[k] = y[k] - h;
            let down = hreg.eval(x, &yp);
            yp[k] = y[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Covering radius of the dual points and the derived tolerance `2 R · cov`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegularizationTolerance {
    pub covering_radius: f64,
    pub tol_reg: f64,
}

impl RegularizationTolerance {
    pub fn measure(pset: &DualPointSet, seed: u64) -> Self {
        let cov = pset.covering_radius(2048 * pset.dim(), seed);
        RegularizationTolerance {
            covering_radius: cov,
            tol_reg: 2.0 * pset.radius() * cov,
        }
    }
}
