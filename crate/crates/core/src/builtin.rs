//! Closed-form example fields, each with its grid and, where known, an
//! anti-symmetric Hamiltonian that factorizes it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::{build_grid, make_kernel, sample_field, AntiSymmetricKernel, DiscreteDomain, DomainSpec, SampledField};
use crate::{Error, Result};

/// A 2x2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Default matrix of the `matrix` builtin.
pub const DEFAULT_MATRIX: Mat2 = [[0.0, 1.0], [0.0, 0.0]];
/// Default skew part of the `gradskew` builtin.
pub const DEFAULT_SKEW: Mat2 = [[0.0, 0.5], [-0.5, 0.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinName {
    /// `u(x) = sin x + x cos x` on `[0, pi]`.
    Sincos,
    /// `u(x) = 2x` on `[0, 1/2]`, `3 - 2x` on `(1/2, 1]`.
    Tent,
    /// `u(x) = A x` on the symmetric square.
    Matrix,
    /// `u(x) = 2x + A x` with `A` skew, the gradient of `|x|^2` plus a rotation.
    Gradskew,
    /// `u(x) = (x2, -x1)` on the symmetric square, paired with `H(x, y) = <Jx, y>`
    /// and the quarter turn `(x1, x2) -> (x2, -x1)`.
    #[serde(rename = "rotationJ")]
    RotationJ,
    /// `u(x) = x` on `[0, 1]`.
    Monotone1d,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 6] = [
        BuiltinName::Sincos,
        BuiltinName::Tent,
        BuiltinName::Matrix,
        BuiltinName::Gradskew,
        BuiltinName::RotationJ,
        BuiltinName::Monotone1d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::Sincos => "sincos",
            BuiltinName::Tent => "tent",
            BuiltinName::Matrix => "matrix",
            BuiltinName::Gradskew => "gradskew",
            BuiltinName::RotationJ => "rotationJ",
            BuiltinName::Monotone1d => "monotone1d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            BuiltinName::Sincos | BuiltinName::Tent | BuiltinName::Monotone1d => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BuiltinName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBuiltin(s.to_string()))
    }
}

/// A builtin field with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinField {
    pub name: BuiltinName,
    /// `A` for `matrix`; for `gradskew` only its skew part is used.
    pub matrix: Mat2,
}

fn mul(a: &Mat2, x: &[f64]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

fn skew(a: &Mat2) -> Mat2 {
    let s = 0.5 * (a[0][1] - a[1][0]);
    [[0.0, s], [-s, 0.0]]
}

/// `|A_s|`, the non-negative factor of the polar decomposition of the symmetric part.
fn abs_symmetric_part(a: &Mat2) -> Mat2 {
    let off = 0.5 * (a[0][1] + a[1][0]);
    let eig = SymmetricEigen::new(Matrix2::new(a[0][0], off, off, a[1][1]));
    let r = eig.eigenvectors * Matrix2::from_diagonal(&eig.eigenvalues.map(f64::abs)) * eig.eigenvectors.transpose();
    [[r[(0, 0)], r[(0, 1)]], [r[(1, 0)], r[(1, 1)]]]
}

impl BuiltinField {
    pub fn new(name: BuiltinName) -> Self {
        let matrix = if name == BuiltinName::Gradskew { DEFAULT_SKEW } else { DEFAULT_MATRIX };
        BuiltinField { name, matrix }
    }

    pub fn with_matrix(name: BuiltinName, matrix: Mat2) -> Self {
        BuiltinField { name, matrix }
    }

    /// Grid with about `n` cells; 2-D builtins use `round(sqrt(n))` cells per axis.
    pub fn domain_spec(&self, n: usize) -> DomainSpec {
        match self.name {
            BuiltinName::Sincos => DomainSpec::interval(0.0, PI, n),
            BuiltinName::Tent | BuiltinName::Monotone1d => DomainSpec::interval(0.0, 1.0, n),
            _ => DomainSpec::symmetric_square(1.0, (n as f64).sqrt().round() as usize),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self.name {
            BuiltinName::Sincos => vec![x[0].sin() + x[0] * x[0].cos()],
            BuiltinName::Tent => vec![if x[0] <= 0.5 { 2.0 * x[0] } else { 3.0 - 2.0 * x[0] }],
            BuiltinName::Monotone1d => vec![x[0]],
            BuiltinName::Matrix => mul(&self.matrix, x).to_vec(),
            BuiltinName::Gradskew => {
                let ax = mul(&skew(&self.matrix), x);
                vec![2.0 * x[0] + ax[0], 2.0 * x[1] + ax[1]]
            }
            BuiltinName::RotationJ => vec![x[1], -x[0]],
        }
    }

    /// Closed-form `H` with `u(x) = grad_1 H(Sx, x)` for the expected `S`, except
    /// `tent` (arguments swapped) and `rotationJ` (`S` the identity).
    pub fn hamiltonian(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.name {
            BuiltinName::Sincos => x[0] * y[0].sin() - y[0] * x[0].sin(),
            BuiltinName::Tent => tent_hamiltonian(x[0], y[0]),
            BuiltinName::Monotone1d => 0.5 * (x[0] * x[0] - y[0] * y[0]),
            BuiltinName::Matrix => {
                let r = abs_symmetric_part(&self.matrix);
                let (rx, ry, ax) = (mul(&r, x), mul(&r, y), mul(&skew(&self.matrix), x));
                0.5 * (rx[0] * x[0] + rx[1] * x[1]) - 0.5 * (ry[0] * y[0] + ry[1] * y[1]) - (ax[0] * y[0] + ax[1] * y[1])
            }
            BuiltinName::Gradskew => {
                let ax = mul(&skew(&self.matrix), x);
                (x[0] * x[0] + x[1] * x[1]) - (y[0] * y[0] + y[1] * y[1]) - (ax[0] * y[0] + ax[1] * y[1])
            }
            // <Jx, y>, J(x1, x2) = (-x2, x1)
            BuiltinName::RotationJ => -x[1] * y[0] + x[0] * y[1],
        }
    }

    /// Image of `x` under the involution the closed-form `H` is paired with.
    /// For `rotationJ` this is the quarter turn, which is not an involution.
    pub fn expected_map(&self, x: &[f64]) -> Vec<f64> {
        match self.name {
            BuiltinName::Sincos => vec![PI - x[0]],
            BuiltinName::Tent => vec![1.0 - x[0]],
            BuiltinName::Monotone1d | BuiltinName::Gradskew => x.to_vec(),
            BuiltinName::Matrix => {
                // S = |A_s|^+ A_s on the range of A_s, identity on its kernel
                let off = 0.5 * (self.matrix[0][1] + self.matrix[1][0]);
                let eig = SymmetricEigen::new(Matrix2::new(self.matrix[0][0], off, off, self.matrix[1][1]));
                let signs = eig.eigenvalues.map(|l| if l < 0.0 { -1.0 } else { 1.0 });
                let s = eig.eigenvectors * Matrix2::from_diagonal(&signs) * eig.eigenvectors.transpose();
                vec![s[(0, 0)] * x[0] + s[(0, 1)] * x[1], s[(1, 0)] * x[0] + s[(1, 1)] * x[1]]
            }
            BuiltinName::RotationJ => vec![x[1], -x[0]],
        }
    }

    /// `true` when `hamiltonian` satisfies `u(x) = grad_1 H(Sx, x)` for some involution `S`.
    pub fn factorizing_hamiltonian(&self) -> bool {
        self.name != BuiltinName::Tent
    }

    pub fn build(&self, n: usize) -> Result<(DiscreteDomain, SampledField)> {
        let dom = build_grid(&self.domain_spec(n))?;
        let field = sample_field(&dom, |x| self.eval(x))?;
        Ok((dom, field))
    }

    pub fn kernel(&self, dom: &DiscreteDomain) -> Result<AntiSymmetricKernel> {
        if dom.dim() != self.name.dim() {
            return Err(Error::DimensionMismatch { expected: self.name.dim(), actual: dom.dim() });
        }
        make_kernel(dom, |x, y| self.hamiltonian(x, y))
    }
}

/// Piecewise bilinear Hamiltonian of the tent field. It represents the field
/// with the arguments in the other order, `u(x) = grad_1 H(x, 1 - x)`.
fn tent_hamiltonian(x: f64, y: f64) -> f64 {
    if x <= 0.5 && y >= 0.5 {
        -2.0 * x * y + 2.0 * x - y - 0.5
    } else if x >= 0.5 && y <= 0.5 {
        2.0 * x * y - 2.0 * y + x + 0.5
    } else {
        x - y
    }
}
