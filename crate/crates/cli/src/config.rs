//! Run configuration: JSON file merged with command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use selfdual_core::builtin::{BuiltinField, BuiltinName, Mat2};
use selfdual_core::dual::{DualConfig, DualSolver};
use selfdual_core::exec::Execution;
use selfdual_core::factorize::{DecomposeConfig, DEFAULT_MARGIN};
use selfdual_core::primal::PrimalConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub builtin: Option<BuiltinName>,
    /// `A` for the `matrix` builtin, skew source for `gradskew`.
    pub matrix: Option<Mat2>,
    pub field: Option<PathBuf>,
    pub domain: Option<PathBuf>,
    pub n: usize,
    pub margin: f64,
    pub sphere_samples: Option<usize>,
    pub fd_step: Option<f64>,
    pub solver: DualSolver,
    pub eps_p: f64,
    pub tol_reg: Option<f64>,
    pub seed: u64,
    pub max_iters: Option<usize>,
    pub sequential: bool,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub sigma: Option<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub atoms: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            builtin: None,
            matrix: None,
            field: None,
            domain: None,
            n: 64,
            margin: DEFAULT_MARGIN,
            sphere_samples: None,
            fd_step: None,
            solver: DualSolver::Auto,
            eps_p: PrimalConfig::default().tol,
            tol_reg: None,
            seed: 0,
            max_iters: None,
            sequential: false,
            out: None,
            plot: None,
            sigma: None,
            kernel: None,
            atoms: None,
        }
    }
}

/// Flag values; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// JSON run configuration; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin field: sincos, tent, matrix, gradskew, rotationJ, monotone1d.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Number of cells (per-axis count is round(sqrt(n)) for 2-D builtins).
    #[arg(long)]
    pub n: Option<usize>,
    /// Field CSV with header x0..,u0..
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Domain JSON for a field file.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Matrix as four row-major entries `a,b,c,d`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub matrix: Option<Vec<f64>>,
    /// Relative margin of the ball radius R over the largest |x| or |u|.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Dual points on the sphere of radius R; default 64 times the dimension.
    #[arg(long)]
    pub sphere_samples: Option<usize>,
    /// Finite-difference step for residuals; default 1e-4 R.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// auto, brute, matching or local.
    #[arg(long)]
    pub solver: Option<String>,
    /// Relative stopping tolerance of the primal solver.
    #[arg(long)]
    pub eps_p: Option<f64>,
    /// Tolerance on L_reg - L_H; default 2 R times the covering radius.
    #[arg(long)]
    pub tol_reg: Option<f64>,
    /// Seed for every random sample.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iteration cap of the primal solver; default 50 N^2.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Run every map on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    /// Output file (JSON); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-cell CSV dump: x, u, sigma(x), residual1.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Involution JSON (bare array or an object with `sigma`).
    #[arg(long)]
    pub sigma: Option<PathBuf>,
    /// Kernel JSON (`{n, upper}` or an object with `kernel`).
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Atom CSV export path for the graph measure; the transpose goes to `<stem>-nu.csv`.
    #[arg(long)]
    pub atoms: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<DualSolver, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Schema(format!("unknown solver `{s}` (auto, brute, matching, local)")))
}

impl RunConfig {
    /// Reads `--config` if given, applies flags on top and validates.
    pub fn resolve(flags: &Flags) -> Result<RunConfig, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::unreadable(path, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(b) = &flags.builtin {
            cfg.builtin = Some(b.parse().map_err(|e: selfdual_core::Error| CliError::Schema(e.to_string()))?);
        }
        if let Some(m) = &flags.matrix {
            if m.len() != 4 {
                return Err(CliError::Schema(format!("--matrix takes four entries a,b,c,d, got {}", m.len())));
            }
            cfg.matrix = Some([[m[0], m[1]], [m[2], m[3]]]);
        }
        if let Some(s) = &flags.solver {
            cfg.solver = parse_solver(s)?;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if flags.$f.is_some() { cfg.$f = flags.$f.clone(); } )* };
        }
        take!(field, domain, sphere_samples, fd_step, tol_reg, max_iters, out, plot, sigma, kernel, atoms);
        if let Some(n) = flags.n {
            cfg.n = n;
        }
        if let Some(m) = flags.margin {
            cfg.margin = m;
        }
        if let Some(e) = flags.eps_p {
            cfg.eps_p = e;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        cfg.sequential |= flags.sequential;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Schema(msg));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.builtin.is_some() && self.field.is_some() {
            return bad("give either a builtin or a field file, not both".into());
        }
        if self.field.is_some() != self.domain.is_some() {
            return bad("a field file needs a domain file and vice versa".into());
        }
        if let Some(m) = &self.matrix {
            if !m.iter().flatten().all(|v| v.is_finite()) {
                return bad("matrix entries must be finite".into());
            }
            if !matches!(self.builtin, Some(BuiltinName::Matrix | BuiltinName::Gradskew)) {
                return bad("matrix applies only to the matrix and gradskew builtins".into());
            }
        }
        self.decompose_config().validate().map_err(|e| CliError::Schema(e.to_string()))?;
        if !(self.eps_p > 0.0) {
            return bad(format!("eps_p must be positive, got {}", self.eps_p));
        }
        Ok(())
    }

    /// `true` when the field comes from neither a builtin nor a file.
    pub fn has_field_source(&self) -> bool {
        self.builtin.is_some() || self.field.is_some()
    }

    pub fn builtin_field(&self) -> Option<BuiltinField> {
        self.builtin.map(|name| match self.matrix {
            Some(m) => BuiltinField::with_matrix(name, m),
            None => BuiltinField::new(name),
        })
    }

    pub fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn decompose_config(&self) -> DecomposeConfig {
        let exec = self.exec();
        DecomposeConfig {
            margin: self.margin,
            sphere_samples: self.sphere_samples,
            fd_step: self.fd_step,
            tol_reg: self.tol_reg,
            jacobian_radius: None,
            seed: self.seed,
            dual: DualConfig { solver: self.solver, exec, ..DualConfig::default() },
            primal: PrimalConfig { max_iters: self.max_iters, tol: self.eps_p, exec, ..PrimalConfig::default() },
            exec,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let flags = Flags { builtin: Some("sincos".into()), n: Some(32), ..Flags::default() };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.builtin, Some(BuiltinName::Sincos));
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.margin, 0.05);
    }

    #[test]
    fn schema_violations() {
        for flags in [
            Flags { builtin: Some("sincos".into()), n: Some(0), ..Flags::default() },
            Flags { builtin: Some("nope".into()), ..Flags::default() },
            Flags { builtin: Some("sincos".into()), fd_step: Some(-1.0), ..Flags::default() },
            Flags { builtin: Some("sincos".into()), solver: Some("simplex".into()), ..Flags::default() },
            Flags { builtin: Some("sincos".into()), matrix: Some(vec![1.0, 0.0, 0.0, 1.0]), ..Flags::default() },
            Flags { field: Some("f.csv".into()), ..Flags::default() },
        ] {
            assert!(matches!(RunConfig::resolve(&flags), Err(CliError::Schema(_))), "{flags:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"n": 8, "colour": 1}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"builtin": "rotationJ", "n": 16}"#).unwrap();
        assert_eq!(cfg.builtin, Some(BuiltinName::RotationJ));
    }
}
