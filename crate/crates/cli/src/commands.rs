//! Subcommand implementations. Each returns `Ok(true)` when every solver
//! converged and `Ok(false)` when a non-convergence flag was raised.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use selfdual_core::builtin::{BuiltinField, BuiltinName};
use selfdual_core::domain::{build_grid, AntiSymmetricKernel, DiscreteDomain, Involution, Permutation, SampledField};
use selfdual_core::dual::{self, dual_objective, distance_objective, DualConfig};
use selfdual_core::factorize::{self, DecompositionReport};
use selfdual_core::io;
use selfdual_core::primal::{self, recover_involution, recovery_eps, round_recovery, PrimalConfig};
use selfdual_core::transport::{self, TransportMap};

use crate::config::RunConfig;
use crate::error::CliError;

/// Cell counts of the gallery runs.
pub const GALLERY_SIZES: [usize; 3] = [16, 32, 64];

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::unreadable(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::unreadable(path, e))
}

/// Writes pretty JSON plus a newline to `path`, or to stdout.
fn emit<T: Serialize>(value: &T, path: Option<&PathBuf>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Schema(e.to_string()))?;
    text.push('\n');
    write_text(&text, path)
}

fn write_text(text: &str, path: Option<&PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::unreadable(p, e))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Unreadable(format!("stdout: {e}")))
        }
    }
}

pub struct Problem {
    pub dom: DiscreteDomain,
    pub field: SampledField,
    pub builtin: Option<BuiltinField>,
}

pub fn load_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    if let Some(b) = cfg.builtin_field() {
        let (dom, field) = b.build(cfg.n)?;
        return Ok(Problem { dom, field, builtin: Some(b) });
    }
    match (&cfg.field, &cfg.domain) {
        (Some(fpath), Some(dpath)) => {
            let spec = io::read_domain_json(open(dpath)?)?;
            let dom = build_grid(&spec)?;
            let field = io::read_field_csv(open(fpath)?, &dom)?;
            Ok(Problem { dom, field, builtin: None })
        }
        _ => Err(CliError::Schema("no field source: pass --builtin or --field with --domain".into())),
    }
}

fn write_plot(path: &Path, dom: &DiscreteDomain, field: &SampledField, report: &DecompositionReport) -> Result<(), CliError> {
    let d = dom.dim();
    let mut text = String::new();
    let header: Vec<String> = (0..d)
        .map(|k| format!("x{k}"))
        .chain((0..d).map(|k| format!("u{k}")))
        .chain(["sigma".to_string(), "residual1".to_string()])
        .collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for i in 0..dom.len() {
        let cols: Vec<String> = dom
            .point(i)
            .iter()
            .chain(field.value(i))
            .map(|v| v.to_string())
            .chain([report.sigma.apply(i).to_string(), report.per_index.residual1[i].to_string()])
            .collect();
        let _ = writeln!(text, "{}", cols.join(","));
    }
    write_text(&text, Some(&path.to_path_buf()))
}

pub fn decompose(cfg: &RunConfig) -> Result<bool, CliError> {
    let p = load_problem(cfg)?;
    let report = factorize::decompose(&p.dom, &p.field, &cfg.decompose_config())?;
    emit(&report, cfg.out.as_ref())?;
    if let Some(path) = &cfg.plot {
        write_plot(path, &p.dom, &p.field, &report)?;
    }
    Ok(report.converged())
}

pub fn dual(cfg: &RunConfig) -> Result<bool, CliError> {
    let p = load_problem(cfg)?;
    let dc = cfg.decompose_config();
    let sol = dual::solve(&p.dom, &p.field, &DualConfig { exec: dc.exec, ..dc.dual })?;
    emit(&sol, cfg.out.as_ref())?;
    Ok(true)
}

pub fn primal(cfg: &RunConfig) -> Result<bool, CliError> {
    let p = load_problem(cfg)?;
    let dc = cfg.decompose_config();
    let sol = primal::minimize_primal(&p.dom, &p.field, &PrimalConfig { exec: dc.exec, ..dc.primal })?;
    emit(&sol, cfg.out.as_ref())?;
    Ok(sol.converged)
}

/// Kernel from `--kernel`, else the builtin's closed form, else the LP certificate.
fn verification_kernel(cfg: &RunConfig, p: &Problem) -> Result<AntiSymmetricKernel, CliError> {
    if let Some(path) = &cfg.kernel {
        let k = io::read_kernel_json(open(path)?)?;
        if k.n() != p.dom.len() {
            return Err(CliError::Schema(format!("kernel has n = {} but the domain has {} cells", k.n(), p.dom.len())));
        }
        return Ok(k);
    }
    if let Some(b) = p.builtin.filter(|b| b.factorizing_hamiltonian()) {
        return Ok(b.kernel(&p.dom)?);
    }
    let lp = dual::lp_relaxation(&p.dom, &p.field, cfg.decompose_config().primal.lp_cap)?;
    Ok(primal::lp_certificate_kernel(&p.dom, &p.field, &lp)?)
}

pub fn verify(cfg: &RunConfig) -> Result<bool, CliError> {
    if cfg.sigma.is_none() && cfg.kernel.is_none() {
        return Err(CliError::Schema("verify needs --sigma, --kernel or both".into()));
    }
    let p = load_problem(cfg)?;
    let kernel = verification_kernel(cfg, &p)?;
    let sigma = match &cfg.sigma {
        Some(path) => {
            let s = io::read_sigma_json(open(path)?)?;
            if s.len() != p.dom.len() {
                return Err(CliError::Schema(format!("sigma has {} entries but the domain has {} cells", s.len(), p.dom.len())));
            }
            s
        }
        None => {
            let mu = p.dom.cell_measure();
            let value = primal::primal_objective(&p.dom, &p.field, &kernel)?;
            let lower = dual::lp_bound(&p.dom, &p.field, cfg.decompose_config().primal.lp_cap).unwrap_or(value);
            let rec = recover_involution(&kernel, &p.dom, &p.field, recovery_eps(value, lower, mu))?;
            round_recovery(&p.dom, &p.field, &rec)?.sigma
        }
    };
    let report = factorize::verify(&p.dom, &p.field, &kernel, &sigma, &cfg.decompose_config())?;
    emit(&report, cfg.out.as_ref())?;
    if let Some(path) = &cfg.plot {
        write_plot(path, &p.dom, &p.field, &report)?;
    }
    Ok(true)
}

#[derive(Debug, Serialize)]
struct TransportReport {
    sigma: Vec<usize>,
    is_involution: bool,
    transport_cost: f64,
    distance_objective: Option<f64>,
    relative_difference: Option<f64>,
    total_mass_mu: f64,
    total_mass_nu: f64,
    map: TransportMap,
}

fn nu_path(atoms: &Path) -> PathBuf {
    let stem = atoms.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    atoms.with_file_name(format!("{stem}-nu.csv"))
}

pub fn transport(cfg: &RunConfig) -> Result<bool, CliError> {
    let p = load_problem(cfg)?;
    let sigma: Permutation = match &cfg.sigma {
        Some(path) => {
            let v: Vec<usize> = {
                let value: serde_json::Value =
                    serde_json::from_reader(open(path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
                let arr = value.get("sigma").cloned().unwrap_or(value);
                serde_json::from_value(arr).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
            };
            Permutation::new(v)?
        }
        None => {
            let dc = cfg.decompose_config();
            dual::solve(&p.dom, &p.field, &DualConfig { exec: dc.exec, ..dc.dual })?.sigma.as_permutation().clone()
        }
    };
    if sigma.len() != p.dom.len() {
        return Err(CliError::Schema(format!("sigma has {} entries but the domain has {} cells", sigma.len(), p.dom.len())));
    }
    let (mu, nu) = transport::build_pair_measures(&p.dom, &p.field)?;
    let cost = transport::transport_cost(&p.dom, &p.field, &sigma)?;
    let dist = match Involution::try_from(sigma.clone()) {
        Ok(s) => Some(distance_objective(&p.dom, &p.field, &s)?),
        Err(_) => None,
    };
    let report = TransportReport {
        sigma: sigma.as_slice().to_vec(),
        is_involution: sigma.is_involution(),
        transport_cost: cost,
        distance_objective: dist,
        relative_difference: dist.map(|d| (cost - d).abs() / d.abs().max(f64::MIN_POSITIVE)),
        total_mass_mu: mu.total_mass(),
        total_mass_nu: nu.total_mass(),
        map: transport::parametrize_map(&p.dom, &p.field, &sigma)?,
    };
    if let Some(path) = &cfg.atoms {
        let mut w = create(path)?;
        mu.write_csv(&mut w)?;
        let nupath = nu_path(path);
        let mut w = create(&nupath)?;
        nu.write_csv(&mut w)?;
    }
    emit(&report, cfg.out.as_ref())?;
    Ok(true)
}

/// Closed-form involution evaluated next to the solver's optimum.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSigma {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GalleryRow {
    pub builtin: BuiltinName,
    pub n: usize,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub gap: f64,
    pub residual1_median: f64,
    pub residual2_median: f64,
    pub converged: bool,
    pub sigma_unique: bool,
    /// Value of the involution rounded from the primal kernel when it differs from `sigma`.
    pub alternative_d: Option<f64>,
    pub references: Vec<ReferenceSigma>,
}

fn references(b: &BuiltinField, dom: &DiscreteDomain, field: &SampledField) -> Result<Vec<ReferenceSigma>, CliError> {
    let n = dom.len();
    let mut out = Vec::new();
    let mut push = |name, s: Involution| -> Result<(), CliError> {
        out.push(ReferenceSigma { name, value: dual_objective(dom, field, &s)? });
        Ok(())
    };
    match b.name {
        BuiltinName::Sincos => push("reflection", Involution::reversal(n))?,
        BuiltinName::Tent => {
            push("reflection", Involution::reversal(n))?;
            if n.is_multiple_of(2) {
                let pairs: Vec<(usize, usize)> = (0..n / 2).map(|i| (i, i + n / 2)).collect();
                push("half-shift", Involution::from_pairs(n, &pairs)?)?;
            }
        }
        BuiltinName::Matrix => {
            let s = dom.induced_permutation(|x| b.expected_map(x))?;
            if let Ok(s) = Involution::try_from(s) {
                push("swap", s)?;
            }
        }
        BuiltinName::Monotone1d | BuiltinName::Gradskew | BuiltinName::RotationJ => push("identity", Involution::identity(n))?,
    }
    Ok(out)
}

pub fn gallery_rows(cfg: &RunConfig) -> Result<Vec<GalleryRow>, CliError> {
    let dc = cfg.decompose_config();
    let mut rows = Vec::new();
    for name in BuiltinName::ALL {
        for n in GALLERY_SIZES {
            let b = match (name, cfg.matrix) {
                (BuiltinName::Matrix | BuiltinName::Gradskew, Some(m)) => BuiltinField::with_matrix(name, m),
                _ => BuiltinField::new(name),
            };
            let (dom, field) = b.build(n)?;
            let rep = factorize::decompose(&dom, &field, &dc)?;
            let alternative_d = (!rep.recovery.agrees_with_sigma).then_some(rep.recovery.rounded_value);
            rows.push(GalleryRow {
                builtin: name,
                n: dom.len(),
                p: rep.p,
                d: rep.d,
                gap: rep.gap,
                residual1_median: rep.residual1.median,
                residual2_median: rep.residual2.median,
                converged: rep.converged(),
                sigma_unique: rep.sigma_unique,
                alternative_d,
                references: references(&b, &dom, &field)?,
            });
        }
    }
    Ok(rows)
}

pub fn gallery_table(rows: &[GalleryRow]) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<11} {:>4} {:>12} {:>12} {:>10} {:>9} {:>9} {:>5} {:>6} {:>12}  references",
        "builtin", "N", "P", "D", "gap", "res1 med", "res2 med", "conv", "unique", "alt D"
    );
    for r in rows {
        let alt = r.alternative_d.map_or("-".to_string(), |v| format!("{v:.6}"));
        let refs: Vec<String> = r.references.iter().map(|s| format!("{}={:.6}", s.name, s.value)).collect();
        let _ = writeln!(
            t,
            "{:<11} {:>4} {:>12.6} {:>12.6} {:>10.3e} {:>9.4} {:>9.4} {:>5} {:>6} {:>12}  {}",
            r.builtin.as_str(),
            r.n,
            r.p,
            r.d,
            r.gap,
            r.residual1_median,
            r.residual2_median,
            r.converged,
            r.sigma_unique,
            alt,
            refs.join(" ")
        );
    }
    t
}

pub fn gallery(cfg: &RunConfig) -> Result<bool, CliError> {
    let rows = gallery_rows(cfg)?;
    write_text(&gallery_table(&rows), None)?;
    if let Some(path) = &cfg.out {
        emit(&rows, Some(path))?;
    }
    Ok(rows.iter().all(|r| r.converged))
}
