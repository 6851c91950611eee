//! End-to-end decomposition runs.

use selfdual_core::builtin::{BuiltinField, BuiltinName};
use selfdual_core::domain::Involution;
use selfdual_core::exec::Execution;
use selfdual_core::factorize::{decompose, verify, DecomposeConfig};

fn config(exec: Execution) -> DecomposeConfig {
    let mut cfg = DecomposeConfig { exec, ..DecomposeConfig::default() };
    cfg.dual.exec = exec;
    cfg.primal.exec = exec;
    cfg
}

#[test]
fn sequential_and_parallel_reports_are_identical() {
    for (name, n) in [(BuiltinName::Sincos, 32), (BuiltinName::Matrix, 36), (BuiltinName::Tent, 16)] {
        let (dom, field) = BuiltinField::new(name).build(n).unwrap();
        let seq = decompose(&dom, &field, &config(Execution::Sequential)).unwrap();
        let par = decompose(&dom, &field, &config(Execution::Parallel)).unwrap();
        // configs differ only in the execution tag
        let strip = |r: &selfdual_core::factorize::DecompositionReport| {
            let mut v = serde_json::to_value(r).unwrap();
            v.as_object_mut().unwrap().remove("config");
            v
        };
        assert_eq!(strip(&seq), strip(&par), "{name}");
        assert_eq!(seq.p.to_bits(), par.p.to_bits());
    }
}

#[test]
fn decomposition_and_verification_agree() {
    let b = BuiltinField::new(BuiltinName::Sincos);
    let (dom, field) = b.build(32).unwrap();
    let cfg = DecomposeConfig::default();
    let rep = decompose(&dom, &field, &cfg).unwrap();
    assert!(rep.converged());
    assert_eq!(rep.sigma, Involution::reversal(32));
    let kernel = b.kernel(&dom).unwrap();
    let checked = verify(&dom, &field, &kernel, &rep.sigma, &cfg).unwrap();
    assert_eq!(checked.d, rep.d);
    assert!(checked.residual1.median <= 0.1);
    assert!(checked.complementarity.min >= -1e-12);
}

#[test]
fn gradient_plus_skew_matrix_pairs_by_the_swap() {
    let (dom, field) = BuiltinField::new(BuiltinName::Matrix).build(64).unwrap();
    let rep = decompose(&dom, &field, &DecomposeConfig::default()).unwrap();
    let swap = dom.induced_permutation(|x| vec![x[1], x[0]]).unwrap();
    assert!((0..dom.len()).all(|i| rep.sigma.apply(i) == swap.apply(i)));
    assert!(rep.gap <= 1e-5 * rep.p.abs());
}
