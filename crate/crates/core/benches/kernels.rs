//! Sequential against parallel execution of the heavy kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use selfdual_core::builtin::{BuiltinField, BuiltinName};
use selfdual_core::conjugacy::restricted_dual_with;
use selfdual_core::domain::{BallRadius, DualPointSet};
use selfdual_core::dual::build_weights_with;
use selfdual_core::exec::Execution;
use selfdual_core::factorize::{decompose, DecomposeConfig};
use selfdual_core::primal::{minimize_primal, PrimalConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn weights(c: &mut Criterion) {
    let mut g = c.benchmark_group("pair_weights");
    let (dom, field) = BuiltinField::new(BuiltinName::Matrix).build(1024).unwrap();
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, dom.len()), &exec, |b, &e| b.iter(|| build_weights_with(&dom, &field, e).unwrap()));
    }
    g.finish();
}

fn restricted_dual(c: &mut Criterion) {
    let mut g = c.benchmark_group("restricted_dual");
    let b = BuiltinField::new(BuiltinName::Sincos);
    let (dom, field) = b.build(128).unwrap();
    let kernel = b.kernel(&dom).unwrap();
    let pset = DualPointSet::build(&field, BallRadius::new(&dom, &field, 0.05).unwrap(), 64).unwrap();
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, dom.len()), &exec, |bch, &e| bch.iter(|| restricted_dual_with(&kernel, &dom, &pset, e)));
    }
    g.finish();
}

fn primal(c: &mut Criterion) {
    let mut g = c.benchmark_group("primal");
    g.sample_size(10);
    let (dom, field) = BuiltinField::new(BuiltinName::Sincos).build(128).unwrap();
    for (name, exec) in MODES {
        let cfg = PrimalConfig { exec, ..PrimalConfig::default() };
        g.bench_with_input(BenchmarkId::new(name, dom.len()), &cfg, |b, cfg| b.iter(|| minimize_primal(&dom, &field, cfg).unwrap()));
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("decompose");
    g.sample_size(10);
    let (dom, field) = BuiltinField::new(BuiltinName::Sincos).build(64).unwrap();
    for (name, exec) in MODES {
        let mut cfg = DecomposeConfig { exec, ..DecomposeConfig::default() };
        cfg.dual.exec = exec;
        cfg.primal.exec = exec;
        g.bench_with_input(BenchmarkId::new(name, dom.len()), &cfg, |b, cfg| b.iter(|| decompose(&dom, &field, cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, weights, restricted_dual, primal, pipeline);
criterion_main!(benches);
