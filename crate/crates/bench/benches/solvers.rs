use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use poissonpr::admm::{run_admm, AdmmConfig};
use poissonpr::mm::{curvature_optimal_numeric, run_mm, CurvatureKind, MmConfig, OPTIMAL_GRID_POINTS};
use poissonpr::wf::{run_wf, Backtracking, StepRule, WfConfig};
use poissonpr::{DiffOp, HuberTv, Monitor, Problem, Regularizer, C64};
use poissonpr_bench::{canonical_dft, gaussian, masked_dft, Instance};

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("operator");
    for (name, inst) in [
        ("gaussian-64x1024", gaussian(64, 1024, 1)),
        ("masked-dft-256x4", masked_dft(256, 4, 1)),
        ("canonical-dft-32", canonical_dft(32, 1)),
    ] {
        let model = inst.objective.model();
        let x = inst.x0.values().to_vec();
        let v = model.apply(&x).unwrap();
        g.bench_function(BenchmarkId::new("apply", name), |b| b.iter(|| model.apply(black_box(&x)).unwrap()));
        g.bench_function(BenchmarkId::new("adjoint", name), |b| b.iter(|| model.adjoint(black_box(&v)).unwrap()));
    }
    g.finish();
}

fn ten_iterations(c: &mut Criterion) {
    let inst: Instance = gaussian(64, 1024, 2);
    let reg = Regularizer::HuberTv(HuberTv::new(32.0, 0.1, DiffOp::Chain { n: 64 }).unwrap());
    let mut g = c.benchmark_group("ten-iterations");
    g.sample_size(20);
    for (label, r) in [("plain", None), ("huber-tv", Some(&reg))] {
        let pb = Problem::new(&inst.objective, r, inst.field);
        let mon = Monitor::none();
        g.bench_function(BenchmarkId::new("wf-fisher", label), |b| {
            b.iter(|| run_wf(&pb, &WfConfig::new(StepRule::FisherPoisson, 10), &inst.x0, &mon))
        });
        g.bench_function(BenchmarkId::new("wf-backtracking", label), |b| {
            let rule = StepRule::Backtracking(Backtracking::default());
            b.iter(|| run_wf(&pb, &WfConfig::new(rule, 10), &inst.x0, &mon))
        });
        g.bench_function(BenchmarkId::new("mm-improved", label), |b| {
            b.iter(|| run_mm(&pb, &MmConfig::new(CurvatureKind::Improved, 10), &inst.x0, &mon))
        });
        g.bench_function(BenchmarkId::new("admm", label), |b| {
            b.iter(|| run_admm(&pb, &AdmmConfig::new(10), &inst.x0, &mon))
        });
    }
    g.finish();
}

fn curvature(c: &mut Criterion) {
    c.bench_function("curvature-optimal-numeric", |b| {
        b.iter(|| curvature_optimal_numeric(black_box(C64::new(1.3, 0.4)), 3.0, 0.1, OPTIMAL_GRID_POINTS).unwrap())
    });
}

criterion_group!(benches, operators, ten_iterations, curvature);
criterion_main!(benches);
