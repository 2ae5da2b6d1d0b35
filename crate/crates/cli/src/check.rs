//! Quick invariant self-tests behind the `check` verb.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use poissonpr::admm::update_v_magnitude_bpos;
use poissonpr::mm::{curvature_improved, curvature_max, run_mm, CurvatureKind, MmConfig};
use poissonpr::numerics::{finite_diff_grad, random_unit};
use poissonpr::objectives::{psi, psi_dot};
use poissonpr::vecops::{inner, norm, sub};
use poissonpr::{
    CanonicalDftSpec, DiffOp, FieldTag, ForwardModel, HuberTv, MaskSampling, Monitor, Objective, Problem,
    Regularizer, SignalVector,
};

/// Name, pass flag and a short measurement.
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn adjoint_defect(model: &ForwardModel) -> f64 {
    (0..3u64)
        .map(|k| {
            let x = random_unit(model.cols(), 10 + k, false);
            let y = random_unit(model.rows(), 20 + k, false);
            let ax = model.apply_linear(&x).expect("dims");
            let lhs = inner(&ax, &y);
            let rhs = inner(&x, &model.adjoint(&y).expect("dims"));
            (lhs - rhs).norm() / (norm(&ax) * norm(&y))
        })
        .fold(0.0, f64::max)
}

fn adjoints() -> CheckResult {
    let dense = ForwardModel::gaussian_random(20, 6, 1).expect("valid");
    let file = ForwardModel::from_csv_str(&dense.to_csv_string()).expect("round trip");
    let masked = ForwardModel::masked_dft_random(6, 3, MaskSampling::Bernoulli, 2).expect("valid");
    let canon = ForwardModel::canonical_dft(CanonicalDftSpec::with_defaults((2, 3), vec![1.0; 4], 2)).expect("valid");
    let worst = [dense, file, masked, canon].iter().map(adjoint_defect).fold(0.0, f64::max);
    CheckResult {
        name: "adjoint tests on all model variants",
        pass: worst < 1e-10,
        detail: format!("max defect {worst:.1e}"),
    }
}

fn domination() -> CheckResult {
    let mut worst = f64::INFINITY;
    let mut order = true;
    for i in 0..200 {
        let y = 0.1 * (i % 200) as f64 + 0.1;
        let b = 0.05 + 0.05 * (i % 37) as f64;
        let s = -10.0 + 20.0 * ((i * 7919) % 200) as f64 / 199.0;
        let c = curvature_improved(C64::new(s, 0.0), y, b).expect("finite");
        order &= (2.0 - 1e-12..=curvature_max(y, b).expect("finite") + 1e-12).contains(&c);
        let p = |r: f64| psi(C64::new(r, 0.0), y, b).expect("finite");
        let g = psi_dot(C64::new(s, 0.0), y, b).expect("finite").re;
        for j in 0..=100 {
            let r = -20.0 + 0.4 * j as f64;
            worst = worst.min(p(s) + g * (r - s) + 0.5 * c * (r - s) * (r - s) - p(r));
        }
    }
    CheckResult {
        name: "majorizer domination and curvature ordering",
        pass: worst >= -1e-9 && order,
        detail: format!("min gap {worst:.1e}"),
    }
}

fn gradients() -> CheckResult {
    let model = Arc::new(
        ForwardModel::gaussian_random(18, 6, 3)
            .expect("valid")
            .with_uniform_background(0.1)
            .expect("valid"),
    );
    let y: Vec<f64> = (0..18).map(|i| (i % 3) as f64).collect();
    let x: Vec<C64> = random_unit(6, 4, true);
    let pois = Objective::poisson(Arc::clone(&model), y.clone()).expect("valid");
    let gaus = Objective::gaussian(model, y).expect("valid");
    let reg = Regularizer::HuberTv(HuberTv::new(0.5, 0.1, DiffOp::Chain { n: 6 }).expect("valid"));
    let mut worst = 0.0f64;
    for pb in [
        Problem::new(&pois, None, FieldTag::Real),
        Problem::new(&gaus, None, FieldTag::Real),
        Problem::new(&pois, Some(&reg), FieldTag::Real),
    ] {
        let g = pb.gradient(&x).expect("finite");
        let fd = finite_diff_grad(|z| pb.cost(z), &x, 1e-6, FieldTag::Real).expect("finite");
        worst = worst.max(norm(&sub(&fd, &g)) / norm(&g));
    }
    CheckResult {
        name: "gradients against finite differences",
        pass: worst < 1e-4,
        detail: format!("max relative error {worst:.1e}"),
    }
}

fn admm_cubic() -> CheckResult {
    let mut worst = 0.0f64;
    for i in 0..500 {
        let f = i as f64;
        let (t, y, b, rho) = (
            5.0 * (1.0 + (0.37 * f).sin()),
            (i % 9) as f64,
            0.05 + 2.0 * (1.0 + (0.11 * f).cos()),
            0.5 + (i % 17) as f64,
        );
        let m = update_v_magnitude_bpos(t, y, b, rho).expect("finite");
        let lead = 2.0 + rho;
        let p = lead * m.powi(3) - rho * t * m * m + (2.0 * b - 2.0 * y + rho * b) * m - rho * b * t;
        worst = worst.max((p / lead).abs());
    }
    CheckResult {
        name: "ADMM magnitude cubic residual",
        pass: worst < 1e-9,
        detail: format!("max residual {worst:.1e}"),
    }
}

fn mm_monotone() -> CheckResult {
    let truth: Vec<C64> = (0..16).map(|i| C64::new((2.0 * PI * i as f64 / 16.0).sin().abs(), 0.0)).collect();
    let mut model = ForwardModel::gaussian_random(128, 16, 5)
        .expect("valid")
        .with_uniform_background(0.1)
        .expect("valid");
    model.calibrate_scale(&truth, 0.25).expect("positive");
    let y = model.simulate_poisson(&truth, 6).expect("valid").as_f64();
    let obj = Objective::poisson(model, y).expect("valid");
    let pb = Problem::new(&obj, None, FieldTag::Real);
    let x0 = SignalVector::projected(random_unit(16, 7, true), FieldTag::Real, None);
    let run = run_mm(&pb, &MmConfig::new(CurvatureKind::Improved, 30), &x0, &Monitor::none());
    let mut prev = pb.cost(x0.values()).expect("finite");
    let mut worst = f64::NEG_INFINITY;
    for c in run.costs() {
        worst = worst.max((c - prev) / prev.abs());
        prev = c;
    }
    CheckResult {
        name: "MM cost is non-increasing",
        pass: run.trace.len() == 30 && worst <= 1e-10,
        detail: format!("max relative rise {worst:.1e}"),
    }
}

/// Runs every self-test.
pub fn run_checks() -> Vec<CheckResult> {
    vec![adjoints(), domination(), gradients(), admm_cubic(), mm_monotone()]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for r in super::run_checks() {
            assert!(r.pass, "{}: {}", r.name, r.detail);
        }
    }
}
