//! LBFGS on the (smooth) cost, used as a reference solver.

use std::time::{Duration, Instant};

use crate::eval::{Monitor, RunState, RunStatus};
use crate::numerics::{lbfgs_minimize, pack, unpack, LbfgsConfig};
use crate::objectives::Problem;
use crate::signal::SignalVector;

/// Runs LBFGS for `cfg.iters` iterations. Nonnegativity is not enforced
/// during the iterations; the returned estimate is projected onto the field.
pub fn run_lbfgs(problem: &Problem, cfg: &LbfgsConfig, x0: &SignalVector, monitor: &Monitor) -> RunState {
    let field = problem.field;
    let n = x0.len();
    let dims = x0.dims();
    let start = x0.clone().with_field(field);
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut metric_time = Duration::ZERO;
    let t0 = Instant::now();
    let result = lbfgs_minimize(
        |z| {
            let x = unpack(z, n, field);
            let v = problem.model().apply(&x)?;
            let c = problem.cost_with(&x, &v)?;
            let g = problem.gradient_with(&x, &v)?;
            Ok((c, pack(&g, field)))
        },
        &pack(start.values(), field),
        cfg,
        |k, z, c| {
            let tm = Instant::now();
            let elapsed = tm.duration_since(t0).saturating_sub(metric_time);
            trace.push(monitor.record(k, elapsed, c, &unpack(z, n, field)));
            metric_time += tm.elapsed();
        },
    );
    match result {
        Ok(r) => RunState {
            x: SignalVector::projected(unpack(&r.x, n, field), field, dims),
            trace,
            status: RunStatus::Completed,
            warnings: Vec::new(),
        },
        Err(e) => RunState {
            x: start,
            status: RunStatus::Failed {
                at: trace.len(),
                reason: e.to_string(),
            },
            trace,
            warnings: Vec::new(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ForwardModel;
    use crate::numerics::random_unit;
    use crate::objectives::Objective;
    use crate::signal::FieldTag;
    use crate::vecops::C64;

    #[test]
    fn lbfgs_reaches_noiseless_minimum() {
        let model = ForwardModel::gaussian_random(128, 16, 2).unwrap().with_uniform_background(0.1).unwrap();
        let xt: Vec<C64> = random_unit(16, 3, true).iter().map(|z| z * 2.0).collect();
        let obj = Objective::poisson(model, obj_y(&xt, 2)).unwrap();
        for field in [FieldTag::Real, FieldTag::Complex] {
            let pb = Problem::new(&obj, None, field);
            let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.8 + 0.1).collect(), field, None);
            let cfg = LbfgsConfig {
                iters: 200,
                ..Default::default()
            };
            let run = run_lbfgs(&pb, &cfg, &x0, &Monitor::with_truth(&xt));
            let best = pb.cost(&xt).unwrap();
            let gap = (run.final_cost().unwrap() - best) / best.abs();
            assert!(gap < 1e-8, "{field:?}: gap {gap}");
            assert!(run.costs().windows(2).all(|w| w[1] <= w[0]));
        }
    }

    fn obj_y(xt: &[C64], seed: u64) -> Vec<f64> {
        ForwardModel::gaussian_random(128, 16, seed)
            .unwrap()
            .with_uniform_background(0.1)
            .unwrap()
            .mean_intensity(xt)
            .unwrap()
    }
}
