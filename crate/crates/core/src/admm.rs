//! ADMM on the splitting `v = A x`, with closed-form updates for `v`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::eval::{Monitor, RunState, RunStatus, TraceRecord};
use crate::forward::ForwardModel;
use crate::mm::{mm_update_huber, mm_update_prox_l1, InnerConfig, MajorizerContext, WeightedNormalSolver};
use crate::numerics::cubic_real_roots;
use crate::objectives::{Likelihood, Problem, Regularizer};
use crate::signal::{FieldTag, SignalVector};
use crate::vecops::{norm, sign, sub, C64};

/// Iterate of the ADMM recursion.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: Vec<C64>,
    pub v: Vec<C64>,
    /// Scaled dual variable.
    pub eta: Vec<C64>,
    pub rho: f64,
    pub k: usize,
}

/// `sign(A x - eta)` elementwise, with `sign(0) = 1`.
pub fn update_v_phase(model: &ForwardModel, x: &[C64], eta: &[C64]) -> Result<Vec<C64>> {
    let ax = model.apply(x)?;
    Ok(ax.iter().zip(eta).map(|(a, e)| sign(a - e)).collect())
}

/// Magnitude update for `b = 0`: positive root of
/// `(2 + rho) m^2 - rho t m - 2 y = 0`.
pub fn update_v_magnitude_b0(t: f64, y: f64, rho: f64) -> f64 {
    let rt = rho * t;
    (rt + (rt * rt + 8.0 * y * (2.0 + rho)).sqrt()) / (2.0 * (2.0 + rho))
}

/// Lagrangian term minimized by the magnitude update.
pub fn magnitude_lagrangian(m: f64, t: f64, y: f64, b: f64, rho: f64) -> f64 {
    let q = m * m + b;
    let log_term = if y == 0.0 { 0.0 } else { y * q.ln() };
    q - log_term + 0.5 * rho * (m - t) * (m - t)
}

/// Magnitude update for `b > 0`: among the nonnegative roots of
/// `(2 + rho) m^3 - rho t m^2 + (2b - 2y + rho b) m - rho b t`, the one with
/// the smallest Lagrangian.
pub fn update_v_magnitude_bpos(t: f64, y: f64, b: f64, rho: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("background must be positive, got {b}")));
    }
    let roots = cubic_real_roots(2.0 + rho, -rho * t, 2.0 * b - 2.0 * y + rho * b, -rho * b * t);
    roots
        .into_iter()
        .filter(|&m| m >= 0.0)
        .map(|m| (m, magnitude_lagrangian(m, t, y, b, rho)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(m, _)| m)
        .ok_or_else(|| Error::Degenerate(format!("no nonnegative magnitude root for t={t}, y={y}, b={b}")))
}

/// Full `v` update: phase from `A x - eta`, magnitude per measurement.
pub fn update_v(model: &ForwardModel, y: &[f64], x: &[C64], eta: &[C64], rho: f64) -> Result<Vec<C64>> {
    let ax = model.apply(x)?;
    ax.iter()
        .zip(eta)
        .zip(y)
        .zip(model.background())
        .map(|(((a, e), &yi), &bi)| {
            let u = a - e;
            let t = u.norm();
            let m = if bi == 0.0 {
                update_v_magnitude_b0(t, yi, rho)
            } else {
                update_v_magnitude_bpos(t, yi, bi, rho)?
            };
            Ok(sign(u) * m)
        })
        .collect()
}

/// Least-squares solver for `A' A x = rhs`, chosen once per model.
#[derive(Debug, Clone)]
pub enum LeastSquares {
    /// `A' A` is diagonal (DFT-based models).
    Diagonal(Vec<f64>),
    Normal(WeightedNormalSolver),
}

impl LeastSquares {
    pub fn new(model: &ForwardModel, cfg: InnerConfig) -> Self {
        match model.normal_diagonal() {
            Some(d) => LeastSquares::Diagonal(d),
            None => LeastSquares::Normal(WeightedNormalSolver::new(model, cfg)),
        }
    }
}

/// `x` minimizing `||A x - (v + eta)||^2` (plus `beta R(x) / rho` when
/// regularized). `x_prev` seeds the iterative solvers.
#[allow(clippy::too_many_arguments)]
pub fn update_x(
    model: &ForwardModel,
    field: FieldTag,
    v: &[C64],
    eta: &[C64],
    reg: Option<&Regularizer>,
    rho: f64,
    x_prev: &[C64],
    ls: &LeastSquares,
    cfg: &InnerConfig,
) -> Result<Vec<C64>> {
    let mut target: Vec<C64> = v.iter().zip(eta).map(|(a, b)| a + b).collect();
    if let Some(r) = model.offset() {
        target.iter_mut().zip(&r).for_each(|(t, ri)| *t -= ri);
    }
    let x = match reg {
        None => {
            let mut rhs = model.adjoint(&target)?;
            field.realify(&mut rhs);
            match ls {
                LeastSquares::Diagonal(d) => {
                    if d.iter().any(|&di| di == 0.0) {
                        return Err(Error::Singular("A' A has a zero diagonal entry".into()));
                    }
                    rhs.iter().zip(d).map(|(r, di)| r / di).collect()
                }
                LeastSquares::Normal(s) => s.solve(model, &vec![1.0; model.rows()], &rhs, field, Some(x_prev))?,
            }
        }
        Some(reg) => {
            let resid: Vec<C64> = sub(&model.apply_linear(x_prev)?, &target);
            let mut grad = model.adjoint(&resid)?;
            grad.iter_mut().for_each(|g| *g *= rho);
            field.realify(&mut grad);
            let ctx = MajorizerContext {
                model,
                field,
                anchor: x_prev.to_vec(),
                s: Vec::new(),
                grad,
                weights: vec![rho; model.rows()],
                base: 0.5 * rho * resid.iter().map(|z| z.norm_sqr()).sum::<f64>(),
            };
            match reg {
                Regularizer::HuberTv(h) => mm_update_huber(&ctx, h, cfg)?.x,
                Regularizer::SparseL1(l1) => mm_update_prox_l1(&ctx, l1, cfg)?.x,
            }
        }
    };
    Ok(x)
}

/// `eta + (v - A x)`.
pub fn update_dual(eta: &[C64], v: &[C64], ax: &[C64]) -> Vec<C64> {
    eta.iter().zip(v).zip(ax).map(|((e, vi), a)| e + vi - a).collect()
}

/// Residual balancing, applied when `k` is a positive multiple of 10.
pub fn update_rho(rho: f64, primal: f64, dual: f64, k: usize) -> f64 {
    if k == 0 || k % 10 != 0 {
        rho
    } else if primal > 10.0 * dual {
        2.0 * rho
    } else if dual > 100.0 * rho * primal {
        0.5 * rho
    } else {
        rho
    }
}

/// Settings for [`run_admm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    pub rho0: f64,
    pub iters: usize,
    pub inner: InnerConfig,
}

impl AdmmConfig {
    pub fn new(iters: usize) -> Self {
        Self {
            rho0: 8.0,
            iters,
            inner: InnerConfig::default(),
        }
    }
}

/// Per-iteration ADMM diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmRecord {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub run: RunState,
    pub history: Vec<AdmmRecord>,
    pub state: AdmmState,
}

/// Runs `v`, then `x`, then `eta` updates from `v0 = A x0`, `eta0 = 0`.
pub fn run_admm(problem: &Problem, cfg: &AdmmConfig, x0: &SignalVector, monitor: &Monitor) -> AdmmRun {
    let field = problem.field;
    let dims = x0.dims();
    let model = problem.model();
    let x_start = x0.clone().with_field(field).into_values();
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(cfg.iters);
    let mut history = Vec::with_capacity(cfg.iters);
    let mut status = RunStatus::Completed;
    let mut elapsed = Duration::ZERO;

    let t0 = Instant::now();
    let ls = LeastSquares::new(model, cfg.inner);
    let init = if problem.objective.likelihood() != Likelihood::Poisson {
        Err(Error::InvalidArgument("ADMM magnitude updates assume the Poisson cost".into()))
    } else {
        model.apply(&x_start)
    };
    elapsed += t0.elapsed();
    let mut st = AdmmState {
        x: x_start,
        v: Vec::new(),
        eta: vec![C64::new(0.0, 0.0); model.rows()],
        rho: cfg.rho0,
        k: 0,
    };
    match init {
        Ok(v0) => st.v = v0,
        Err(e) => {
            status = RunStatus::Failed {
                at: 0,
                reason: e.to_string(),
            };
        }
    }
    if status == RunStatus::Completed {
        for k in 1..=cfg.iters {
            let t0 = Instant::now();
            let step = (|| -> Result<(Vec<C64>, Vec<C64>, Vec<C64>, Vec<C64>)> {
                let v = update_v(model, problem.objective.y(), &st.x, &st.eta, st.rho)?;
                let mut x = update_x(model, field, &v, &st.eta, problem.reg, st.rho, &st.x, &ls, &cfg.inner)?;
                field.project(&mut x);
                let ax = model.apply(&x)?;
                let eta = update_dual(&st.eta, &v, &ax);
                Ok((x, v, eta, ax))
            })();
            let (x, v, eta, ax) = match step {
                Ok(s) => s,
                Err(e) => {
                    status = RunStatus::Failed {
                        at: k - 1,
                        reason: e.to_string(),
                    };
                    break;
                }
            };
            let primal = norm(&sub(&ax, &v));
            let dual = st.rho * norm(&model.adjoint(&sub(&v, &st.v)).expect("dimension fixed"));
            let rho = update_rho(st.rho, primal, dual, k);
            elapsed += t0.elapsed();
            history.push(AdmmRecord {
                primal_residual: primal,
                dual_residual: dual,
                rho: st.rho,
            });
            st = AdmmState { x, v, eta, rho, k };
            match problem.cost_with(&st.x, &ax) {
                Ok(c) => trace.push(monitor.record(k, elapsed, c, &st.x)),
                Err(e) => {
                    status = RunStatus::Failed {
                        at: k,
                        reason: e.to_string(),
                    };
                    break;
                }
            }
        }
    }
    AdmmRun {
        run: RunState {
            x: SignalVector::projected(st.x.clone(), field, dims),
            trace,
            status,
            warnings: Vec::new(),
        },
        history,
        state: st,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::MaskSampling;
    use crate::numerics::random_unit;
    use crate::objectives::{DiffOp, HuberTv, Objective};
    use crate::vecops::ZERO;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn grid_argmin(t: f64, y: f64, b: f64, rho: f64) -> f64 {
        let hi = 2.0 * (t + y.sqrt() + 2.0);
        (0..=10_000)
            .map(|i| hi * i as f64 / 10_000.0)
            .min_by(|a, c| magnitude_lagrangian(*a, t, y, b, rho).total_cmp(&magnitude_lagrangian(*c, t, y, b, rho)))
            .unwrap()
    }

    #[test]
    fn phase_examples() {
        let model = ForwardModel::dense(3, 3, {
            let mut e = vec![ZERO; 9];
            (0..3).for_each(|i| e[i * 4] = c(1.0));
            e
        })
        .unwrap();
        let z = C64::from_polar(2.0, 0.8);
        let s = update_v_phase(&model, &[c(3.0), z, ZERO], &[ZERO; 3]).unwrap();
        assert_eq!(s[0], c(1.0));
        assert!((s[1] - C64::from_polar(1.0, 0.8)).norm() < 1e-15);
        assert_eq!(s[2], c(1.0));
    }

    #[test]
    fn magnitude_b0_examples() {
        let m = update_v_magnitude_b0(0.0, 2.0, 2.0);
        assert!((m - 1.0).abs() < 1e-15);
        assert!((2.0 * m - 2.0 * 2.0 / m + 2.0 * (m - 0.0)).abs() < 1e-12);
        assert!((update_v_magnitude_b0(3.0, 0.0, 2.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn magnitude_bpos_example() {
        let m = update_v_magnitude_bpos(1.0, 1.0, 1.0, 2.0).unwrap();
        assert!(m > 0.7 && m < 0.75);
        assert!((4.0 * m.powi(3) - 2.0 * m * m + 2.0 * m - 2.0).abs() < 1e-12);
        assert!((m - grid_argmin(1.0, 1.0, 1.0, 2.0)).abs() < 1e-3);
        assert!(update_v_magnitude_bpos(1.0, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn magnitude_bpos_zero_data_is_convex_case() {
        for &(t, b, rho) in &[(1.0, 0.5, 2.0), (0.0, 0.1, 8.0), (4.0, 2.0, 1.0)] {
            let m = update_v_magnitude_bpos(t, 0.0, b, rho).unwrap();
            assert!((m - rho * t / (2.0 + rho)).abs() < 1e-12);
        }
    }

    #[test]
    fn small_background_matches_zero_background() {
        for &(t, y, rho) in &[(1.0, 1.0, 2.0), (0.3, 4.0, 8.0), (2.0, 0.5, 1.0)] {
            let a = update_v_magnitude_b0(t, y, rho);
            let b = update_v_magnitude_bpos(t, y, 1e-12, rho).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn magnitude_b0_solves_its_quadratic(t in 0.0f64..20.0, y in 0.0f64..50.0, rho in 0.1f64..50.0) {
            let m = update_v_magnitude_b0(t, y, rho);
            prop_assert!(m >= 0.0);
            let res = (2.0 + rho) * m * m - rho * t * m - 2.0 * y;
            prop_assert!(res.abs() <= 1e-10 * (2.0 + rho) * (1.0 + m * m + t * m + y));
        }

        #[test]
        fn magnitude_bpos_is_the_best_root(t in 0.0f64..10.0, y in 0.0f64..30.0, b in 0.01f64..5.0, rho in 0.1f64..20.0) {
            let m = update_v_magnitude_bpos(t, y, b, rho).unwrap();
            let lead = 2.0 + rho;
            let res = (lead * m.powi(3) - rho * t * m * m + (2.0 * b - 2.0 * y + rho * b) * m - rho * b * t) / lead;
            prop_assert!(res.abs() < 1e-9 * (1.0 + m.powi(3) + t * m * m + (b + y) * m + b * t));
            let l = magnitude_lagrangian(m, t, y, b, rho);
            for r in cubic_real_roots(lead, -rho * t, 2.0 * b - 2.0 * y + rho * b, -rho * b * t) {
                if r >= 0.0 {
                    prop_assert!(l <= magnitude_lagrangian(r, t, y, b, rho));
                }
            }
            let g = grid_argmin(t, y, b, rho);
            prop_assert!(l <= magnitude_lagrangian(g, t, y, b, rho) + 1e-9 * l.abs().max(1.0));
        }
    }

    #[test]
    fn x_update_identity_and_diagonal_fast_path() {
        let mut e = vec![ZERO; 9];
        (0..3).for_each(|i| e[i * 4] = c(1.0));
        let id = ForwardModel::dense(3, 3, e).unwrap();
        let v = vec![c(1.0), C64::new(0.5, -2.0), c(-3.0)];
        let cfg = InnerConfig::default();
        let ls = LeastSquares::new(&id, cfg);
        let x = update_x(&id, FieldTag::Complex, &v, &[ZERO; 3], None, 8.0, &[ZERO; 3], &ls, &cfg).unwrap();
        for (a, b) in x.iter().zip(&v) {
            assert!((a - b).norm() < 1e-12);
        }

        let model = ForwardModel::masked_dft_random(16, 3, MaskSampling::Bernoulli, 4).unwrap();
        let diag = LeastSquares::new(&model, cfg);
        assert!(matches!(diag, LeastSquares::Diagonal(_)));
        let cg = LeastSquares::Normal(WeightedNormalSolver::new(
            &model,
            InnerConfig {
                direct_threshold: 0,
                cg_iters: 200,
                cg_tol: 1e-14,
                ..cfg
            },
        ));
        let v = random_unit(model.rows(), 9, false);
        let eta = random_unit(model.rows(), 10, false);
        for field in [FieldTag::Complex, FieldTag::Real] {
            let a = update_x(&model, field, &v, &eta, None, 8.0, &[ZERO; 16], &diag, &cfg).unwrap();
            let b = update_x(&model, field, &v, &eta, None, 8.0, &[ZERO; 16], &cg, &cfg).unwrap();
            assert!(norm(&sub(&a, &b)) < 1e-8);
        }
    }

    #[test]
    fn dual_update_traces() {
        let eta = vec![c(0.5), C64::new(0.0, 1.0)];
        let v = vec![c(1.0), c(2.0)];
        assert_eq!(update_dual(&eta, &v, &v), eta);
        let ax1 = vec![c(0.0), c(1.0)];
        let e1 = update_dual(&eta, &v, &ax1);
        let e2 = update_dual(&e1, &v, &ax1);
        assert_eq!(e2, vec![c(2.5), C64::new(2.0, 1.0)]);
    }

    #[test]
    fn rho_heuristic() {
        assert_eq!(update_rho(8.0, 1.0, 0.01, 7), 8.0);
        assert_eq!(update_rho(8.0, 1.0, 0.01, 10), 16.0);
        assert_eq!(update_rho(8.0, 1.0, 800.0 + 1e-9, 20), 4.0);
        assert_eq!(update_rho(8.0, 1.0, 800.0, 20), 8.0);
        assert_eq!(update_rho(8.0, 1.0, 0.01, 0), 8.0);
    }

    fn noiseless(m: usize, n: usize, b: f64, seed: u64) -> (Objective, Vec<C64>) {
        let model = ForwardModel::gaussian_random(m, n, seed).unwrap().with_uniform_background(b).unwrap();
        let xt: Vec<C64> = random_unit(n, seed + 1, true).iter().map(|z| z * 2.0).collect();
        let y = model.mean_intensity(&xt).unwrap();
        (Objective::poisson(model, y).unwrap(), xt)
    }

    #[test]
    fn run_converges_on_noiseless_data() {
        let (obj, xt) = noiseless(96, 8, 0.1, 3);
        let pb = Problem::new(&obj, None, FieldTag::Real);
        let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.9 + 0.05).collect(), FieldTag::Real, None);
        let out = run_admm(&pb, &AdmmConfig::new(300), &x0, &Monitor::with_truth(&xt));
        assert_eq!(out.run.status, RunStatus::Completed);
        let last = out.history.last().unwrap();
        assert!(last.primal_residual < 1e-3, "primal residual {}", last.primal_residual);
        let j = 300 / 10;
        for h in &out.history {
            assert!(h.rho >= 8.0 * 0.5f64.powi(j) && h.rho <= 8.0 * 2f64.powi(j));
        }
    }

    #[test]
    fn zero_iterations_return_start() {
        let (obj, xt) = noiseless(20, 4, 0.1, 4);
        let pb = Problem::new(&obj, None, FieldTag::Real);
        let x0 = SignalVector::projected(xt.clone(), FieldTag::Real, None);
        let out = run_admm(&pb, &AdmmConfig::new(0), &x0, &Monitor::none());
        assert!(out.run.trace.is_empty());
        assert_eq!(out.run.x.values(), xt.as_slice());
        assert!(out.state.eta.iter().all(|e| *e == ZERO));
    }

    #[test]
    fn small_background_run_matches_zero_background_run() {
        let (obj0, xt) = noiseless(60, 6, 0.0, 5);
        let model = obj0.model().clone().with_uniform_background(1e-12).unwrap();
        let obj1 = Objective::poisson(model, obj0.y().to_vec()).unwrap();
        let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.8 + 0.1).collect(), FieldTag::Real, None);
        let a = run_admm(&Problem::new(&obj0, None, FieldTag::Real), &AdmmConfig::new(30), &x0, &Monitor::none());
        let b = run_admm(&Problem::new(&obj1, None, FieldTag::Real), &AdmmConfig::new(30), &x0, &Monitor::none());
        assert!(norm(&sub(a.run.x.values(), b.run.x.values())) < 1e-4);
    }

    #[test]
    fn regularized_run_decreases_cost() {
        let (obj, xt) = noiseless(80, 8, 0.1, 6);
        let reg = Regularizer::HuberTv(HuberTv::new(0.2, 0.1, DiffOp::Chain { n: 8 }).unwrap());
        let pb = Problem::new(&obj, Some(&reg), FieldTag::Real);
        let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.5).collect(), FieldTag::Real, None);
        let out = run_admm(&pb, &AdmmConfig::new(100), &x0, &Monitor::none());
        assert_eq!(out.run.status, RunStatus::Completed);
        assert!(out.run.final_cost().unwrap() < pb.cost(x0.values()).unwrap());
    }
}
