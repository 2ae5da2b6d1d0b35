//! Wirtinger-flow gradient descent and its step-size rules.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::eval::{Monitor, RunState, RunStatus, TraceRecord};
use crate::numerics::cubic_real_roots;
use crate::objectives::{fisher_marginal_gaussian, fisher_marginal_poisson, HuberTv, Likelihood, Objective, Problem};
use crate::signal::SignalVector;
use crate::vecops::{norm, norm_sqr, step, C64};

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtracking {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub initial_step: f64,
    pub max_trials: usize,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 0.01,
            initial_step: 1.0,
            max_trials: 30,
        }
    }
}

/// How the step size `mu_k` is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Curvature along the gradient from the Poisson Fisher information.
    FisherPoisson,
    /// Same, with the Fisher information of the Gaussian model.
    FisherGaussian,
    Backtracking(Backtracking),
    /// Exact minimization of the Gaussian cost along the gradient.
    ExactGaussianLineSearch,
}

/// Outlier truncation of the data gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRule {
    pub enabled: bool,
    pub a_h: f64,
}

impl Default for TruncationRule {
    fn default() -> Self {
        Self { enabled: false, a_h: 5.0 }
    }
}

fn fisher_kind_weights(rule: Likelihood, v: &[C64], b: &[f64]) -> Vec<f64> {
    let f = match rule {
        Likelihood::Poisson => fisher_marginal_poisson,
        Likelihood::Gaussian => fisher_marginal_gaussian,
    };
    v.iter().zip(b).map(|(&vi, &bi)| f(vi, bi)).collect()
}

fn fisher_denominator(obj: &Objective, kind: Likelihood, x: &[C64], grad: &[C64]) -> Result<(f64, f64)> {
    let model = obj.model();
    let v = model.apply(x)?;
    let d = model.apply_linear(grad)?;
    let w = fisher_kind_weights(kind, &v, model.background());
    let den: f64 = d.iter().zip(&w).map(|(di, wi)| wi * di.norm_sqr()).sum();
    Ok((norm_sqr(grad), den))
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if num == 0.0 {
        return Err(Error::Degenerate("zero gradient".into()));
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("Fisher curvature along the gradient is {den}")));
    }
    Ok(num / den)
}

/// `mu = ||grad||^2 / (d' D1 d)` with `d = A grad` and `D1` the Fisher
/// weights of `kind` at `x`.
pub fn step_fisher(obj: &Objective, kind: Likelihood, x: &[C64], grad: &[C64]) -> Result<f64> {
    let (num, den) = fisher_denominator(obj, kind, x, grad)?;
    ratio(num, den)
}

/// Fisher step with the Huber curvature `beta (T grad)' D2 (T grad)` added to
/// the denominator.
pub fn step_fisher_reg(obj: &Objective, kind: Likelihood, huber: &HuberTv, x: &[C64], grad: &[C64]) -> Result<f64> {
    let (num, den) = fisher_denominator(obj, kind, x, grad)?;
    ratio(num, den + huber.curvature_along(x, grad))
}

/// Outcome of an Armijo search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub mu: f64,
    pub trials: usize,
    /// False when the trial budget ran out; `mu` is then the last trial.
    pub accepted: bool,
}

/// Backtracks from `initial_step` until
/// `Psi(x - mu grad) <= Psi(x) - sigma mu ||grad||^2`.
pub fn step_backtracking<F>(mut cost: F, x: &[C64], grad: &[C64], cost_x: f64, p: &Backtracking) -> Result<LineSearch>
where
    F: FnMut(&[C64]) -> Result<f64>,
{
    let g2 = norm_sqr(grad);
    if g2 == 0.0 {
        return Err(Error::Degenerate("zero gradient".into()));
    }
    let mut mu = p.initial_step;
    for trial in 1..=p.max_trials {
        let ok = cost(&step(x, mu, grad)).is_ok_and(|c| c <= cost_x - p.sufficient_decrease * mu * g2);
        if ok {
            return Ok(LineSearch {
                mu,
                trials: trial,
                accepted: true,
            });
        }
        if trial < p.max_trials {
            mu *= p.shrink;
        }
    }
    Ok(LineSearch {
        mu,
        trials: p.max_trials,
        accepted: false,
    })
}

/// Coefficients `[a0, a1, a2, a3, a4]` of the Gaussian cost
/// `sum (y - b - |v - mu d|^2)^2` as a polynomial in `mu`.
pub fn gaussian_line_quartic(obj: &Objective, x: &[C64], dir: &[C64]) -> Result<[f64; 5]> {
    let model = obj.model();
    let v = model.apply(x)?;
    let d = model.apply_linear(dir)?;
    let mut a = [0.0; 5];
    for (((vi, di), yi), bi) in v.iter().zip(&d).zip(obj.y()).zip(model.background()) {
        let p = vi.norm_sqr() - (yi - bi);
        let q = -2.0 * (vi.conj() * di).re;
        let s = di.norm_sqr();
        a[0] += p * p;
        a[1] += 2.0 * p * q;
        a[2] += q * q + 2.0 * p * s;
        a[3] += 2.0 * q * s;
        a[4] += s * s;
    }
    Ok(a)
}

fn quartic(a: &[f64; 5], mu: f64) -> f64 {
    (((a[4] * mu + a[3]) * mu + a[2]) * mu + a[1]) * mu + a[0]
}

/// Global minimizer over `mu >= 0` of the Gaussian cost along `-grad`, the
/// smallest one on ties.
pub fn step_exact_gaussian(obj: &Objective, x: &[C64], grad: &[C64]) -> Result<f64> {
    let a = gaussian_line_quartic(obj, x, grad)?;
    if a[4] == 0.0 {
        return Err(Error::Degenerate("A grad = 0 in exact line search".into()));
    }
    let mut candidates = vec![0.0];
    candidates.extend(
        cubic_real_roots(4.0 * a[4], 3.0 * a[3], 2.0 * a[2], a[1])
            .into_iter()
            .filter(|&r| r >= 0.0),
    );
    let values: Vec<f64> = candidates.iter().map(|&m| quartic(&a, m)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * a[0].abs().max(1e-300);
    let mu = candidates
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= best + tol)
        .map(|(&m, _)| m)
        .fold(f64::INFINITY, f64::min);
    Ok(mu)
}

/// Indices kept by the truncation rule: `|y - |a'x|^2|` at most
/// `a_h * mean_residual * |a'x|^2 / ||x||`.
pub fn truncation_mask(obj: &Objective, x: &[C64], a_h: f64) -> Result<Vec<bool>> {
    let nx = norm(x);
    if nx == 0.0 {
        return Err(Error::Degenerate("truncation undefined at x = 0".into()));
    }
    let v = obj.model().apply(x)?;
    if a_h.is_infinite() {
        return Ok(vec![true; v.len()]);
    }
    let intensity: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
    let resid: Vec<f64> = intensity.iter().zip(obj.y()).map(|(i, y)| (y - i).abs()).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    Ok(resid
        .iter()
        .zip(&intensity)
        .map(|(r, i)| *r <= a_h * mean * i / nx)
        .collect())
}

fn wf_gradient(problem: &Problem, x: &[C64], v: &[C64], trunc: &TruncationRule) -> Result<Vec<C64>> {
    if !trunc.enabled {
        return problem.gradient_with(x, v);
    }
    let mask = truncation_mask(problem.objective, x, trunc.a_h)?;
    let mut asc = problem.objective.ascent_at(v)?;
    asc.iter_mut().zip(&mask).filter(|(_, &m)| !m).for_each(|(a, _)| *a = C64::new(0.0, 0.0));
    let mut g = problem.model().adjoint(&asc)?;
    if let Some(h) = problem.huber() {
        g.iter_mut().zip(h.gradient(x)).for_each(|(a, b)| *a += b);
    }
    problem.field.realify(&mut g);
    Ok(g)
}

/// Settings for [`run_wf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WfConfig {
    pub rule: StepRule,
    pub truncation: TruncationRule,
    pub iters: usize,
    /// Halve a Fisher step once if it raises the cost more than tenfold.
    pub safeguard: bool,
}

impl WfConfig {
    pub fn new(rule: StepRule, iters: usize) -> Self {
        Self {
            rule,
            truncation: TruncationRule::default(),
            iters,
            safeguard: true,
        }
    }
}

struct Step {
    mu: f64,
    warning: Option<String>,
}

fn choose_step(problem: &Problem, cfg: &WfConfig, x: &[C64], grad: &[C64], cost: f64) -> Result<Step> {
    let obj = problem.objective;
    let fisher = |kind| match problem.huber() {
        Some(h) => step_fisher_reg(obj, kind, h, x, grad),
        None => step_fisher(obj, kind, x, grad),
    };
    let mu = match cfg.rule {
        StepRule::FisherPoisson => fisher(Likelihood::Poisson)?,
        StepRule::FisherGaussian => fisher(Likelihood::Gaussian)?,
        StepRule::ExactGaussianLineSearch => {
            if obj.likelihood() != Likelihood::Gaussian || problem.reg.is_some() {
                return Err(Error::InvalidArgument(
                    "exact line search needs an unregularized Gaussian cost".into(),
                ));
            }
            step_exact_gaussian(obj, x, grad)?
        }
        StepRule::Backtracking(p) => {
            let ls = step_backtracking(|z| problem.cost(z), x, grad, cost, &p)?;
            let warning = (!ls.accepted).then(|| format!("backtracking exhausted {} trials", ls.trials));
            return Ok(Step { mu: ls.mu, warning });
        }
    };
    Ok(Step { mu, warning: None })
}

/// Runs `x_{k+1} = x_k - mu_k grad(x_k)` for `cfg.iters` iterations.
///
/// Nonnegative fields are clamped after each update. A vanishing gradient
/// stops the run early; numerical errors stop it with a partial trace.
pub fn run_wf(problem: &Problem, cfg: &WfConfig, x0: &SignalVector, monitor: &Monitor) -> RunState {
    let field = problem.field;
    let mut x = x0.clone().with_field(field).into_values();
    let dims = x0.dims();
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(cfg.iters);
    let mut warnings = Vec::new();
    let mut elapsed = Duration::ZERO;
    let fisher_rule = matches!(cfg.rule, StepRule::FisherPoisson | StepRule::FisherGaussian);

    let mut status = RunStatus::Completed;
    let mut state = problem
        .model()
        .apply(&x)
        .and_then(|v| problem.cost_with(&x, &v).map(|c| (v, c)));
    for k in 1..=cfg.iters {
        let (v, cost) = match state {
            Ok(s) => s,
            Err(e) => {
                status = RunStatus::Failed {
                    at: k - 1,
                    reason: e.to_string(),
                };
                break;
            }
        };
        let t0 = Instant::now();
        let outcome = (|| -> Result<Option<(Vec<C64>, Vec<C64>, f64)>> {
            let grad = wf_gradient(problem, &x, &v, &cfg.truncation)?;
            if norm_sqr(&grad) == 0.0 {
                return Ok(None);
            }
            let st = choose_step(problem, cfg, &x, &grad, cost)?;
            if let Some(w) = st.warning {
                warnings.push(format!("iteration {k}: {w}"));
            }
            let update = |mu: f64| -> Result<(Vec<C64>, Vec<C64>, f64)> {
                let mut xn = step(&x, mu, &grad);
                field.project(&mut xn);
                let vn = problem.model().apply(&xn)?;
                let cn = problem.cost_with(&xn, &vn)?;
                Ok((xn, vn, cn))
            };
            let mut next = update(st.mu);
            let blew_up = match &next {
                Ok((_, _, cn)) => cn - cost > 10.0 * cost.abs(),
                Err(_) => true,
            };
            if fisher_rule && cfg.safeguard && blew_up {
                warnings.push(format!("iteration {k}: safeguard halved the step"));
                next = update(0.5 * st.mu);
            }
            next.map(Some)
        })();
        elapsed += t0.elapsed();
        match outcome {
            Ok(Some((xn, vn, cn))) => {
                x = xn;
                trace.push(monitor.record(k, elapsed, cn, &x));
                state = Ok((vn, cn));
            }
            Ok(None) => {
                status = RunStatus::Stationary { at: k - 1 };
                break;
            }
            Err(e) => {
                status = RunStatus::Failed {
                    at: k - 1,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    RunState {
        x: SignalVector::projected(x, field, dims),
        trace,
        status,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ForwardModel;
    use crate::objectives::{DiffOp, Regularizer};
    use crate::signal::FieldTag;
    use crate::vecops::ZERO;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn identity(n: usize, b: f64) -> ForwardModel {
        let mut e = vec![ZERO; n * n];
        (0..n).for_each(|i| e[i * n + i] = c(1.0));
        ForwardModel::dense(n, n, e).unwrap().with_uniform_background(b).unwrap()
    }

    #[test]
    fn fisher_step_identity_example() {
        let obj = Objective::poisson(identity(1, 1.0), vec![3.0]).unwrap();
        let mu = step_fisher(&obj, Likelihood::Poisson, &[c(1.0)], &[c(0.7)]).unwrap();
        assert!((mu - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fisher_step_zero_gradient_is_degenerate() {
        let obj = Objective::poisson(identity(2, 1.0), vec![3.0, 1.0]).unwrap();
        assert!(step_fisher(&obj, Likelihood::Poisson, &[c(1.0), c(1.0)], &[ZERO, ZERO]).is_err());
    }

    #[test]
    fn fisher_reg_with_zero_beta_matches() {
        let model = ForwardModel::gaussian_random(20, 5, 2).unwrap().with_uniform_background(0.1).unwrap();
        let obj = Objective::poisson(model, vec![1.0; 20]).unwrap();
        let x = crate::numerics::random_unit(5, 1, false);
        let g = crate::numerics::random_unit(5, 2, false);
        let h = HuberTv::new(0.0, 0.1, DiffOp::Chain { n: 5 }).unwrap();
        let a = step_fisher(&obj, Likelihood::Poisson, &x, &g).unwrap();
        let b = step_fisher_reg(&obj, Likelihood::Poisson, &h, &x, &g).unwrap();
        assert!((a - b).abs() <= 1e-15 * a);
    }

    #[test]
    fn backtracking_examples() {
        let p = Backtracking::default();
        let x = [c(1.0)];
        let g = [c(2.0)];
        let ls = step_backtracking(|z: &[C64]| Ok(z[0].norm_sqr()), &x, &g, 1.0, &p).unwrap();
        assert_eq!(ls.mu, 0.5);
        assert!(ls.accepted);
        let ls = step_backtracking(|_: &[C64]| Ok(2.0), &x, &g, 1.0, &p).unwrap();
        assert!(!ls.accepted);
        assert_eq!(ls.trials, 30);
        assert_eq!(ls.mu, 0.5f64.powi(29));
        assert!(step_backtracking(|_: &[C64]| Ok(0.0), &x, &[ZERO], 1.0, &p).is_err());
    }

    #[test]
    fn exact_line_search_scalar_example() {
        // g(x) = (1 - x^2)^2 from x = 2: gradient 4 x (x^2 - 1) = 24.
        let obj = Objective::gaussian(identity(1, 0.0), vec![1.0]).unwrap();
        let x = [c(2.0)];
        let g = obj.gradient(&x, FieldTag::Real).unwrap();
        assert!((g[0].re - 24.0).abs() < 1e-12);
        let mu = step_exact_gaussian(&obj, &x, &g).unwrap();
        assert!((mu - 1.0 / 24.0).abs() < 1e-12);
        assert!((x[0].re - mu * g[0].re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_line_search_beats_grid() {
        let model = ForwardModel::gaussian_random(40, 6, 9).unwrap();
        let xt = crate::numerics::random_unit(6, 3, false);
        let y = model.mean_intensity(&xt).unwrap();
        let obj = Objective::gaussian(model, y).unwrap();
        let x = crate::numerics::random_unit(6, 4, false);
        let g = obj.gradient(&x, FieldTag::Complex).unwrap();
        let mu = step_exact_gaussian(&obj, &x, &g).unwrap();
        let f = |m: f64| obj.cost(&step(&x, m, &g)).unwrap();
        let grid_best = (0..=4000).map(|i| f(i as f64 * 4.0 * mu / 4000.0)).fold(f64::INFINITY, f64::min);
        assert!(f(mu) <= grid_best * (1.0 + 1e-9));
        assert!(f(mu) <= f(0.0));
    }

    #[test]
    fn truncation_examples() {
        let model = ForwardModel::gaussian_random(30, 4, 1).unwrap();
        let xt = crate::numerics::random_unit(4, 2, false);
        let y = model.mean_intensity(&xt).unwrap();
        let obj = Objective::poisson(model, y).unwrap();
        assert!(truncation_mask(&obj, &xt, 1.0).unwrap().iter().all(|&m| m));
        let x = crate::numerics::random_unit(4, 5, false);
        assert!(truncation_mask(&obj, &x, f64::INFINITY).unwrap().iter().all(|&m| m));
        assert!(truncation_mask(&obj, &[ZERO; 4], 1.0).is_err());
    }

    fn small_problem(seed: u64) -> (Objective, Vec<C64>) {
        let model = ForwardModel::gaussian_random(60, 8, seed).unwrap().with_uniform_background(0.1).unwrap();
        let xt = crate::numerics::random_unit(8, seed + 1, true);
        let xt: Vec<C64> = xt.iter().map(|z| z * 3.0).collect();
        let y = model.mean_intensity(&xt).unwrap();
        (Objective::poisson(model, y).unwrap(), xt)
    }

    #[test]
    fn zero_iterations_return_the_start() {
        let (obj, xt) = small_problem(3);
        let pb = Problem::new(&obj, None, FieldTag::Real);
        let x0 = SignalVector::projected(xt.clone(), FieldTag::Real, None);
        let run = run_wf(&pb, &WfConfig::new(StepRule::FisherPoisson, 0), &x0, &Monitor::none());
        assert!(run.trace.is_empty());
        assert_eq!(run.x.values(), xt.as_slice());
    }

    #[test]
    fn backtracking_run_is_monotone() {
        let (obj, xt) = small_problem(4);
        let pb = Problem::new(&obj, None, FieldTag::Real);
        let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.5 + 0.3).collect(), FieldTag::Real, None);
        let cfg = WfConfig::new(StepRule::Backtracking(Backtracking::default()), 40);
        let run = run_wf(&pb, &cfg, &x0, &Monitor::with_truth(&xt));
        assert_eq!(run.trace.len(), 40);
        let c0 = pb.cost(x0.values()).unwrap();
        let costs = run.costs();
        assert!(costs[0] <= c0);
        assert!(costs.windows(2).all(|w| w[1] <= w[0]));
        assert!(run.trace.windows(2).all(|w| w[1].elapsed_seconds >= w[0].elapsed_seconds));
    }

    #[test]
    fn fisher_run_with_huber_decreases_cost() {
        let (obj, xt) = small_problem(6);
        let reg = Regularizer::HuberTv(HuberTv::new(0.5, 0.1, DiffOp::Chain { n: 8 }).unwrap());
        let pb = Problem::new(&obj, Some(&reg), FieldTag::Real);
        let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.8).collect(), FieldTag::Real, None);
        let run = run_wf(&pb, &WfConfig::new(StepRule::FisherPoisson, 50), &x0, &Monitor::none());
        assert_eq!(run.status, RunStatus::Completed);
        assert!(run.final_cost().unwrap() < pb.cost(x0.values()).unwrap());
    }

    #[test]
    fn exact_gaussian_rejects_poisson_cost() {
        let (obj, xt) = small_problem(7);
        let pb = Problem::new(&obj, None, FieldTag::Real);
        let x0 = SignalVector::projected(xt.iter().map(|z| z * 0.5).collect(), FieldTag::Real, None);
        let run = run_wf(&pb, &WfConfig::new(StepRule::ExactGaussianLineSearch, 3), &x0, &Monitor::none());
        assert!(matches!(run.status, RunStatus::Failed { at: 0, .. }));
    }

    #[test]
    fn nonnegative_field_is_clamped() {
        let (obj, xt) = small_problem(8);
        let pb = Problem::new(&obj, None, FieldTag::RealNonnegative);
        let x0 = SignalVector::projected(xt.iter().map(|z| z.norm() * 0.5).map(c).collect(), FieldTag::Real, None);
        let run = run_wf(&pb, &WfConfig::new(StepRule::FisherPoisson, 30), &x0, &Monitor::none());
        assert!(run.x.values().iter().all(|z| z.im == 0.0 && z.re >= 0.0));
    }
}
