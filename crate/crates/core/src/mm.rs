//! Majorize-minimize with separable quadratic majorizers of the Poisson cost.

use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::eval::{Monitor, RunState, RunStatus, TraceRecord};
use crate::forward::ForwardModel;
use crate::numerics::{cg_solve_from, power_method, FnOp};
use crate::objectives::{psi_ddot, HuberTv, Likelihood, Problem, Regularizer, SparseL1};
use crate::signal::{FieldTag, SignalVector};
use crate::vecops::{norm, norm_sqr, real_inner, sub, C64, ZERO};

/// Which per-measurement curvature `W_i` the majorizer uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureKind {
    /// `2 + y / (4 b)`, valid everywhere.
    Max,
    /// Depends on the current `|s_i|`; never above `Max`.
    Improved,
    /// Supremum of the secant curvature over a grid of `points` values.
    OptimalNumeric { points: usize },
}

pub const OPTIMAL_GRID_POINTS: usize = 4001;

/// `2 + y / (4 b)`; no finite majorizer exists for `b = 0` with `y > 0`.
pub fn curvature_max(y: f64, b: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(2.0);
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("no quadratic majorizer for y = {y}, b = {b}")));
    }
    Ok(2.0 + y / (4.0 * b))
}

/// `psi_ddot(u(|s|))` with `u(s) = (b + sqrt(b^2 + b s^2)) / s`, and `2` at
/// `s = 0`.
pub fn curvature_improved(s: C64, y: f64, b: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(2.0);
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("no quadratic majorizer for y = {y}, b = {b}")));
    }
    let a = s.norm();
    if a == 0.0 {
        return Ok(2.0);
    }
    let u = (b + (b * b + b * a * a).sqrt()) / a;
    psi_ddot(C64::new(u, 0.0), y, b)
}

/// Rational form of [`curvature_improved`] for real `s`.
pub fn curvature_improved_closed_form(s: f64, y: f64, b: f64) -> f64 {
    let r = (b * b + b * s * s).sqrt();
    let den = b + s * s + r;
    2.0 + y * s * s * (b + r) / (b * den * den)
}

/// `ln(1 + w) - w`, accurate for small `w`.
fn log1p_minus(w: f64) -> f64 {
    if w.abs() < 1e-3 {
        let w2 = w * w;
        -w2 / 2.0 + w2 * w / 3.0 - w2 * w2 / 4.0 + w2 * w2 * w / 5.0
    } else {
        w.ln_1p() - w
    }
}

/// Secant curvature `2 (phi(r) - phi(s) - phi'(s)(r - s)) / (r - s)^2` of the
/// real restriction `phi(r) = psi(r; y, b)`.
fn secant_curvature(r: f64, s: f64, y: f64, b: f64) -> f64 {
    let d = r - s;
    let q = s * s + b;
    let w = d * (r + s) / q;
    2.0 - 2.0 * y / q - 2.0 * y * log1p_minus(w) / (d * d)
}

/// Largest secant curvature over `r` on a uniform grid of `[-R, R]`,
/// `R = max(20, 4|s|, 8 sqrt(b))`, including the tangent limit `r -> s`.
pub fn curvature_optimal_numeric(s: C64, y: f64, b: f64, points: usize) -> Result<f64> {
    if y == 0.0 {
        return Ok(2.0);
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("no quadratic majorizer for y = {y}, b = {b}")));
    }
    if points < 2 {
        return Err(Error::InvalidArgument("curvature grid needs at least two points".into()));
    }
    let s = s.norm();
    let range = 20f64.max(4.0 * s).max(8.0 * b.sqrt());
    let h = 2.0 * range / (points - 1) as f64;
    let mut best = psi_ddot(C64::new(s, 0.0), y, b)?;
    for i in 0..points {
        let r = -range + i as f64 * h;
        if (r - s).abs() >= 1e-8 {
            best = best.max(secant_curvature(r, s, y, b));
        }
    }
    Ok(best)
}

/// Curvatures `W_i` at `v = A x_k`.
pub fn curvature_weights(kind: CurvatureKind, v: &[C64], y: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    v.iter()
        .zip(y)
        .zip(b)
        .map(|((&vi, &yi), &bi)| match kind {
            CurvatureKind::Max => curvature_max(yi, bi),
            CurvatureKind::Improved => curvature_improved(vi, yi, bi),
            CurvatureKind::OptimalNumeric { points } => curvature_optimal_numeric(vi, yi, bi, points),
        })
        .collect()
}

/// Quadratic surrogate around `anchor`:
/// `base + Re{(x - anchor)' grad} + 1/2 sum W_i |[A (x - anchor)]_i|^2`.
#[derive(Debug, Clone)]
pub struct MajorizerContext<'a> {
    pub model: &'a ForwardModel,
    pub field: FieldTag,
    pub anchor: Vec<C64>,
    /// `A anchor`, including any affine offset.
    pub s: Vec<C64>,
    pub grad: Vec<C64>,
    pub weights: Vec<f64>,
    pub base: f64,
}

impl<'a> MajorizerContext<'a> {
    /// Majorizer of the Poisson data term of `problem` at `x_k`.
    pub fn new(problem: &Problem<'a>, x_k: &[C64], kind: CurvatureKind) -> Result<Self> {
        let obj = problem.objective;
        if obj.likelihood() != Likelihood::Poisson {
            return Err(Error::InvalidArgument("MM majorizers are defined for the Poisson cost".into()));
        }
        let model = obj.model();
        let s = model.apply(x_k)?;
        let weights = curvature_weights(kind, &s, obj.y(), model.background())?;
        let grad = obj.gradient_at(&s, problem.field)?;
        let base = obj.cost_at(&s)?;
        Ok(Self {
            model,
            field: problem.field,
            anchor: x_k.to_vec(),
            s,
            grad,
            weights,
            base,
        })
    }

    /// `A' W A p`, real part for real fields.
    pub fn hessian_apply(&self, p: &[C64]) -> Vec<C64> {
        let mut ap = self.model.apply_linear(p).expect("dimension fixed by context");
        ap.iter_mut().zip(&self.weights).for_each(|(z, w)| *z *= w);
        let mut out = self.model.adjoint(&ap).expect("dimension fixed by context");
        self.field.realify(&mut out);
        out
    }

    pub fn value(&self, x: &[C64]) -> f64 {
        let d = sub(x, &self.anchor);
        let ad = self.model.apply_linear(&d).expect("dimension fixed by context");
        let quad: f64 = ad.iter().zip(&self.weights).map(|(z, w)| w * z.norm_sqr()).sum();
        self.base + real_inner(&self.grad, &d) + 0.5 * quad
    }

    pub fn gradient(&self, x: &[C64]) -> Vec<C64> {
        let h = self.hessian_apply(&sub(x, &self.anchor));
        self.grad.iter().zip(&h).map(|(g, h)| g + h).collect()
    }
}

/// [`MajorizerContext::value`] as a free function.
pub fn majorizer_value(ctx: &MajorizerContext, x: &[C64]) -> f64 {
    ctx.value(x)
}

/// Inner-solver settings shared by MM and ADMM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    /// Use a dense factorization when `N` is at most this.
    pub direct_threshold: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    /// Iteration cap for the proximal-gradient and nonlinear-CG solvers.
    pub iters: usize,
    pub tol: f64,
    pub power_iters: usize,
    pub lipschitz_safety: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            direct_threshold: 64,
            cg_iters: 30,
            cg_tol: 1e-9,
            iters: 50,
            tol: 1e-8,
            power_iters: 30,
            lipschitz_safety: 1.05,
        }
    }
}

/// Solves `A' W A x = rhs` for a fixed model, densely for small `N`.
#[derive(Debug, Clone)]
pub struct WeightedNormalSolver {
    dense: Option<Vec<C64>>,
    rows: usize,
    cols: usize,
    cfg: InnerConfig,
}

impl WeightedNormalSolver {
    pub fn new(model: &ForwardModel, cfg: InnerConfig) -> Self {
        let dense = (model.cols() <= cfg.direct_threshold).then(|| model.densify());
        Self {
            dense,
            rows: model.rows(),
            cols: model.cols(),
            cfg,
        }
    }

    pub fn is_direct(&self) -> bool {
        self.dense.is_some()
    }

    fn gram(&self, a: &[C64], w: &[f64]) -> DMatrix<Complex<f64>> {
        let n = self.cols;
        let mut h = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
        for i in 0..self.rows {
            let row = &a[i * n..(i + 1) * n];
            let wi = w[i];
            for j in 0..n {
                let cj = row[j].conj() * wi;
                for k in j..n {
                    h[(j, k)] += cj * row[k];
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                h[(j, k)] = h[(k, j)].conj();
            }
        }
        h
    }

    /// `x` with `A' W A x = rhs`; `warm` seeds the iterative path.
    pub fn solve(
        &self,
        model: &ForwardModel,
        w: &[f64],
        rhs: &[C64],
        field: FieldTag,
        warm: Option<&[C64]>,
    ) -> Result<Vec<C64>> {
        let n = self.cols;
        if let Some(a) = &self.dense {
            let h = self.gram(a, w);
            let singular = || Error::Singular("normal matrix A' W A is singular".into());
            if field.is_real() {
                let hr = h.map(|z| z.re);
                let b = DVector::from_iterator(n, rhs.iter().map(|z| z.re));
                let x = match hr.clone().cholesky() {
                    Some(c) => c.solve(&b),
                    None => hr.lu().solve(&b).ok_or_else(singular)?,
                };
                return Ok(x.iter().map(|&r| C64::new(r, 0.0)).collect());
            }
            let b = DVector::from_column_slice(rhs);
            let x = match h.clone().cholesky() {
                Some(c) => c.solve(&b),
                None => h.lu().solve(&b).ok_or_else(singular)?,
            };
            return Ok(x.iter().copied().collect());
        }
        let op = FnOp::new(n, |p: &[C64]| {
            let mut ap = model.apply_linear(p).expect("dimension fixed by solver");
            ap.iter_mut().zip(w).for_each(|(z, wi)| *z *= wi);
            let mut out = model.adjoint(&ap).expect("dimension fixed by solver");
            field.realify(&mut out);
            out
        });
        let x0 = warm.map_or_else(|| vec![ZERO; n], <[C64]>::to_vec);
        let r = cg_solve_from(&op, rhs, x0, self.cfg.cg_iters, self.cfg.cg_tol);
        if r.x.iter().any(|z| !z.is_finite()) {
            return Err(Error::Singular("CG diverged on A' W A".into()));
        }
        Ok(r.x)
    }
}

/// `x_k - (A' W A)^{-1} grad`.
pub fn mm_update_unregularized(ctx: &MajorizerContext, solver: &WeightedNormalSolver) -> Result<Vec<C64>> {
    let delta = solver.solve(ctx.model, &ctx.weights, &ctx.grad, ctx.field, None)?;
    Ok(sub(&ctx.anchor, &delta))
}

/// Result of an iterative inner solve.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// Surrogate objective after each accepted inner step.
    pub costs: Vec<f64>,
}

/// Minimizes `q(x) + beta ||T x||_1` by accelerated proximal gradient with
/// function-value restart, starting from the anchor.
pub fn mm_update_prox_l1(ctx: &MajorizerContext, l1: &SparseL1, cfg: &InnerConfig) -> Result<InnerOutcome> {
    let n = ctx.anchor.len();
    let op = FnOp::new(n, |p: &[C64]| ctx.hessian_apply(p));
    let mut lip = cfg.lipschitz_safety * power_method(&op, cfg.power_iters, 0x5eed, ctx.field.is_real()).eigenvalue;
    if !(lip > 0.0) {
        lip = 1.0;
    }
    let objective = |x: &[C64]| ctx.value(x) + l1.cost(x);
    let mut x = ctx.anchor.clone();
    let mut fx = objective(&x);
    let mut z = x.clone();
    let mut t: f64 = 1.0;
    let mut costs = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut restarted = false;
    while iterations < cfg.iters {
        iterations += 1;
        let g = ctx.gradient(&z);
        let trial: Vec<C64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let xn = l1.prox(&trial, 1.0 / lip, ctx.field);
        let fn_ = objective(&xn);
        if fn_ > fx {
            if restarted {
                // z = x already, so the step size itself is too long
                lip *= 2.0;
            }
            restarted = true;
            t = 1.0;
            z = x.clone();
            continue;
        }
        restarted = false;
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / tn;
        z = xn.iter().zip(&x).map(|(a, b)| a + (a - b) * mom).collect();
        let moved = norm(&sub(&xn, &x));
        let small = (fx - fn_).abs() <= cfg.tol * fx.abs().max(1.0) || moved <= cfg.tol * norm(&xn).max(1e-300);
        x = xn;
        fx = fn_;
        t = tn;
        costs.push(fx);
        if small {
            converged = true;
            break;
        }
    }
    Ok(InnerOutcome {
        x,
        iterations,
        converged,
        costs,
    })
}

/// Minimizes `q(x) + beta 1' h(T x; alpha)` by Polak-Ribiere nonlinear CG.
/// Each line step minimizes the quadratic majorizer of the Huber term along
/// the search direction, so the objective never increases.
pub fn mm_update_huber(ctx: &MajorizerContext, huber: &HuberTv, cfg: &InnerConfig) -> Result<InnerOutcome> {
    let field = ctx.field;
    let mut x = ctx.anchor.clone();
    // H (x - anchor), updated incrementally
    let mut hd = vec![ZERO; x.len()];
    let total_grad = |x: &[C64], hd: &[C64]| -> Vec<C64> {
        let mut g: Vec<C64> = ctx.grad.iter().zip(hd).map(|(a, b)| a + b).collect();
        g.iter_mut().zip(huber.gradient(x)).for_each(|(a, b)| *a += b);
        field.realify(&mut g);
        g
    };
    let mut g = total_grad(&x, &hd);
    let g0 = norm(&g);
    let mut p: Vec<C64> = g.iter().map(|v| -v).collect();
    let mut costs = Vec::new();
    let mut converged = g0 == 0.0;
    let mut iterations = 0;
    while !converged && iterations < cfg.iters {
        iterations += 1;
        let mut slope = real_inner(&g, &p);
        if slope >= 0.0 {
            p = g.iter().map(|v| -v).collect();
            slope = -norm_sqr(&g);
        }
        let hp = ctx.hessian_apply(&p);
        let den = real_inner(&p, &hp) + huber.curvature_along(&x, &p);
        if !(den > 0.0) {
            break;
        }
        let alpha = -slope / den;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += pi * alpha);
        hd.iter_mut().zip(&hp).for_each(|(d, h)| *d += h * alpha);
        let gn = total_grad(&x, &hd);
        let gg = norm_sqr(&g);
        let beta = (real_inner(&gn, &sub(&gn, &g)) / gg).max(0.0);
        p = gn.iter().zip(&p).map(|(gi, pi)| -gi + pi * beta).collect();
        g = gn;
        costs.push(ctx.value(&x) + huber.cost(&x));
        converged = norm(&g) <= cfg.tol * g0;
    }
    Ok(InnerOutcome {
        x,
        iterations,
        converged,
        costs,
    })
}

/// Settings for [`run_mm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmConfig {
    pub curvature: CurvatureKind,
    pub iters: usize,
    pub inner: InnerConfig,
}

impl MmConfig {
    pub fn new(curvature: CurvatureKind, iters: usize) -> Self {
        Self {
            curvature,
            iters,
            inner: InnerConfig::default(),
        }
    }
}

/// Outer MM loop: build the majorizer at `x_k`, then minimize it with the
/// solver matching the penalty (direct/CG, proximal gradient, or nonlinear
/// CG).
pub fn run_mm(problem: &Problem, cfg: &MmConfig, x0: &SignalVector, monitor: &Monitor) -> RunState {
    let field = problem.field;
    let dims = x0.dims();
    let mut x = x0.clone().with_field(field).into_values();
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(cfg.iters);
    let mut warnings = Vec::new();
    let mut status = RunStatus::Completed;
    let mut elapsed = Duration::ZERO;
    let t0 = Instant::now();
    let solver = problem
        .reg
        .is_none()
        .then(|| WeightedNormalSolver::new(problem.model(), cfg.inner));
    elapsed += t0.elapsed();
    for k in 1..=cfg.iters {
        let t0 = Instant::now();
        let step = (|| -> Result<Vec<C64>> {
            let ctx = MajorizerContext::new(problem, &x, cfg.curvature)?;
            let mut xn = match (problem.reg, &solver) {
                (None, Some(solver)) => mm_update_unregularized(&ctx, solver)?,
                (Some(Regularizer::SparseL1(l1)), _) => {
                    let out = mm_update_prox_l1(&ctx, l1, &cfg.inner)?;
                    if !out.converged {
                        warnings.push(format!("iteration {k}: prox inner loop hit its cap"));
                    }
                    out.x
                }
                (Some(Regularizer::HuberTv(h)), _) => mm_update_huber(&ctx, h, &cfg.inner)?.x,
                (None, None) => unreachable!("solver exists for unregularized problems"),
            };
            field.project(&mut xn);
            Ok(xn)
        })();
        match step.and_then(|xn| problem.cost(&xn).map(|c| (xn, c))) {
            Ok((xn, c)) => {
                elapsed += t0.elapsed();
                x = xn;
                trace.push(monitor.record(k, elapsed, c, &x));
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
