//! Shared numerical kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::FieldTag;
use crate::vecops::{axpy, inner, norm, real_inner, sign, C64, ZERO};

/// A square operator on `C^N` given only by its action.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
}

/// Wraps a closure as a [`LinearOp`].
pub struct FnOp<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[C64]) -> Vec<C64>> FnOp<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[C64]) -> Vec<C64>> LinearOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (self.f)(x)
    }
}

/// Output of [`power_method`].
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub eigenvalue: f64,
    pub eigenvector: Vec<C64>,
    /// Rayleigh quotient after each iteration.
    pub rayleigh: Vec<f64>,
}

/// Power iteration for the leading eigenpair of a Hermitian PSD operator.
///
/// The start vector is seeded; with `real` set it has zero imaginary part,
/// which keeps the iteration real for operators that map reals to reals.
pub fn power_method(op: &dyn LinearOp, iters: usize, seed: u64, real: bool) -> PowerResult {
    let n = op.dim();
    let mut v = random_unit(n, seed, real);
    let mut rayleigh = Vec::with_capacity(iters);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = op.apply(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            lambda = 0.0;
            rayleigh.push(0.0);
            break;
        }
        v = w.iter().map(|z| z / nw).collect();
        lambda = real_inner(&v, &op.apply(&v));
        rayleigh.push(lambda);
    }
    PowerResult {
        eigenvalue: lambda,
        eigenvector: v,
        rayleigh,
    }
}

/// Seeded random unit vector.
pub fn random_unit(n: usize, seed: u64, real: bool) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<C64> = (0..n)
        .map(|_| {
            let re = rng.random::<f64>() - 0.5;
            let im = if real { 0.0 } else { rng.random::<f64>() - 0.5 };
            C64::new(re, im)
        })
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    v
}

/// Output of [`cg_solve`].
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `||rhs - H x|| / ||rhs||` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for `H x = rhs` with `H` Hermitian PSD, from `x = 0`.
pub fn cg_solve(op: &dyn LinearOp, rhs: &[C64], iters: usize, tol: f64) -> CgResult {
    cg_solve_from(op, rhs, vec![ZERO; rhs.len()], iters, tol)
}

/// Conjugate gradient warm-started at `x0`.
pub fn cg_solve_from(op: &dyn LinearOp, rhs: &[C64], x0: Vec<C64>, iters: usize, tol: f64) -> CgResult {
    let rhs_norm = norm(rhs);
    let mut x = x0;
    if rhs_norm == 0.0 {
        return CgResult {
            x: vec![ZERO; rhs.len()],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let hx = op.apply(&x);
    let mut r: Vec<C64> = rhs.iter().zip(&hx).map(|(b, h)| b - h).collect();
    let mut p = r.clone();
    let mut rr = real_inner(&r, &r);
    let mut k = 0;
    while k < iters && rr.sqrt() > tol * rhs_norm {
        let hp = op.apply(&p);
        let php = real_inner(&p, &hp);
        if php <= 0.0 {
            break;
        }
        let alpha = rr / php;
        axpy(C64::new(alpha, 0.0), &p, &mut x);
        axpy(C64::new(-alpha, 0.0), &hp, &mut r);
        let rr_new = real_inner(&r, &r);
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + *pi * beta);
        rr = rr_new;
        k += 1;
    }
    let rel = rr.sqrt() / rhs_norm;
    CgResult {
        x,
        iterations: k,
        relative_residual: rel,
        converged: rel <= tol,
    }
}

fn quadratic_real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    if disc == 0.0 {
        let r = -b / (2.0 * a);
        return vec![r, r];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let mut roots = vec![r1, r2];
    roots.sort_by(f64::total_cmp);
    roots
}

/// All real roots (with multiplicity) of `c3 m^3 + c2 m^2 + c1 m + c0`,
/// ascending. Trigonometric form for three real roots, Cardano otherwise,
/// then one Newton step per root.
pub fn cubic_real_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    if c3 == 0.0 {
        return quadratic_real_roots(c2, c1, c0);
    }
    let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let mut roots = if p == 0.0 && q == 0.0 {
        vec![-shift; 3]
    } else {
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let s = disc.sqrt();
            let u = (-q / 2.0 - q.signum() * s).cbrt();
            let v = if u == 0.0 { 0.0 } else { -p / (3.0 * u) };
            vec![u + v - shift]
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3)
                .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
                .collect()
        }
    };
    let f = |m: f64| ((m + a) * m + b) * m + c;
    let df = |m: f64| (3.0 * m + 2.0 * a) * m + b;
    for r in roots.iter_mut() {
        let d = df(*r);
        if d != 0.0 {
            let cand = *r - f(*r) / d;
            if cand.is_finite() && f(cand).abs() <= f(*r).abs() {
                *r = cand;
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// `sign(z) max(|z| - tau, 0)`.
pub fn soft_threshold(z: C64, tau: f64) -> C64 {
    let a = z.norm();
    if a <= tau {
        ZERO
    } else {
        sign(z) * (a - tau)
    }
}

/// Central-difference gradient in the Wirtinger convention: derivative along
/// the real axis plus `i` times the derivative along the imaginary axis
/// (the latter only for complex fields).
pub fn finite_diff_grad<F>(mut f: F, x: &[C64], eps: f64, field: FieldTag) -> Result<Vec<C64>>
where
    F: FnMut(&[C64]) -> Result<f64>,
{
    let mut xp = x.to_vec();
    let mut g = vec![ZERO; x.len()];
    for j in 0..x.len() {
        let mut axes = vec![C64::new(1.0, 0.0)];
        if !field.is_real() {
            axes.push(C64::new(0.0, 1.0));
        }
        for dir in axes {
            xp[j] = x[j] + dir * eps;
            let fp = f(&xp)?;
            xp[j] = x[j] - dir * eps;
            let fm = f(&xp)?;
            xp[j] = x[j];
            g[j] += dir * ((fp - fm) / (2.0 * eps));
        }
    }
    Ok(g)
}

/// Settings for [`lbfgs_minimize`].
#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub iters: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            iters: 100,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    /// Cost after each accepted iteration.
    pub costs: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Eval {
    f: f64,
    g: Vec<f64>,
}

/// Strong-Wolfe line search (bracketing and zoom). Returns the accepted step
/// and the evaluation there, or `None` when no acceptable step is found.
fn wolfe_search<F>(f: &mut F, x: &[f64], p: &[f64], f0: f64, d0: f64, a_init: f64, cfg: &LbfgsConfig) -> Option<(f64, Eval)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (a, e) = wolfe_bracket_zoom(f, x, p, f0, d0, a_init, cfg)?;
    // Secant step on the directional derivative; exact for quadratics.
    let da = dot(&e.g, p);
    let a_sec = a * d0 / (d0 - da);
    if !(a_sec.is_finite() && a_sec > 0.0) || (a_sec - a).abs() <= 1e-3 * a {
        return Some((a, e));
    }
    let xs: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + a_sec * pi).collect();
    match f(&xs) {
        Ok((fs, gs)) if fs.is_finite() && fs <= e.f && dot(&gs, p).abs() <= -cfg.c2 * d0 => {
            Some((a_sec, Eval { f: fs, g: gs }))
        }
        _ => Some((a, e)),
    }
}

fn wolfe_bracket_zoom<F>(f: &mut F, x: &[f64], p: &[f64], f0: f64, d0: f64, a_init: f64, cfg: &LbfgsConfig) -> Option<(f64, Eval)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut eval = |a: f64| -> Eval {
        let xa: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + a * pi).collect();
        match f(&xa) {
            Ok((fv, g)) if fv.is_finite() => Eval { f: fv, g },
            _ => Eval {
                f: f64::INFINITY,
                g: vec![0.0; x.len()],
            },
        }
    };
    let mut best: Option<(f64, Eval)> = None;
    let keep_best = |a: f64, e: &Eval, best: &mut Option<(f64, Eval)>| {
        if e.f <= f0 + cfg.c1 * a * d0 && best.as_ref().is_none_or(|(_, b)| e.f < b.f) {
            *best = Some((a, Eval { f: e.f, g: e.g.clone() }));
        }
    };

    let (mut lo, mut f_lo, mut d_lo) = (0.0, f0, d0);
    let (mut hi, mut f_hi) = (f64::NAN, f64::NAN);
    let mut a = a_init;
    let mut bracketed = false;
    for i in 0..40 {
        let e = eval(a);
        keep_best(a, &e, &mut best);
        if e.f > f0 + cfg.c1 * a * d0 || (i > 0 && e.f >= f_lo) {
            hi = a;
            f_hi = e.f;
            bracketed = true;
            break;
        }
        let da = dot(&e.g, p);
        if da.abs() <= -cfg.c2 * d0 {
            return Some((a, e));
        }
        if da >= 0.0 {
            hi = lo;
            f_hi = f_lo;
            lo = a;
            f_lo = e.f;
            d_lo = da;
            bracketed = true;
            break;
        }
        lo = a;
        f_lo = e.f;
        d_lo = da;
        a *= 2.0;
    }
    if !bracketed {
        return best;
    }
    for _ in 0..50 {
        // safeguarded quadratic interpolation through (lo, f_lo, d_lo) and (hi, f_hi)
        let (l, h) = (lo.min(hi), lo.max(hi));
        let width = h - l;
        let denom = 2.0 * (f_hi - f_lo - d_lo * (hi - lo));
        let mut a = if denom.is_finite() && denom > 0.0 {
            lo - d_lo * (hi - lo) * (hi - lo) / denom
        } else {
            0.5 * (lo + hi)
        };
        if !(a > l + 0.1 * width && a < h - 0.1 * width) {
            a = 0.5 * (lo + hi);
        }
        let e = eval(a);
        keep_best(a, &e, &mut best);
        if e.f > f0 + cfg.c1 * a * d0 || e.f >= f_lo {
            hi = a;
            f_hi = e.f;
        } else {
            let da = dot(&e.g, p);
            if da.abs() <= -cfg.c2 * d0 {
                return Some((a, e));
            }
            if da * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = a;
            f_lo = e.f;
            d_lo = da;
        }
        if width < 1e-16 * h.abs().max(1e-300) {
            break;
        }
    }
    best
}

/// Limited-memory BFGS with a strong-Wolfe line search. `f` returns the cost
/// and gradient; errors and non-finite costs are treated as `+inf` inside the
/// line search. The callback sees every accepted iterate.
pub fn lbfgs_minimize<F, C>(mut f: F, x0: &[f64], cfg: &LbfgsConfig, mut on_iter: C) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(usize, &[f64], f64),
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Domain("initial cost is not finite".into()));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut costs = Vec::new();
    let mut converged = false;
    let mut k = 0;
    while k < cfg.iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm == 0.0 || gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &q);
            q.iter_mut().zip(&y_hist[i]).for_each(|(qj, yj)| *qj -= alphas[i] * yj);
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / gnorm,
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            q.iter_mut().zip(&s_hist[i]).for_each(|(qj, sj)| *qj += (alphas[i] - beta) * sj);
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &p);
        if d0 >= 0.0 {
            // lost descent; reset memory and fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            p = g.iter().map(|v| -v / gnorm).collect();
            d0 = dot(&g, &p);
        }
        let Some((a, e)) = wolfe_search(&mut f, &x, &p, fx, d0, 1.0, cfg) else {
            break;
        };
        let s: Vec<f64> = p.iter().map(|pi| a * pi).collect();
        let yv: Vec<f64> = e.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            s_hist.push(s.clone());
            y_hist.push(yv);
            if s_hist.len() > cfg.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        fx = e.f;
        g = e.g;
        k += 1;
        costs.push(fx);
        on_iter(k, &x, fx);
    }
    Ok(LbfgsResult {
        x,
        cost: fx,
        iterations: k,
        costs,
        converged,
    })
}

/// Packs a complex vector as `[re..., im...]` (or just `re` for real fields).
pub fn pack(x: &[C64], field: FieldTag) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|z| z.re).collect();
    if !field.is_real() {
        out.extend(x.iter().map(|z| z.im));
    }
    out
}

pub fn unpack(v: &[f64], n: usize, field: FieldTag) -> Vec<C64> {
    if field.is_real() {
        v[..n].iter().map(|&r| C64::new(r, 0.0)).collect()
    } else {
        (0..n).map(|j| C64::new(v[j], v[n + j])).collect()
    }
}

/// `||H||_2` estimate by power iteration (Hermitian PSD `H`).
pub fn spectral_norm_estimate(op: &dyn LinearOp, iters: usize, seed: u64, real: bool) -> f64 {
    power_method(op, iters, seed, real).eigenvalue
}

/// Maximal `|<Hu, w> - <u, Hw>|` over random probes, relative to `||H u|| ||w||`.
pub fn hermitian_defect(op: &dyn LinearOp, probes: usize, seed: u64) -> f64 {
    let n = op.dim();
    (0..probes)
        .map(|k| {
            let u = random_unit(n, seed + 2 * k as u64, false);
            let w = random_unit(n, seed + 2 * k as u64 + 1, false);
            let hu = op.apply(&u);
            let hw = op.apply(&w);
            (inner(&hu, &w) - inner(&u, &hw)).norm() / norm(&hu).max(1e-300)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl LinearOp {
        FnOp::new(d.len(), move |x: &[C64]| x.iter().zip(&d).map(|(a, b)| a * b).collect())
    }

    fn random_psd(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum();
            }
        }
        h
    }

    fn mat_op(h: Vec<f64>, n: usize) -> impl LinearOp {
        FnOp::new(n, move |x: &[C64]| {
            (0..n)
                .map(|i| (0..n).map(|j| x[j] * h[i * n + j]).sum())
                .collect()
        })
    }

    #[test]
    fn power_method_diagonal() {
        let r = power_method(&diag_op(vec![3.0, 1.0]), 100, 1, true);
        assert!((r.eigenvalue - 3.0).abs() < 1e-12);
        assert!((r.eigenvector[0].norm() - 1.0).abs() < 1e-12);
        let id = power_method(&diag_op(vec![1.0; 4]), 5, 2, false);
        assert!((id.eigenvalue - 1.0).abs() < 1e-14);
        assert!((norm(&id.eigenvector) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn power_method_residual_and_monotone_rayleigh() {
        let n = 8;
        let h = random_psd(n, 4);
        let op = mat_op(h, n);
        let r = power_method(&op, 200, 3, true);
        let hv = op.apply(&r.eigenvector);
        let res: f64 = hv
            .iter()
            .zip(&r.eigenvector)
            .map(|(a, b)| (a - b * r.eigenvalue).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-6, "residual {res}");
        for w in r.rayleigh.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(hermitian_defect(&op, 4, 1) < 1e-12);
    }

    #[test]
    fn cg_examples() {
        let rhs = vec![C64::new(1.0, 0.0); 3];
        let id = cg_solve(&diag_op(vec![1.0; 3]), &rhs, 10, 1e-12);
        assert_eq!(id.x, rhs);
        let r = cg_solve(&diag_op(vec![1.0, 2.0, 4.0]), &rhs, 10, 1e-12);
        assert!(r.converged);
        for (x, want) in r.x.iter().zip([1.0, 0.5, 0.25]) {
            assert!((x.re - want).abs() < 1e-12);
        }
        let capped = cg_solve(&mat_op(random_psd(6, 1), 6), &[C64::new(1.0, 0.5); 6], 1, 1e-14);
        assert!(!capped.converged);
        assert_eq!(capped.iterations, 1);
    }

    #[test]
    fn cg_error_energy_norm_is_monotone() {
        let n = 6;
        let h = random_psd(n, 8);
        let op = mat_op(h.clone(), n);
        let rhs: Vec<C64> = (0..n).map(|k| C64::new(k as f64, 1.0)).collect();
        let exact = cg_solve(&op, &rhs, 200, 1e-15).x;
        let mut prev = f64::INFINITY;
        for it in 0..=n {
            let x = cg_solve(&op, &rhs, it, 0.0).x;
            let e: Vec<C64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
            let energy = real_inner(&e, &op.apply(&e));
            assert!(energy <= prev * (1.0 + 1e-9) + 1e-20);
            prev = energy;
        }
    }

    #[test]
    fn cubic_examples() {
        let r = cubic_real_roots(1.0, -6.0, 11.0, -6.0);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(cubic_real_roots(1.0, 0.0, 0.0, 0.0), vec![0.0; 3]);
        let r = cubic_real_roots(1.0, 0.0, 1.0, 0.0);
        assert_eq!(r.len(), 1);
        assert!(r[0].abs() < 1e-15);
        assert_eq!(cubic_real_roots(0.0, 1.0, -3.0, 2.0), vec![1.0, 2.0]);
    }

    #[test]
    fn cubic_residuals_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() * 20.0 - 10.0);
            let roots = cubic_real_roots(c[0], c[1], c[2], c[3]);
            assert!(!roots.is_empty());
            for m in roots {
                let res = (((m + c[1] / c[0]) * m + c[2] / c[0]) * m + c[3] / c[0]).abs();
                let scale = 1.0 + m.abs().powi(3);
                assert!(res < 1e-9 * scale, "{c:?} root {m} residual {res}");
            }
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(C64::new(0.5, 0.5), 1.0), ZERO);
        assert_eq!(soft_threshold(C64::new(3.0, 0.0), 1.0), C64::new(2.0, 0.0));
        let z = C64::from_polar(5.0, 0.7);
        let s = soft_threshold(z, 2.0);
        assert!((s.arg() - 0.7).abs() < 1e-14);
        assert!((s.norm() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn finite_differences() {
        let x = vec![C64::new(1.0, 0.0), ZERO, ZERO];
        let g = finite_diff_grad(|z| Ok(crate::vecops::norm_sqr(z)), &x, 1e-6, FieldTag::Real).unwrap();
        assert!((g[0].re - 2.0).abs() < 1e-6);
        assert!(g[1].norm() < 1e-6);
        // Richardson: halving eps cuts the error of a cubic by about four
        let f = |z: &[C64]| Ok(z[0].re.powi(3).sin());
        let x = vec![C64::new(0.8, 0.0)];
        let exact = 3.0 * 0.64 * (0.512f64).cos();
        let e1 = (finite_diff_grad(f, &x, 1e-2, FieldTag::Real).unwrap()[0].re - exact).abs();
        let e2 = (finite_diff_grad(f, &x, 5e-3, FieldTag::Real).unwrap()[0].re - exact).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn lbfgs_quadratic_bowl() {
        let d = [1.0, 2.0, 3.0, 5.0, 8.0];
        let target = [1.0, -2.0, 0.5, 3.0, -1.0];
        let f = |x: &[f64]| {
            let c = x.iter().zip(&d).zip(&target).map(|((xi, di), ti)| 0.5 * di * (xi - ti).powi(2)).sum();
            let g = x.iter().zip(&d).zip(&target).map(|((xi, di), ti)| di * (xi - ti)).collect();
            Ok((c, g))
        };
        let cfg = LbfgsConfig {
            iters: 2 * d.len(),
            ..Default::default()
        };
        let r = lbfgs_minimize(f, &[0.0; 5], &cfg, |_, _, _| {}).unwrap();
        for (a, b) in r.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-8, "{:?}", r.x);
        }
        for w in r.costs.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn lbfgs_zero_gradient_and_rosenbrock() {
        let flat = |_: &[f64]| Ok((1.0, vec![0.0, 0.0]));
        let r = lbfgs_minimize(flat, &[3.0, 4.0], &LbfgsConfig::default(), |_, _, _| {}).unwrap();
        assert_eq!(r.x, vec![3.0, 4.0]);
        assert_eq!(r.iterations, 0);

        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let c = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((c, g))
        };
        let cfg = LbfgsConfig {
            iters: 200,
            ..Default::default()
        };
        let r = lbfgs_minimize(rosen, &[-1.2, 1.0], &cfg, |_, _, _| {}).unwrap();
        assert!(r.cost < 1e-6, "cost {}", r.cost);
        for w in r.costs.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
