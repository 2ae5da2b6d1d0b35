//! Negative log-likelihoods, their ascent directions and curvatures, and the
//! Huber-smoothed finite-difference regularizer.
//!
//! Gradients follow the Wirtinger convention: for a real-valued cost `f` of a
//! complex vector the returned direction is `2 df/d(conj x)`, so that
//! `f(x + e d) = f(x) + e Re{grad' d} + o(e)`. For real fields the real part is
//! taken, which is then the ordinary gradient.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::forward::ForwardModel;
use crate::signal::FieldTag;
use crate::vecops::{real_inner, C64, ZERO};

/// Marginal Poisson negative log-likelihood `(|v|^2 + b) - y log(|v|^2 + b)`,
/// with `0 log 0 = 0`.
pub fn psi(v: C64, y: f64, b: f64) -> Result<f64> {
    let mean = v.norm_sqr() + b;
    if y == 0.0 {
        return Ok(mean);
    }
    if mean <= 0.0 {
        return Err(Error::Domain(format!("zero Poisson mean with count y = {y}")));
    }
    Ok(mean - y * mean.ln())
}

/// Ascent direction `2 v (1 - y / (|v|^2 + b))`.
pub fn psi_dot(v: C64, y: f64, b: f64) -> Result<C64> {
    let mean = v.norm_sqr() + b;
    if y == 0.0 {
        return Ok(v * 2.0);
    }
    if mean <= 0.0 {
        return Err(Error::Domain("psi_dot at zero mean".into()));
    }
    Ok(v * (2.0 * (1.0 - y / mean)))
}

/// Second derivative `2 + 2y (|v|^2 - b) / (|v|^2 + b)^2` of the radial
/// profile at `r = |v|`.
pub fn psi_ddot(v: C64, y: f64, b: f64) -> Result<f64> {
    let r2 = v.norm_sqr();
    let mean = r2 + b;
    if y == 0.0 {
        return Ok(2.0);
    }
    if mean <= 0.0 {
        return Err(Error::Domain("psi_ddot at zero mean".into()));
    }
    Ok(2.0 + 2.0 * y * (r2 - b) / (mean * mean))
}

/// Expected squared ascent magnitude under `y ~ Poisson(|v|^2 + b)`.
pub fn fisher_marginal_poisson(v: C64, b: f64) -> f64 {
    let r2 = v.norm_sqr();
    if r2 == 0.0 {
        return 0.0;
    }
    4.0 * r2 / (r2 + b)
}

/// Same quantity for the Gaussian cost, `16 |v|^2 (|v|^2 + b)`.
pub fn fisher_marginal_gaussian(v: C64, b: f64) -> f64 {
    let r2 = v.norm_sqr();
    16.0 * r2 * (r2 + b)
}

/// Huber function: `|t|^2 / 2` inside the knee, `alpha |t| - alpha^2 / 2` outside.
pub fn huber(t: C64, alpha: f64) -> f64 {
    let a = t.norm();
    if a < alpha {
        0.5 * a * a
    } else {
        alpha * a - 0.5 * alpha * alpha
    }
}

pub fn huber_dot(t: C64, alpha: f64) -> C64 {
    let a = t.norm();
    if a < alpha {
        t
    } else {
        t * (alpha / a)
    }
}

/// Curvature `min(alpha / |t|, 1)` of Huber's quadratic majorizer at `t`.
pub fn huber_weight(t: C64, alpha: f64) -> f64 {
    let a = t.norm();
    if a == 0.0 {
        1.0
    } else {
        (alpha / a).min(1.0)
    }
}

/// Which noise model a data term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Likelihood {
    Poisson,
    Gaussian,
}

/// Data-fit cost over `v = A x`: Poisson ML `sum psi(v_i; y_i, b_i)` or the
/// Gaussian least-squares `sum (y_i - b_i - |v_i|^2)^2`.
///
/// `y` is stored as reals so that noiseless means can be used as data.
#[derive(Debug, Clone)]
pub struct Objective {
    model: Arc<ForwardModel>,
    y: Vec<f64>,
    likelihood: Likelihood,
}

impl Objective {
    pub fn new(model: impl Into<Arc<ForwardModel>>, y: Vec<f64>, likelihood: Likelihood) -> Result<Self> {
        let model = model.into();
        check_len("measurements", model.rows(), y.len())?;
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("measurements must be finite and nonnegative".into()));
        }
        Ok(Self { model, y, likelihood })
    }

    pub fn poisson(model: impl Into<Arc<ForwardModel>>, y: Vec<f64>) -> Result<Self> {
        Self::new(model, y, Likelihood::Poisson)
    }

    pub fn gaussian(model: impl Into<Arc<ForwardModel>>, y: Vec<f64>) -> Result<Self> {
        Self::new(model, y, Likelihood::Gaussian)
    }

    /// Same data and model under a different noise model.
    pub fn with_likelihood(&self, likelihood: Likelihood) -> Self {
        Self {
            model: Arc::clone(&self.model),
            y: self.y.clone(),
            likelihood,
        }
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn model_arc(&self) -> Arc<ForwardModel> {
        Arc::clone(&self.model)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    /// Cost evaluated from the measurement-domain vector `v = A x`.
    pub fn cost_at(&self, v: &[C64]) -> Result<f64> {
        let b = self.model.background();
        match self.likelihood {
            Likelihood::Poisson => v
                .iter()
                .zip(&self.y)
                .zip(b)
                .try_fold(0.0, |acc, ((&vi, &yi), &bi)| Ok(acc + psi(vi, yi, bi)?)),
            Likelihood::Gaussian => Ok(v
                .iter()
                .zip(&self.y)
                .zip(b)
                .map(|((vi, yi), bi)| {
                    let r = yi - bi - vi.norm_sqr();
                    r * r
                })
                .sum()),
        }
    }

    /// Per-measurement ascent directions at `v = A x`.
    pub fn ascent_at(&self, v: &[C64]) -> Result<Vec<C64>> {
        let b = self.model.background();
        match self.likelihood {
            Likelihood::Poisson => v
                .iter()
                .zip(&self.y)
                .zip(b)
                .map(|((&vi, &yi), &bi)| psi_dot(vi, yi, bi))
                .collect(),
            Likelihood::Gaussian => Ok(v
                .iter()
                .zip(&self.y)
                .zip(b)
                .map(|((&vi, &yi), &bi)| vi * (4.0 * (vi.norm_sqr() - yi + bi)))
                .collect()),
        }
    }

    /// Diagonal of the per-measurement Fisher information at `v`.
    pub fn fisher_weights(&self, v: &[C64]) -> Vec<f64> {
        let b = self.model.background();
        let f = match self.likelihood {
            Likelihood::Poisson => fisher_marginal_poisson,
            Likelihood::Gaussian => fisher_marginal_gaussian,
        };
        v.iter().zip(b).map(|(&vi, &bi)| f(vi, bi)).collect()
    }

    pub fn cost(&self, x: &[C64]) -> Result<f64> {
        self.cost_at(&self.model.apply(x)?)
    }

    pub fn gradient(&self, x: &[C64], field: FieldTag) -> Result<Vec<C64>> {
        let v = self.model.apply(x)?;
        self.gradient_at(&v, field)
    }

    /// `A' psi_dot(v)`, real part for real fields.
    pub fn gradient_at(&self, v: &[C64], field: FieldTag) -> Result<Vec<C64>> {
        let mut g = self.model.adjoint(&self.ascent_at(v)?)?;
        field.realify(&mut g);
        Ok(g)
    }
}

/// Anisotropic first-difference operator `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    /// `(Tx)_k = x_{k+1} - x_k` over a length-`n` vector.
    Chain { n: usize },
    /// Horizontal then vertical differences of a row-major `h x w` image,
    /// without boundary rows.
    Grid { height: usize, width: usize },
}

impl DiffOp {
    /// Chain for unshaped signals, grid for images.
    pub fn for_signal(n: usize, dims: Option<(usize, usize)>) -> Self {
        match dims {
            Some((h, w)) if h > 1 && w > 1 => DiffOp::Grid { height: h, width: w },
            _ => DiffOp::Chain { n },
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            DiffOp::Chain { n } => n,
            DiffOp::Grid { height, width } => height * width,
        }
    }

    pub fn rows(&self) -> usize {
        match *self {
            DiffOp::Chain { n } => n.saturating_sub(1),
            DiffOp::Grid { height, width } => height * (width - 1) + (height - 1) * width,
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        match *self {
            DiffOp::Chain { .. } => x.windows(2).map(|w| w[1] - w[0]).collect(),
            DiffOp::Grid { height, width } => {
                let mut out = Vec::with_capacity(self.rows());
                for i in 0..height {
                    for j in 0..width - 1 {
                        out.push(x[i * width + j + 1] - x[i * width + j]);
                    }
                }
                for i in 0..height - 1 {
                    for j in 0..width {
                        out.push(x[(i + 1) * width + j] - x[i * width + j]);
                    }
                }
                out
            }
        }
    }

    pub fn adjoint(&self, z: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.cols()];
        match *self {
            DiffOp::Chain { .. } => {
                for (k, zk) in z.iter().enumerate() {
                    out[k + 1] += zk;
                    out[k] -= zk;
                }
            }
            DiffOp::Grid { height, width } => {
                let mut k = 0;
                for i in 0..height {
                    for j in 0..width - 1 {
                        out[i * width + j + 1] += z[k];
                        out[i * width + j] -= z[k];
                        k += 1;
                    }
                }
                for i in 0..height - 1 {
                    for j in 0..width {
                        out[(i + 1) * width + j] += z[k];
                        out[i * width + j] -= z[k];
                        k += 1;
                    }
                }
            }
        }
        out
    }
}

/// `beta * sum_k h([Tx]_k; alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberTv {
    pub beta: f64,
    pub alpha: f64,
    pub diff: DiffOp,
}

impl HuberTv {
    pub fn new(beta: f64, alpha: f64, diff: DiffOp) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { beta, alpha, diff })
    }

    /// Unweighted `R(x) = 1' h.(Tx; alpha)`.
    pub fn penalty(&self, x: &[C64]) -> f64 {
        self.diff.apply(x).iter().map(|&t| huber(t, self.alpha)).sum()
    }

    pub fn cost(&self, x: &[C64]) -> f64 {
        self.beta * self.penalty(x)
    }

    /// `beta T' h_dot.(Tx; alpha)`.
    pub fn gradient(&self, x: &[C64]) -> Vec<C64> {
        let hd: Vec<C64> = self.diff.apply(x).iter().map(|&t| huber_dot(t, self.alpha)).collect();
        let mut g = self.diff.adjoint(&hd);
        g.iter_mut().for_each(|z| *z *= self.beta);
        g
    }

    /// Huber majorizer weights `min(alpha / |Tx|, 1)`.
    pub fn weights(&self, x: &[C64]) -> Vec<f64> {
        self.diff.apply(x).iter().map(|&t| huber_weight(t, self.alpha)).collect()
    }

    /// `beta (Tp)' D2 (Tp)` with `D2` taken at `x`.
    pub fn curvature_along(&self, x: &[C64], p: &[C64]) -> f64 {
        let w = self.weights(x);
        let tp = self.diff.apply(p);
        self.beta * w.iter().zip(&tp).map(|(wi, t)| wi * t.norm_sqr()).sum::<f64>()
    }
}

/// Orthonormal sparsifying transform with a closed-form `l1` prox.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrthoTransform {
    Identity,
    /// Multi-level orthonormal Haar wavelet; length must be a power of two.
    Haar,
}

impl OrthoTransform {
    pub fn forward(&self, x: &[C64]) -> Vec<C64> {
        match self {
            OrthoTransform::Identity => x.to_vec(),
            OrthoTransform::Haar => {
                let mut out = x.to_vec();
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let mut len = out.len();
                let mut tmp = vec![ZERO; len];
                while len > 1 {
                    let half = len / 2;
                    for k in 0..half {
                        let (a, b) = (out[2 * k], out[2 * k + 1]);
                        tmp[k] = (a + b) * s;
                        tmp[half + k] = (a - b) * s;
                    }
                    out[..len].copy_from_slice(&tmp[..len]);
                    len = half;
                }
                out
            }
        }
    }

    pub fn inverse(&self, z: &[C64]) -> Vec<C64> {
        match self {
            OrthoTransform::Identity => z.to_vec(),
            OrthoTransform::Haar => {
                let mut out = z.to_vec();
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let n = out.len();
                let mut tmp = vec![ZERO; n];
                let mut len = 2;
                while len <= n {
                    let half = len / 2;
                    for k in 0..half {
                        let (a, d) = (out[k], out[half + k]);
                        tmp[2 * k] = (a + d) * s;
                        tmp[2 * k + 1] = (a - d) * s;
                    }
                    out[..len].copy_from_slice(&tmp[..len]);
                    len *= 2;
                }
                out
            }
        }
    }
}

/// Non-smooth `beta ||T x||_1` with orthonormal `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseL1 {
    pub beta: f64,
    pub transform: OrthoTransform,
}

impl SparseL1 {
    pub fn new(beta: f64, transform: OrthoTransform, n: usize) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
        }
        if transform == OrthoTransform::Haar && !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("Haar transform needs a power-of-two length, got {n}")));
        }
        Ok(Self { beta, transform })
    }

    pub fn cost(&self, x: &[C64]) -> f64 {
        self.beta * self.transform.forward(x).iter().map(|z| z.norm()).sum::<f64>()
    }

    /// `argmin_x tau ||Tx||_1 + ||x - z||^2 / 2`, with `tau = beta * step`.
    pub fn prox(&self, z: &[C64], step: f64, field: FieldTag) -> Vec<C64> {
        let tau = self.beta * step;
        let mut coeffs = self.transform.forward(z);
        coeffs
            .iter_mut()
            .for_each(|c| *c = crate::numerics::soft_threshold(*c, tau));
        let mut x = self.transform.inverse(&coeffs);
        field.realify(&mut x);
        x
    }
}

/// Optional penalty added to the data term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    HuberTv(HuberTv),
    SparseL1(SparseL1),
}

impl Regularizer {
    pub fn cost(&self, x: &[C64]) -> f64 {
        match self {
            Regularizer::HuberTv(h) => h.cost(x),
            Regularizer::SparseL1(l) => l.cost(x),
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            Regularizer::HuberTv(h) => h.beta,
            Regularizer::SparseL1(l) => l.beta,
        }
    }
}

/// Data term plus optional penalty over a given field:
/// `Psi(x) = f(x) + beta R(x)`.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub objective: &'a Objective,
    pub reg: Option<&'a Regularizer>,
    pub field: FieldTag,
}

impl<'a> Problem<'a> {
    pub fn new(objective: &'a Objective, reg: Option<&'a Regularizer>, field: FieldTag) -> Self {
        Self { objective, reg, field }
    }

    pub fn model(&self) -> &ForwardModel {
        self.objective.model()
    }

    pub fn huber(&self) -> Option<&HuberTv> {
        match self.reg {
            Some(Regularizer::HuberTv(h)) => Some(h),
            _ => None,
        }
    }

    pub fn cost(&self, x: &[C64]) -> Result<f64> {
        let v = self.model().apply(x)?;
        self.cost_with(x, &v)
    }

    /// Cost when `v = A x` is already available.
    pub fn cost_with(&self, x: &[C64], v: &[C64]) -> Result<f64> {
        let data = self.objective.cost_at(v)?;
        Ok(data + self.reg.map_or(0.0, |r| r.cost(x)))
    }

    /// Gradient of the smooth part; errors for non-smooth penalties.
    pub fn gradient(&self, x: &[C64]) -> Result<Vec<C64>> {
        let v = self.model().apply(x)?;
        self.gradient_with(x, &v)
    }

    pub fn gradient_with(&self, x: &[C64], v: &[C64]) -> Result<Vec<C64>> {
        let mut g = self.objective.gradient_at(v, self.field)?;
        match self.reg {
            None => {}
            Some(Regularizer::HuberTv(h)) => {
                let gr = h.gradient(x);
                g.iter_mut().zip(&gr).for_each(|(a, b)| *a += b);
                self.field.realify(&mut g);
            }
            Some(Regularizer::SparseL1(_)) => {
                return Err(Error::InvalidArgument(
                    "l1 penalty is not differentiable; use a Huber penalty or a proximal solver".into(),
                ))
            }
        }
        Ok(g)
    }

    /// Directional derivative `Re{grad' d}`.
    pub fn slope(&self, grad: &[C64], d: &[C64]) -> f64 {
        real_inner(grad, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const C: fn(f64, f64) -> C64 = C64::new;

    #[test]
    fn psi_examples() {
        assert_eq!(psi(C(1.0, 0.0), 0.0, 1.0).unwrap(), 2.0);
        assert_eq!(psi(ZERO, 0.0, 0.0).unwrap(), 0.0);
        let want = 6.0 - 6.0 * 6f64.ln();
        assert!((psi(C(2.0, 0.0), 6.0, 2.0).unwrap() - want).abs() < 1e-14);
        assert!((want + 4.7506).abs() < 1e-4);
        assert!(psi(ZERO, 1.0, 0.0).is_err());
    }

    #[test]
    fn psi_dot_examples() {
        assert_eq!(psi_dot(C(1.0, 0.0), 2.0, 1.0).unwrap(), ZERO);
        assert_eq!(psi_dot(C(1.0, 0.0), 0.0, 5.0).unwrap(), C(2.0, 0.0));
        let d = psi_dot(C(0.0, 1.0), 4.0, 1.0).unwrap();
        assert!((d - C(0.0, -2.0)).norm() < 1e-15);
        assert!(psi_dot(ZERO, 1.0, 0.0).is_err());
    }

    #[test]
    fn psi_ddot_examples() {
        let b: f64 = 0.7;
        assert!((psi_ddot(C(b.sqrt(), 0.0), 3.0, b).unwrap() - 2.0).abs() < 1e-14);
        let y = 5.0;
        let max = psi_ddot(C((3.0 * b).sqrt(), 0.0), y, b).unwrap();
        assert!((max - (2.0 + y / (4.0 * b))).abs() < 1e-12);
        assert!((psi_ddot(C(1.0, 0.0), 6.0, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(psi_ddot(ZERO, 1.0, 0.0).is_err());
    }

    #[test]
    fn fisher_marginals() {
        assert_eq!(fisher_marginal_poisson(ZERO, 1.0), 0.0);
        assert!((fisher_marginal_poisson(C(1.0, 0.0), 1e-14) - 4.0).abs() < 1e-12);
        assert_eq!(fisher_marginal_poisson(C(1.0, 0.0), 1.0), 2.0);
        assert_eq!(fisher_marginal_gaussian(ZERO, 1.0), 0.0);
        assert_eq!(fisher_marginal_gaussian(C(1.0, 0.0), 0.0), 16.0);
        assert_eq!(fisher_marginal_gaussian(C(1.0, 0.0), 1.0), 32.0);
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(ZERO, 1.0), 0.0);
        assert_eq!(huber_weight(ZERO, 1.0), 1.0);
        let a = 0.3;
        let inside = 0.5 * a * a;
        let outside = a * a - 0.5 * a * a;
        assert!((huber(C(a, 0.0), a) - inside).abs() < 1e-15);
        assert!((inside - outside).abs() < 1e-15);
        assert_eq!(huber(C(2.0, 0.0), 1.0), 1.5);
        assert_eq!(huber_dot(C(2.0, 0.0), 1.0), C(1.0, 0.0));
        assert_eq!(huber_weight(C(2.0, 0.0), 1.0), 0.5);
        assert_eq!(huber_dot(C(0.0, -0.5), 1.0), C(0.0, -0.5));
    }

    #[test]
    fn huber_is_convex_and_c1() {
        let alpha = 0.4;
        let h = 1e-3;
        for k in -2000..2000 {
            let t = k as f64 * 1e-3;
            let dd = huber(C(t + h, 0.0), alpha) - 2.0 * huber(C(t, 0.0), alpha) + huber(C(t - h, 0.0), alpha);
            assert!(dd >= -1e-9);
        }
        let e = 1e-12;
        let left = huber_dot(C(alpha - e, 0.0), alpha).re;
        let right = huber_dot(C(alpha + e, 0.0), alpha).re;
        assert!((left - right).abs() < 1e-9);
    }

    #[test]
    fn diff_ops_annihilate_constants_and_are_adjoint() {
        for op in [DiffOp::Chain { n: 6 }, DiffOp::Grid { height: 3, width: 4 }] {
            let n = op.cols();
            let c = vec![C(2.5, -1.0); n];
            assert!(op.apply(&c).iter().all(|z| z.norm() == 0.0));
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x: Vec<C64> = (0..n).map(|_| C(rng.random(), rng.random())).collect();
            let z: Vec<C64> = (0..op.rows()).map(|_| C(rng.random(), rng.random())).collect();
            let lhs = crate::vecops::inner(&z, &op.apply(&x));
            let rhs = crate::vecops::inner(&op.adjoint(&z), &x);
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert_eq!(DiffOp::Grid { height: 3, width: 4 }.rows(), 3 * 3 + 2 * 4);
    }

    #[test]
    fn huber_tv_examples() {
        let reg = HuberTv::new(3.0, 100.0, DiffOp::Chain { n: 2 }).unwrap();
        assert_eq!(reg.penalty(&[ZERO, C(1.0, 0.0)]), 0.5);
        let flat = vec![C(0.3, 0.0); 5];
        let reg5 = HuberTv::new(3.0, 0.1, DiffOp::Chain { n: 5 }).unwrap();
        assert_eq!(reg5.cost(&flat), 0.0);
        assert!(reg5.gradient(&flat).iter().all(|z| z.norm() == 0.0));
        assert!(HuberTv::new(-1.0, 0.1, DiffOp::Chain { n: 2 }).is_err());
        assert!(HuberTv::new(1.0, 0.0, DiffOp::Chain { n: 2 }).is_err());
    }

    #[test]
    fn huber_tv_gradient_matches_finite_differences() {
        let reg = HuberTv::new(2.0, 0.1, DiffOp::Grid { height: 3, width: 3 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<C64> = (0..9).map(|_| C(rng.random(), 0.0)).collect();
        let g = reg.gradient(&x);
        let fd = finite_diff_grad(|z| Ok(reg.cost(z)), &x, 1e-6, FieldTag::Real).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn haar_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<C64> = (0..8).map(|_| C(rng.random(), rng.random())).collect();
        let z = OrthoTransform::Haar.forward(&x);
        assert!((crate::vecops::norm(&z) - crate::vecops::norm(&x)).abs() < 1e-12);
        let back = OrthoTransform::Haar.inverse(&z);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(SparseL1::new(1.0, OrthoTransform::Haar, 6).is_err());
    }

    #[test]
    fn objective_examples() {
        let one = ForwardModel::dense(1, 1, vec![C(1.0, 0.0)]).unwrap().with_uniform_background(1.0).unwrap();
        let obj = Objective::poisson(one.clone(), vec![2.0]).unwrap();
        let want = 2.0 - 2.0 * 2f64.ln();
        assert!((obj.cost(&[C(1.0, 0.0)]).unwrap() - want).abs() < 1e-15);

        let m = ForwardModel::gaussian_random(5, 3, 2).unwrap().with_uniform_background(0.2).unwrap();
        let g = Objective::gaussian(m.clone(), vec![0.2; 5]).unwrap();
        assert_eq!(g.cost(&[ZERO; 3]).unwrap(), 0.0);

        let p = Objective::poisson(m, vec![0.2; 5]).unwrap();
        let grad = p.gradient(&[ZERO; 3], FieldTag::Complex).unwrap();
        assert!(grad.iter().all(|z| z.norm() == 0.0));
        assert!(Objective::poisson(one, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn complex_gradient_is_wirtinger_ascent() {
        let m = ForwardModel::gaussian_random(12, 4, 5).unwrap().with_uniform_background(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(0..4) as f64).collect();
        let x: Vec<C64> = (0..4).map(|_| C(rng.random(), rng.random())).collect();
        let d: Vec<C64> = (0..4).map(|_| C(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        for lik in [Likelihood::Poisson, Likelihood::Gaussian] {
            let obj = Objective::new(m.clone(), y.clone(), lik).unwrap();
            let g = obj.gradient(&x, FieldTag::Complex).unwrap();
            let eps = 1e-6;
            let fp = obj.cost(&crate::vecops::step(&x, -eps, &d)).unwrap();
            let fm = obj.cost(&crate::vecops::step(&x, eps, &d)).unwrap();
            let fd = (fp - fm) / (2.0 * eps);
            let an = real_inner(&g, &d);
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{lik:?}: {fd} vs {an}");
        }
    }

    #[test]
    fn problem_rejects_gradient_of_l1() {
        let m = ForwardModel::gaussian_random(3, 2, 5).unwrap().with_uniform_background(0.3).unwrap();
        let obj = Objective::poisson(m, vec![0.0; 3]).unwrap();
        let reg = Regularizer::SparseL1(SparseL1::new(1.0, OrthoTransform::Identity, 2).unwrap());
        let p = Problem::new(&obj, Some(&reg), FieldTag::Real);
        assert!(p.gradient(&[ZERO; 2]).is_err());
        assert!(p.cost(&[C(1.0, 0.0), ZERO]).unwrap() > 1.0 - 1e-12);
    }
}
