//! Small dense vector helpers over `Complex64` slices.

use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Standard inner product `a' b = sum conj(a_i) b_i`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `Re{a' b}`, the real inner product of the underlying R^2N vectors.
pub fn real_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `x - mu * d`
pub fn step(x: &[C64], mu: f64, d: &[C64]) -> Vec<C64> {
    x.iter().zip(d).map(|(a, b)| a - b * mu).collect()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[C64], s: f64) -> Vec<C64> {
    a.iter().map(|z| z * s).collect()
}

/// Unit-modulus sign with `sign(0) = 1`.
pub fn sign(z: C64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        ONE
    } else {
        z / r
    }
}

pub fn from_real(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&r| C64::new(r, 0.0)).collect()
}

pub fn weighted_norm_sqr(w: &[f64], v: &[C64]) -> f64 {
    w.iter().zip(v).map(|(wi, vi)| wi * vi.norm_sqr()).sum()
}
