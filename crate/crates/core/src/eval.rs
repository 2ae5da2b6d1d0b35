//! Spectral initialization, global-phase handling, quality metrics and
//! iteration traces.

use std::time::Duration;

use crate::error::{check_len, Error, Result};
use crate::forward::ForwardModel;
use crate::numerics::{power_method, random_unit, FnOp};
use crate::signal::{FieldTag, SignalVector};
use crate::vecops::{inner, norm_sqr, sign, C64};

/// PSNR reported for an exact reconstruction.
pub const PSNR_CAP_DB: f64 = 300.0;

/// Leading eigenvector of `A' diag{y / (y + 1)} A`, unit norm (entrywise
/// magnitude for nonnegative fields).
///
/// With all-zero data the operator vanishes and a seeded random unit vector
/// is returned instead.
pub fn spectral_init(model: &ForwardModel, y: &[f64], field: FieldTag, iters: usize, seed: u64) -> Result<SignalVector> {
    check_len("measurements", model.rows(), y.len())?;
    let real = field.is_real();
    if y.iter().all(|&v| v == 0.0) {
        log::warn!("spectral init: all counts are zero, returning a random unit vector");
        return Ok(unsigned_estimate(random_unit(model.cols(), seed, real), field));
    }
    let w: Vec<f64> = y.iter().map(|&v| v / (v + 1.0)).collect();
    let op = FnOp::new(model.cols(), |x: &[C64]| {
        let mut v = model.apply_linear(x).expect("dimension checked");
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi *= wi);
        let mut out = model.adjoint(&v).expect("dimension checked");
        if real {
            out.iter_mut().for_each(|z| z.im = 0.0);
        }
        out
    });
    let r = power_method(&op, iters, seed, real);
    Ok(unsigned_estimate(r.eigenvector, field))
}

/// The eigenvector sign is arbitrary, so nonnegative fields take `|x|`
/// instead of clamping.
fn unsigned_estimate(x: Vec<C64>, field: FieldTag) -> SignalVector {
    match field {
        FieldTag::RealNonnegative => {
            SignalVector::projected(x.iter().map(|z| C64::new(z.norm(), 0.0)).collect(), field, None)
        }
        _ => SignalVector::projected(x, FieldTag::Complex, None).with_field(field),
    }
}

/// Closed-form least-squares scale for `|alpha A x0|^2 ~ y - b`:
/// `sqrt((y - b)' |A x0|^2) / ||A x0||_4^2`, or zero when the correlation is
/// negative.
pub fn scale_fit(model: &ForwardModel, y: &[f64], x0: &[C64]) -> Result<f64> {
    check_len("measurements", model.rows(), y.len())?;
    let v = model.apply_linear(x0)?;
    let b = model.background();
    let p: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
    let den: f64 = p.iter().map(|q| q * q).sum();
    if den == 0.0 {
        return Err(Error::Degenerate("A x0 = 0 in scale fit".into()));
    }
    let num: f64 = p.iter().zip(y).zip(b).map(|((pi, yi), bi)| (yi - bi) * pi).sum();
    if num < 0.0 {
        log::warn!("scale fit: negative correlation {num:.3e}, using zero scale");
        return Ok(0.0);
    }
    Ok((num / den).sqrt())
}

/// `|alpha x0|` for nonnegative fields, `alpha x0` otherwise.
pub fn finalize_init(x0: &[C64], alpha: f64, field: FieldTag) -> SignalVector {
    let values: Vec<C64> = match field {
        FieldTag::RealNonnegative => x0.iter().map(|z| C64::new((z * alpha).norm(), 0.0)).collect(),
        _ => x0.iter().map(|z| z * alpha).collect(),
    };
    SignalVector::projected(values, field, None)
}

/// Spectral init, scale fit and finalization in one call.
pub fn initialize(model: &ForwardModel, y: &[f64], field: FieldTag, iters: usize, seed: u64) -> Result<SignalVector> {
    let x0 = spectral_init(model, y, field, iters, seed)?;
    let alpha = scale_fit(model, y, x0.values())?;
    Ok(finalize_init(x0.values(), alpha, field))
}

/// Removes the global phase: `sign(<x_hat, x>) x_hat`, `sign(0) = 1`.
pub fn phase_correct(x_hat: &[C64], x_true: &[C64]) -> Vec<C64> {
    let s = sign(inner(x_hat, x_true));
    x_hat.iter().map(|z| z * s).collect()
}

/// `||x_hat_corrected - x|| / ||x||`.
pub fn nrmse(x_hat: &[C64], x_true: &[C64]) -> f64 {
    let c = phase_correct(x_hat, x_true);
    let err: f64 = c.iter().zip(x_true).map(|(a, b)| (a - b).norm_sqr()).sum();
    (err / norm_sqr(x_true)).sqrt()
}

/// `10 log10(peak^2 N / ||x_hat_corrected - x||^2)`, capped at
/// [`PSNR_CAP_DB`]. `peak` defaults to `max |x|`.
pub fn psnr(x_hat: &[C64], x_true: &[C64], peak: Option<f64>) -> f64 {
    let peak = peak.unwrap_or_else(|| x_true.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let c = phase_correct(x_hat, x_true);
    let err: f64 = c.iter().zip(x_true).map(|(a, b)| (a - b).norm_sqr()).sum();
    if err == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak * x_true.len() as f64 / err).log10()).min(PSNR_CAP_DB)
}

/// One row of an iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Cumulative time spent in iterate updates.
    pub elapsed_seconds: f64,
    pub cost: f64,
    pub nrmse: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Stopped early because the gradient vanished.
    Stationary { at: usize },
    Failed { at: usize, reason: String },
}

/// Result of a solver run: final estimate, trace and diagnostics.
#[derive(Debug, Clone)]
pub struct RunState {
    pub x: SignalVector,
    pub trace: Vec<TraceRecord>,
    pub status: RunStatus,
    pub warnings: Vec<String>,
}

impl RunState {
    pub fn final_cost(&self) -> Option<f64> {
        self.trace.last().map(|r| r.cost)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.cost).collect()
    }
}

/// Computes per-iteration metrics against an optional ground truth.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    truth: Option<Vec<C64>>,
    peak: Option<f64>,
}

impl Monitor {
    pub fn new(truth: Option<&[C64]>, peak: Option<f64>) -> Self {
        Self {
            truth: truth.map(<[C64]>::to_vec),
            peak,
        }
    }

    pub fn with_truth(truth: &[C64]) -> Self {
        Self::new(Some(truth), None)
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn metrics(&self, x: &[C64]) -> (f64, f64) {
        match &self.truth {
            Some(t) => (nrmse(x, t), psnr(x, t, self.peak)),
            None => (f64::NAN, f64::NAN),
        }
    }

    pub fn record(&self, k: usize, elapsed: Duration, cost: f64, x: &[C64]) -> TraceRecord {
        let (nrmse, psnr) = self.metrics(x);
        TraceRecord {
            k,
            elapsed_seconds: elapsed.as_secs_f64(),
            cost,
            nrmse,
            psnr,
        }
    }
}
