//! Forward models `y ~ Poisson(|c (A x + r)|^2 + b)`.
//!
//! `A` is a linear operator given either as a dense matrix or implicitly
//! through FFTs, `c` is a positive scale chosen by [`ForwardModel::calibrate_scale`],
//! `b` is the known mean background and `r` is an optional known offset. The
//! offset is only present for the canonical-DFT model, where the reference
//! image enters the measurement as `F{[0, 0, R]}`.
//!
//! Every algorithm in this crate works with the affine map `v = c (A x + r)`
//! for the measurement-domain variable, and with the adjoint of the linear
//! part `c A` for back-projection.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::vecops::{C64, ZERO};

/// Which family an operator belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Dense,
    CanonicalDft,
    MaskedDft,
    FileMatrix,
}

/// How the random masks of a masked-DFT model are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskSampling {
    /// Each entry is kept independently with probability 0.5.
    #[default]
    Bernoulli,
    /// Exactly `floor(N / 2)` entries are kept, chosen uniformly.
    ExactHalf,
}

/// Parameters of the canonical DFT model with a known reference image.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDftSpec {
    /// `(height, width)` of the unknown image `x`.
    pub image_dims: (usize, usize),
    /// Real nonnegative reference image, row-major, `height x ref_width`.
    pub reference: Vec<f64>,
    pub ref_width: usize,
    /// Width of the zero block between `x` and the reference.
    pub pad_width: usize,
    /// `(rows, cols)` of the 2D DFT grid; must contain the composite image.
    pub fft_dims: (usize, usize),
}

impl CanonicalDftSpec {
    /// Zero block as wide as `x` and a 2x oversampled DFT grid.
    pub fn with_defaults(image_dims: (usize, usize), reference: Vec<f64>, ref_width: usize) -> Self {
        let (h, w) = image_dims;
        let total = 2 * w + ref_width;
        Self {
            image_dims,
            reference,
            ref_width,
            pad_width: w,
            fft_dims: (2 * h, 2 * total),
        }
    }
}

struct Fft1 {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft1 {
    fn new(planner: &mut FftPlanner<f64>, len: usize) -> Self {
        Self {
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }
}

impl Clone for Fft1 {
    fn clone(&self) -> Self {
        Self {
            len: self.len,
            fwd: Arc::clone(&self.fwd),
            inv: Arc::clone(&self.inv),
        }
    }
}

#[derive(Clone)]
struct Canonical {
    spec: CanonicalDftSpec,
    rows: Fft1,
    cols: Fft1,
}

impl Canonical {
    fn transform(&self, grid: &mut [C64], inverse: bool) {
        let (fh, fw) = self.spec.fft_dims;
        let (row_plan, col_plan) = if inverse {
            (&self.rows.inv, &self.cols.inv)
        } else {
            (&self.rows.fwd, &self.cols.fwd)
        };
        row_plan.process(grid);
        let mut t = transpose(grid, fh, fw);
        col_plan.process(&mut t);
        grid.copy_from_slice(&transpose(&t, fw, fh));
    }
}

fn transpose(a: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![ZERO; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[derive(Clone)]
struct Masked {
    n: usize,
    masks: Vec<Vec<f64>>,
    fft: Fft1,
}

#[derive(Clone)]
enum Operator {
    Dense {
        rows: usize,
        cols: usize,
        entries: Vec<C64>,
    },
    Canonical(Box<Canonical>),
    Masked(Masked),
}

/// A scaled linear (or affine, with a reference offset) measurement operator
/// together with its mean background.
#[derive(Clone)]
pub struct ForwardModel {
    op: Operator,
    variant: Variant,
    scale: f64,
    background: Vec<f64>,
    /// Unscaled offset `r`; the applied offset is `scale * r`.
    offset: Option<Vec<C64>>,
}

impl fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardModel")
            .field("variant", &self.variant)
            .field("rows", &self.rows())
            .field("cols", &self.cols())
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

/// Poisson counts drawn from a forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub y: Vec<u64>,
    pub seed: u64,
    /// `sum(y) / M` at generation time.
    pub mean_count: f64,
}

impl MeasurementSet {
    pub fn from_counts(y: Vec<u64>, seed: u64) -> Self {
        let mean_count = y.iter().sum::<u64>() as f64 / y.len().max(1) as f64;
        Self { y, seed, mean_count }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&k| k as f64).collect()
    }
}

impl ForwardModel {
    fn from_op(op: Operator, variant: Variant, offset: Option<Vec<C64>>) -> Self {
        let rows = match &op {
            Operator::Dense { rows, .. } => *rows,
            Operator::Canonical(c) => c.spec.fft_dims.0 * c.spec.fft_dims.1,
            Operator::Masked(m) => m.masks.len() * m.fft.len,
        };
        Self {
            op,
            variant,
            scale: 1.0,
            background: vec![0.0; rows],
            offset,
        }
    }

    /// Dense complex matrix in row-major order.
    pub fn dense(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("matrix must have M >= 1 and N >= 1".into()));
        }
        check_len("dense entries", rows * cols, entries.len())?;
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self::from_op(
            Operator::Dense { rows, cols, entries },
            Variant::Dense,
            None,
        ))
    }

    /// Circularly-symmetric complex Gaussian matrix with unit-variance entries.
    pub fn gaussian_random(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let entries = (0..rows * cols)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re * s, im * s)
            })
            .collect();
        Self::dense(rows, cols, entries)
    }

    /// Masked, oversampled DFT with explicit masks `D_l` (each of length `N`).
    pub fn masked_dft(masks: Vec<Vec<f64>>) -> Result<Self> {
        let n = masks.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one non-empty mask".into()));
        }
        for m in &masks {
            check_len("mask length", n, m.len())?;
            if m.iter().any(|d| !d.is_finite()) {
                return Err(Error::Domain("mask entries must be finite".into()));
            }
        }
        let mut planner = FftPlanner::new();
        let fft = Fft1::new(&mut planner, 2 * n - 1);
        Ok(Self::from_op(
            Operator::Masked(Masked { n, masks, fft }),
            Variant::MaskedDft,
            None,
        ))
    }

    /// `num_masks` masks where the first one is all ones and the rest sample
    /// half the entries at random.
    pub fn masked_dft_random(n: usize, num_masks: usize, sampling: MaskSampling, seed: u64) -> Result<Self> {
        if num_masks == 0 {
            return Err(Error::InvalidArgument("need at least one mask".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_736b_7365_6564);
        let mut masks = vec![vec![1.0; n]];
        for _ in 1..num_masks {
            let mask = match sampling {
                MaskSampling::Bernoulli => (0..n)
                    .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                    .collect(),
                MaskSampling::ExactHalf => {
                    let mut idx: Vec<usize> = (0..n).collect();
                    // partial Fisher-Yates
                    for i in 0..n / 2 {
                        let j = rng.random_range(i..n);
                        idx.swap(i, j);
                    }
                    let mut m = vec![0.0; n];
                    idx[..n / 2].iter().for_each(|&i| m[i] = 1.0);
                    m
                }
            };
            masks.push(mask);
        }
        Self::masked_dft(masks)
    }

    /// Canonical 2D DFT of the composite image `[x, 0, R]`.
    pub fn canonical_dft(spec: CanonicalDftSpec) -> Result<Self> {
        let (h, w) = spec.image_dims;
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument("image dims must be positive".into()));
        }
        check_len("reference image", h * spec.ref_width, spec.reference.len())?;
        if spec.reference.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Domain("reference image must be finite and nonnegative".into()));
        }
        let total_w = w + spec.pad_width + spec.ref_width;
        let (fh, fw) = spec.fft_dims;
        if fh < h || fw < total_w {
            return Err(Error::InvalidArgument(format!(
                "fft grid {fh}x{fw} cannot hold composite image {h}x{total_w}"
            )));
        }
        let mut planner = FftPlanner::new();
        let canon = Canonical {
            rows: Fft1::new(&mut planner, fw),
            cols: Fft1::new(&mut planner, fh),
            spec,
        };
        let offset = if canon.spec.ref_width > 0 {
            let mut grid = vec![ZERO; fh * fw];
            let c0 = w + canon.spec.pad_width;
            for i in 0..h {
                for j in 0..canon.spec.ref_width {
                    grid[i * fw + c0 + j] = C64::new(canon.spec.reference[i * canon.spec.ref_width + j], 0.0);
                }
            }
            canon.transform(&mut grid, false);
            Some(grid)
        } else {
            None
        };
        Ok(Self::from_op(
            Operator::Canonical(Box::new(canon)),
            Variant::CanonicalDft,
            offset,
        ))
    }

    /// Reads a dense matrix from the `M,N` + `re:im` CSV format.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing M,N header".into(),
        })?;
        let dims: Vec<&str> = header.split(',').map(str::trim).collect();
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line: 1,
                msg: format!("bad dimension {s:?}: {e}"),
            })
        };
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header must be M,N, got {header:?}"),
            });
        }
        let (m, n) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
        let mut entries = Vec::with_capacity(m * n);
        let mut row_count = 0;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let before = entries.len();
            for field in line.split(',') {
                entries.push(parse_entry(field.trim()).map_err(|msg| Error::Parse { line: lineno, msg })?);
            }
            if entries.len() - before != n {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {n} entries, found {}", entries.len() - before),
                });
            }
            row_count += 1;
        }
        if row_count != m {
            return Err(Error::Parse {
                line: row_count + 1,
                msg: format!("expected {m} rows, found {row_count}"),
            });
        }
        let mut model = Self::dense(m, n, entries)?;
        model.variant = Variant::FileMatrix;
        Ok(model)
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    /// Serializes the unscaled linear part in the `re:im` CSV format.
    pub fn to_csv_string(&self) -> String {
        let (m, n) = (self.rows(), self.cols());
        let dense = self.densify_unscaled();
        let mut out = format!("{m},{n}\n");
        for i in 0..m {
            let row: Vec<String> = dense[i * n..(i + 1) * n]
                .iter()
                .map(|z| format!("{:e}:{:e}", z.re, z.im))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rows(&self) -> usize {
        match &self.op {
            Operator::Dense { rows, .. } => *rows,
            Operator::Canonical(c) => c.spec.fft_dims.0 * c.spec.fft_dims.1,
            Operator::Masked(m) => m.masks.len() * m.fft.len,
        }
    }

    pub fn cols(&self) -> usize {
        match &self.op {
            Operator::Dense { cols, .. } => *cols,
            Operator::Canonical(c) => c.spec.image_dims.0 * c.spec.image_dims.1,
            Operator::Masked(m) => m.n,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn set_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be finite and >= 0, got {scale}")));
        }
        self.scale = scale;
        Ok(())
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn set_background(&mut self, b: Vec<f64>) -> Result<()> {
        check_len("background", self.rows(), b.len())?;
        if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("background must be finite and nonnegative".into()));
        }
        self.background = b;
        Ok(())
    }

    pub fn with_uniform_background(mut self, level: f64) -> Result<Self> {
        let m = self.rows();
        self.set_background(vec![level; m])?;
        Ok(self)
    }

    /// Scaled reference offset `c r`, if the model has one.
    pub fn offset(&self) -> Option<Vec<C64>> {
        self.offset.as_ref().map(|r| r.iter().map(|z| z * self.scale).collect())
    }

    pub fn has_offset(&self) -> bool {
        self.offset.is_some()
    }

    /// `c (A x + r)`: the measurement-domain variable used by every cost.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let mut v = self.apply_linear(x)?;
        if let Some(r) = &self.offset {
            v.iter_mut().zip(r).for_each(|(vi, ri)| *vi += ri * self.scale);
        }
        Ok(v)
    }

    /// `c A x`, without the reference offset.
    pub fn apply_linear(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len("apply input", self.cols(), x.len())?;
        let mut out = self.apply_unscaled(x);
        if self.scale != 1.0 {
            out.iter_mut().for_each(|z| *z *= self.scale);
        }
        Ok(out)
    }

    /// `c A' v`, the exact adjoint of [`apply_linear`](Self::apply_linear).
    pub fn adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        check_len("adjoint input", self.rows(), v.len())?;
        let mut out = self.adjoint_unscaled(v);
        if self.scale != 1.0 {
            out.iter_mut().for_each(|z| *z *= self.scale);
        }
        Ok(out)
    }

    fn apply_unscaled(&self, x: &[C64]) -> Vec<C64> {
        match &self.op {
            Operator::Dense { rows, cols, entries } => (0..*rows)
                .map(|i| {
                    entries[i * cols..(i + 1) * cols]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
            Operator::Masked(m) => {
                let nt = m.fft.len;
                let mut out = vec![ZERO; m.masks.len() * nt];
                for (l, mask) in m.masks.iter().enumerate() {
                    let buf = &mut out[l * nt..(l + 1) * nt];
                    for j in 0..m.n {
                        buf[j] = x[j] * mask[j];
                    }
                    m.fft.fwd.process(buf);
                }
                out
            }
            Operator::Canonical(c) => {
                let (h, w) = c.spec.image_dims;
                let (fh, fw) = c.spec.fft_dims;
                let mut grid = vec![ZERO; fh * fw];
                for i in 0..h {
                    grid[i * fw..i * fw + w].copy_from_slice(&x[i * w..(i + 1) * w]);
                }
                c.transform(&mut grid, false);
                grid
            }
        }
    }

    fn adjoint_unscaled(&self, v: &[C64]) -> Vec<C64> {
        match &self.op {
            Operator::Dense { rows, cols, entries } => {
                let mut out = vec![ZERO; *cols];
                for i in 0..*rows {
                    let vi = v[i];
                    out.iter_mut()
                        .zip(&entries[i * cols..(i + 1) * cols])
                        .for_each(|(o, a)| *o += a.conj() * vi);
                }
                out
            }
            Operator::Masked(m) => {
                let nt = m.fft.len;
                let mut out = vec![ZERO; m.n];
                let mut buf = vec![ZERO; nt];
                for (l, mask) in m.masks.iter().enumerate() {
                    buf.copy_from_slice(&v[l * nt..(l + 1) * nt]);
                    m.fft.inv.process(&mut buf);
                    for j in 0..m.n {
                        out[j] += buf[j] * mask[j];
                    }
                }
                out
            }
            Operator::Canonical(c) => {
                let (h, w) = c.spec.image_dims;
                let (_, fw) = c.spec.fft_dims;
                let mut grid = v.to_vec();
                c.transform(&mut grid, true);
                let mut out = Vec::with_capacity(h * w);
                for i in 0..h {
                    out.extend_from_slice(&grid[i * fw..i * fw + w]);
                }
                out
            }
        }
    }

    /// Diagonal of `c^2 A'A` when it is diagonal (both DFT families).
    pub fn normal_diagonal(&self) -> Option<Vec<f64>> {
        let c2 = self.scale * self.scale;
        match &self.op {
            Operator::Dense { .. } => None,
            Operator::Masked(m) => {
                let nt = m.fft.len as f64;
                Some(
                    (0..m.n)
                        .map(|j| c2 * nt * m.masks.iter().map(|d| d[j] * d[j]).sum::<f64>())
                        .collect(),
                )
            }
            Operator::Canonical(c) => {
                let (fh, fw) = c.spec.fft_dims;
                Some(vec![c2 * (fh * fw) as f64; self.cols()])
            }
        }
    }

    fn densify_unscaled(&self) -> Vec<C64> {
        if let Operator::Dense { entries, .. } = &self.op {
            return entries.clone();
        }
        let (m, n) = (self.rows(), self.cols());
        let mut dense = vec![ZERO; m * n];
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            let col = self.apply_unscaled(&e);
            for i in 0..m {
                dense[i * n + j] = col[i];
            }
            e[j] = ZERO;
        }
        dense
    }

    /// Row-major `M x N` matrix of the scaled linear part `c A`.
    pub fn densify(&self) -> Vec<C64> {
        let mut d = self.densify_unscaled();
        d.iter_mut().for_each(|z| *z *= self.scale);
        d
    }

    /// Per-measurement means `|c (A x + r)|^2 + b`.
    pub fn mean_intensity(&self, x: &[C64]) -> Result<Vec<f64>> {
        let v = self.apply(x)?;
        Ok(v.iter()
            .zip(&self.background)
            .map(|(vi, bi)| vi.norm_sqr() + bi)
            .collect())
    }

    /// Chooses and stores the scale `c` so the mean of `|c (A x + r)|^2 + b`
    /// equals `target_mean`.
    pub fn calibrate_scale(&mut self, x_true: &[C64], target_mean: f64) -> Result<f64> {
        if !(target_mean > 0.0 && target_mean.is_finite()) {
            return Err(Error::InvalidArgument(format!("target mean must be positive, got {target_mean}")));
        }
        check_len("calibration signal", self.cols(), x_true.len())?;
        let m = self.rows() as f64;
        let mut v = self.apply_unscaled(x_true);
        if let Some(r) = &self.offset {
            v.iter_mut().zip(r).for_each(|(vi, ri)| *vi += ri);
        }
        let mean_sig = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
        let mean_b = self.background.iter().sum::<f64>() / m;
        let excess = target_mean - mean_b;
        let c = if mean_sig == 0.0 {
            if excess == 0.0 {
                0.0
            } else {
                return Err(Error::Degenerate(format!(
                    "signal has zero intensity; target {target_mean} differs from mean background {mean_b}"
                )));
            }
        } else if excess < 0.0 {
            return Err(Error::Degenerate(format!(
                "target {target_mean} is below mean background {mean_b}"
            )));
        } else {
            (excess / mean_sig).sqrt()
        };
        self.scale = c;
        Ok(c)
    }

    /// Draws `y_i ~ Poisson(|c (A x + r)_i|^2 + b_i)`, reproducibly for a seed.
    pub fn simulate_poisson(&self, x_true: &[C64], seed: u64) -> Result<MeasurementSet> {
        let means = self.mean_intensity(x_true)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = means.iter().map(|&lam| poisson_sample(lam, &mut rng)).collect();
        Ok(MeasurementSet::from_counts(y, seed))
    }
}

fn parse_entry(s: &str) -> std::result::Result<C64, String> {
    let (re, im) = s.split_once(':').ok_or_else(|| format!("entry {s:?} is not re:im"))?;
    let re: f64 = re.trim().parse().map_err(|e| format!("bad real part {re:?}: {e}"))?;
    let im: f64 = im.trim().parse().map_err(|e| format!("bad imaginary part {im:?}: {e}"))?;
    Ok(C64::new(re, im))
}

/// Poisson draw: sequential inversion below mean 10, the `rand_distr`
/// rejection sampler above.
pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    assert!(mean >= 0.0 && mean.is_finite(), "Poisson mean must be finite and >= 0, got {mean}");
    if mean == 0.0 {
        return 0;
    }
    if mean < 10.0 {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        // cap guards against cdf saturating below u through rounding
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        let d = rand_distr::Poisson::new(mean).expect("valid Poisson mean");
        d.sample(rng) as u64
    }
}
