//! Run configuration: JSON file merged over defaults, then dotted overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub signal: SignalConfig,
    pub mean_count: f64,
    pub background: f64,
    pub algorithm: AlgorithmConfig,
    pub regularizer: RegularizerConfig,
    pub n_iters: usize,
    /// Power-method iterations of the spectral initialization.
    pub init_iters: usize,
    pub seed: u64,
    /// PSNR peak; `null` means `max |x_true|`.
    pub psnr_peak: Option<f64>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            signal: SignalConfig::default(),
            mean_count: 0.25,
            background: 0.1,
            algorithm: AlgorithmConfig::default(),
            regularizer: RegularizerConfig::default(),
            n_iters: 100,
            init_iters: 300,
            seed: 0,
            psnr_peak: None,
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Gaussian,
    MaskedDft,
    CanonicalDft,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Bernoulli,
    ExactHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    /// Rows of the Gaussian matrix.
    pub m: usize,
    /// Number of masks of the masked DFT, the first being all ones.
    pub num_masks: usize,
    pub sampling: Sampling,
    /// FileMatrix CSV path.
    pub matrix_path: Option<PathBuf>,
    /// Canonical DFT: reference image PGM; `null` uses a disk pattern.
    pub reference_path: Option<PathBuf>,
    /// Canonical DFT: reference width when generated; `null` means the image width.
    pub reference_width: Option<usize>,
    /// Canonical DFT: zero-block width; `null` means the image width.
    pub pad_width: Option<usize>,
    /// Canonical DFT: DFT grid size over composite size, per axis.
    pub oversampling: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Gaussian,
            m: 1024,
            num_masks: 4,
            sampling: Sampling::Bernoulli,
            matrix_path: None,
            reference_path: None,
            reference_width: None,
            pad_width: None,
            oversampling: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    Blocks,
    Disk,
    RandomComplex,
    Pgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Nonnegative,
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub source: SignalSource,
    /// Length of 1D signals.
    pub n: usize,
    /// Image size of the disk pattern.
    pub height: usize,
    pub width: usize,
    pub path: Option<PathBuf>,
    /// Field of the unknown; `null` infers it from the source.
    pub field: Option<Field>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            source: SignalSource::Blocks,
            n: 64,
            height: 16,
            width: 16,
            path: None,
            field: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Wf,
    Mm,
    Admm,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    Poisson,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Fisher,
    Backtracking,
    ExactLineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Max,
    Improved,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    /// Data term for WF and LBFGS; MM and ADMM require Poisson.
    pub likelihood: LikelihoodKind,
    pub step: StepKind,
    /// Truncation threshold `a_h` for WF; `null` disables truncation.
    pub truncation: Option<f64>,
    pub curvature: Curvature,
    pub rho0: f64,
    pub lbfgs_memory: usize,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            kind: AlgorithmKind::Wf,
            likelihood: LikelihoodKind::Poisson,
            step: StepKind::Fisher,
            truncation: None,
            curvature: Curvature::Improved,
            rho0: 8.0,
            lbfgs_memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    HuberTv,
    SparseL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Haar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    pub beta: f64,
    pub alpha: f64,
    pub transform: Transform,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            kind: RegularizerKind::None,
            beta: 32.0,
            alpha: 0.1,
            transform: Transform::Haar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            prefix: "run".into(),
        }
    }
}

impl RunConfig {
    /// Loads an optional JSON file and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("invalid JSON in {}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.mean_count > 0.0 && self.mean_count.is_finite()) {
            return bad(format!("mean_count must be positive, got {}", self.mean_count));
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return bad(format!("background must be >= 0, got {}", self.background));
        }
        let a = &self.algorithm;
        if matches!(a.kind, AlgorithmKind::Mm | AlgorithmKind::Admm) && a.likelihood != LikelihoodKind::Poisson {
            return bad("mm and admm require the poisson likelihood".into());
        }
        if a.kind == AlgorithmKind::Wf && a.step == StepKind::ExactLineSearch && a.likelihood != LikelihoodKind::Gaussian {
            return bad("exact_line_search is defined for the gaussian likelihood only".into());
        }
        if a.kind == AlgorithmKind::Lbfgs && self.regularizer.kind == RegularizerKind::SparseL1 {
            return bad("lbfgs needs a smooth cost; sparse_l1 is not supported".into());
        }
        if a.kind == AlgorithmKind::Wf && self.regularizer.kind == RegularizerKind::SparseL1 {
            return bad("wf needs a smooth cost; sparse_l1 is not supported".into());
        }
        if a.truncation.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return bad("truncation threshold must be positive".into());
        }
        if !(a.rho0 > 0.0) {
            return bad(format!("rho0 must be positive, got {}", a.rho0));
        }
        if self.model.oversampling == 0 {
            return bad("oversampling must be at least 1".into());
        }
        if self.model.variant == ModelVariant::File && self.model.matrix_path.is_none() {
            return bad("model.matrix_path is required for the file variant".into());
        }
        if self.signal.source == SignalSource::Pgm && self.signal.path.is_none() {
            return bad("signal.path is required for the pgm source".into());
        }
        Ok(())
    }

    /// The resolved configuration as JSON.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Sets `a.b.c=value`; the value is parsed as JSON and taken as a string
/// when that fails.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not of the form key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key '{key}' is malformed")));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        node = node
            .as_object_mut()
            .expect("object")
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    if !node.is_object() {
        *node = Value::Object(Default::default());
    }
    node.as_object_mut()
        .expect("object")
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
