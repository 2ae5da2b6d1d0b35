//! Maximum-likelihood phase retrieval from Poisson counts.
//!
//! The measurement model is `y ~ Poisson(|A x|^2 + b)` where `A` is one of the
//! operators in [`forward`]. Reconstruction algorithms live in [`wf`]
//! (gradient descent), [`mm`] (majorize-minimize) and [`admm`].

pub mod admm;
pub mod baseline;
pub mod error;
pub mod eval;
pub mod forward;
pub mod mm;
pub mod numerics;
pub mod objectives;
pub mod phantom;
pub mod signal;
pub mod vecops;
pub mod wf;

pub use error::{Error, Result};
pub use eval::{Monitor, RunState, RunStatus, TraceRecord};
pub use forward::{CanonicalDftSpec, ForwardModel, MaskSampling, MeasurementSet, Variant};
pub use objectives::{DiffOp, HuberTv, Likelihood, Objective, OrthoTransform, Problem, Regularizer, SparseL1};
pub use signal::{FieldTag, SignalVector};
pub use vecops::C64;
