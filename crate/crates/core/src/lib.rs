//! Reciprocal characteristic-function GAN: the empirical CF distance with its
//! amplitude/phase decomposition, frequency sampling, the reciprocal
//! adversarial training loop, and the diagnostics that exercise them.

pub mod autodiff;
pub mod datasets;
pub mod ecf;
mod error;
pub mod eval;
pub mod freq;
pub mod nets;
pub mod trainer;

pub use autodiff::{Graph, Tensor, Var};
pub use datasets::{DataSource, EllipticalSpec, Family, IdxDataset, MixtureSpec, Preset};
pub use ecf::{cf_distance, cf_distance_value, CfLossConfig, EcfEval};
pub use error::{Error, IdxError, Result};
pub use eval::ModeReport;
pub use freq::{FreqMode, FreqSampler, LatentSpec};
pub use nets::{Activation, Mlp, MlpSpec, Networks};
pub use trainer::{train, TelemetryRecord, TrainConfig, TrainState, TrainTelemetry};
