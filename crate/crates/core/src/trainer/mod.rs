//! Losses, optimizer, synthetic corpus and the training step.

pub mod adam;
pub mod corpus;
pub mod loss;
pub mod step;
pub mod synth;

pub use adam::Adam;
pub use corpus::{CorpusSpec, DataKind, Sample};
pub use loss::{LossBreakdown, LossWeights};
pub use step::{StepReport, TrainConfig, Trainer};
