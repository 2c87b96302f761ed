//! The black-box diagnostic model: a point-set network over patches and the
//! threshold vote over a whole cloud.

mod checkpoint;
mod diagnose;
mod gradcheck;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use diagnose::{decide, diagnose, encode_patches, vote, DiagnosisResult, Diagnoser};
pub use gradcheck::{backward_check, backward_check_with, GradCheckOptions, GradCheckReport};
pub use model::{Activation, Dense, EncodedPatch, Gradients, ModelConfig, PointSetModel};
pub use train::{accuracy, cosine_lr, train, EpochStats, TrainConfig, TrainHistory};
