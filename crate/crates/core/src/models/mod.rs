//! The five network families, multi-task loss weighting and checkpoints.

mod checkpoint;
mod loss;
mod net;
mod spec;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, read_checkpoint_header, save_checkpoint, CheckpointHeader,
    TensorEntry,
};
pub use loss::combined_loss;
pub use net::{Model, ModelInput, ModelOutput, Mode, NormState, BN_EPS, BN_MOMENTUM};
pub use spec::{param_count, LossWeights, ModelKind, ModelSpec, Task};
