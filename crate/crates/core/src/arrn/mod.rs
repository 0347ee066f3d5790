//! Laplacian residual networks: the residual chain, Laplacian dropout and the
//! full and adapted evaluation paths.

mod checkpoint;
mod dropout;
mod entry;
mod equivalence;
mod model;
mod residual;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, peek_checkpoint, read_checkpoint, write_checkpoint, CheckpointInfo};
pub use dropout::{DropoutConfig, DropoutMask};
pub use entry::{entry_level, EntryPlan, EntryPolicy};
pub use equivalence::{compare_paths, equivalence_report, random_input, EquivalenceReport};
pub use model::{resample_map, ArrnModel, ModelConfig, ModelTape};
pub use residual::{LaplacianResidual, ResidualTape};
