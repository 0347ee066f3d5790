//! Desk-scale training and evaluation: synthetic data, AdamW, resolution
//! sweeps and the kernel x dropout x mode ablation.

mod ablation;
mod dataset;
mod optim;
mod sweep;
mod trainer;

pub use ablation::{ablation_grid, run_cell, AblationCell, AblationConfig, AblationResult};
pub use dataset::{
    band_energies, band_of, generate_dataset, read_dataset, write_dataset, BandEnergyOracle, Dataset, Split,
    SynthDatasetSpec,
};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use sweep::{evaluate_sweep, sweep_csv, sweep_svg, EvalMode, SweepOptions, SweepRow, CSV_HEADER};
pub use trainer::{evaluate_full, train, EpochStats, TrainConfig, TrainReport};
