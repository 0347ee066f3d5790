use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_dataset, SynthDatasetSpec};
use super::sweep::{evaluate_sweep, EvalMode, SweepOptions, SweepRow};
use super::trainer::{train, TrainConfig};
use crate::arrn::{ArrnModel, DropoutConfig, ModelConfig};
use crate::error::Result;
use crate::par;
use crate::real::Real;
use crate::signal::{GridSpec, SmoothingKernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    /// Architecture; kernel and dropout are overridden per cell.
    pub model: ModelConfig,
    pub data: SynthDatasetSpec,
    pub train: TrainConfig,
    pub kernels: Vec<SmoothingKernelSpec>,
    /// Per-residual drop probability of the dropout-on cells.
    pub dropout_p: f64,
    pub seeds: Vec<u64>,
    pub resolutions: Vec<GridSpec>,
    pub options: SweepOptions,
}

impl AblationConfig {
    pub fn new(model: ModelConfig, data: SynthDatasetSpec, train: TrainConfig, resolutions: Vec<GridSpec>) -> Self {
        Self {
            model,
            data,
            train,
            kernels: vec![
                SmoothingKernelSpec::Perfect,
                SmoothingKernelSpec::windowed_sinc(),
                SmoothingKernelSpec::truncated_gaussian(),
            ],
            dropout_p: 0.3,
            seeds: vec![0],
            resolutions,
            options: SweepOptions::default(),
        }
    }
}

/// Average accuracy of one (kernel, dropout, mode) leaf with the
/// multiplicative factors along its decision path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub kernel: String,
    pub dropout: bool,
    pub mode: EvalMode,
    pub accuracy: f64,
    /// Kernel average over the overall average.
    pub kernel_ratio: f64,
    /// (kernel, dropout) average over the kernel average.
    pub dropout_ratio: f64,
    /// This cell over the (kernel, dropout) average.
    pub mode_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    /// Sweep rows averaged over seeds.
    pub rows: Vec<SweepRow>,
    pub cells: Vec<AblationCell>,
}

impl AblationResult {
    pub fn cell(&self, kernel: &str, dropout: bool, mode: EvalMode) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.kernel == kernel && c.dropout == dropout && c.mode == mode)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("kernel,dropout,mode,accuracy,kernel_ratio,dropout_ratio,mode_ratio\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                c.kernel,
                if c.dropout { "on" } else { "off" },
                c.mode,
                c.accuracy,
                c.kernel_ratio,
                c.dropout_ratio,
                c.mode_ratio
            ));
        }
        out
    }
}

/// Trains one model and sweeps it in both modes.
pub fn run_cell<T: Real>(
    config: &AblationConfig,
    kernel: &SmoothingKernelSpec,
    dropout: bool,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let data = generate_dataset::<T>(&config.data)?;
    let mut model_config = config.model.clone();
    model_config.kernel = kernel.clone();
    let p = if dropout { config.dropout_p } else { 0.0 };
    model_config.dropout = DropoutConfig::uniform(model_config.residual_count(), p);
    let mut model = ArrnModel::<T>::new(model_config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let train_config = TrainConfig { seed, laplacian_dropout: dropout, ..config.train.clone() };
    train(&mut model, &data.train, &train_config)?;
    evaluate_sweep(&model, &data.test, &config.resolutions, &[EvalMode::Full, EvalMode::Adapted], dropout, &config.options)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Kernels x {dropout, none} x {full, adapted}. Independent trainings run in
/// parallel; results are assembled in a fixed order.
pub fn ablation_grid<T: Real>(config: &AblationConfig) -> Result<AblationResult> {
    let runs: Vec<(usize, bool, u64)> = config
        .kernels
        .iter()
        .enumerate()
        .flat_map(|(k, _)| [true, false].into_iter().flat_map(move |d| config.seeds.iter().map(move |&s| (k, d, s))))
        .collect();
    let results = par::map_range(runs.len(), |i| {
        let (k, d, s) = runs[i];
        run_cell::<T>(config, &config.kernels[k], d, s)
    });
    let mut per_run = Vec::with_capacity(results.len());
    for r in results {
        per_run.push(r?);
    }
    let seeds = config.seeds.len().max(1) as f64;
    let mut rows: Vec<SweepRow> = Vec::new();
    for chunk in per_run.chunks(config.seeds.len().max(1)) {
        let mut avg = chunk[0].clone();
        for (i, row) in avg.iter_mut().enumerate() {
            row.accuracy = chunk.iter().map(|rs| rs[i].accuracy).sum::<f64>() / seeds;
            row.wall_ms = chunk.iter().map(|rs| rs[i].wall_ms).sum::<f64>() / seeds;
        }
        rows.extend(avg);
    }
    let acc = |k: Option<&str>, d: Option<bool>, m: Option<EvalMode>| {
        mean(
            rows.iter()
                .filter(|r| k.is_none_or(|k| r.kernel == k) && d.is_none_or(|d| r.dropout == d) && m.is_none_or(|m| r.mode == m))
                .map(|r| r.accuracy),
        )
    };
    let overall = acc(None, None, None);
    let mut cells = Vec::new();
    for kernel in &config.kernels {
        let label = kernel.label();
        let k_avg = acc(Some(label), None, None);
        for dropout in [true, false] {
            let kd_avg = acc(Some(label), Some(dropout), None);
            for mode in [EvalMode::Full, EvalMode::Adapted] {
                let a = acc(Some(label), Some(dropout), Some(mode));
                cells.push(AblationCell {
                    kernel: label.to_string(),
                    dropout,
                    mode,
                    accuracy: a,
                    kernel_ratio: k_avg / overall,
                    dropout_ratio: kd_avg / k_avg,
                    mode_ratio: a / kd_avg,
                });
            }
        }
    }
    Ok(AblationResult { rows, cells })
}
