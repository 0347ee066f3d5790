use rand::Rng;

use super::model::{resample_map, ArrnModel};
use crate::error::{Error, Result};
use crate::nn::{FeatureMap, Mode};
use crate::real::Real;

/// Discrepancy between adapted and full evaluation of the same inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub level: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// `max_abs` over the largest full-path logit magnitude.
    pub max_rel: f64,
}

/// Uniform random inputs in `[-1, 1)`.
pub fn random_input<T: Real, R: Rng + ?Sized>(
    grid: &crate::signal::GridSpec,
    features: usize,
    batch: usize,
    rng: &mut R,
) -> FeatureMap<T> {
    let n = batch * features * grid.len();
    let values = (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect();
    FeatureMap::new(batch, features, grid.clone(), values).expect("consistent shape")
}

/// Compares `forward_adapted(x)` with `forward_full` of `x` interpolated to
/// the finest grid, eval mode, for `x` on ladder level `level`.
pub fn compare_paths<T: Real>(model: &ArrnModel<T>, x: &FeatureMap<T>) -> Result<EquivalenceReport> {
    let level = model
        .ladder()
        .position(x.grid())
        .ok_or_else(|| Error::Shape(format!("grid {} is not a ladder level", x.grid())))?;
    let adapted = model.forward_adapted(x, Mode::Eval)?;
    let full = model.forward_full(&resample_map(x, model.ladder().level(0)), None, Mode::Eval)?;
    let diffs: Vec<f64> = adapted.values().iter().zip(full.values()).map(|(a, b)| (*a - *b).abs().as_f64()).collect();
    let max_abs = diffs.iter().copied().fold(0.0, f64::max);
    let scale = full.values().iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        level,
        max_abs,
        mean_abs: diffs.iter().sum::<f64>() / diffs.len().max(1) as f64,
        max_rel: if scale > 0.0 { max_abs / scale } else { max_abs },
    })
}

/// `repetitions` random batches on ladder level `level`; reports the worst
/// maximum and the average mean discrepancy.
pub fn equivalence_report<T: Real, R: Rng + ?Sized>(
    model: &ArrnModel<T>,
    level: usize,
    repetitions: usize,
    batch: usize,
    rng: &mut R,
) -> Result<EquivalenceReport> {
    if level >= model.ladder().len() {
        return Err(Error::InvalidArgument(format!("level {level} outside the ladder")));
    }
    let grid = model.ladder().level(level).clone();
    let mut out = EquivalenceReport { level, max_abs: 0.0, mean_abs: 0.0, max_rel: 0.0 };
    for _ in 0..repetitions {
        let x = random_input(&grid, model.config().in_features, batch, rng);
        let r = compare_paths(model, &x)?;
        out.max_abs = out.max_abs.max(r.max_abs);
        out.max_rel = out.max_rel.max(r.max_rel);
        out.mean_abs += r.mean_abs / repetitions as f64;
    }
    Ok(out)
}
