//! Laplacian pyramids over a [`ResolutionLadder`].
//!
//! Level `i` of the ladder stores the band difference between the signal
//! smoothed to level `i` and the signal smoothed to level `i + 1`, at the
//! grid of level `i`; the remainder smoothed to the coarsest level is stored
//! at the coarsest grid. Differences are taken against the bandlimited
//! interpolation of the next coarser level, so reconstruction telescopes
//! exactly whatever smoothing kernel built the pyramid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::real::{DType, Real};
use crate::signal::{arsg, downsample, upsample, DiscreteSignal, ResolutionLadder, SmoothingKernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidDecomposition<T> {
    ladder: ResolutionLadder,
    kernel: SmoothingKernelSpec,
    start_level: usize,
    diffs: Vec<DiscreteSignal<T>>,
    low: DiscreteSignal<T>,
}

impl<T: Real> PyramidDecomposition<T> {
    pub fn ladder(&self) -> &ResolutionLadder {
        &self.ladder
    }

    pub fn kernel(&self) -> &SmoothingKernelSpec {
        &self.kernel
    }

    pub fn start_level(&self) -> usize {
        self.start_level
    }

    /// Band differences for levels `start_level .. m`, finest first.
    pub fn diffs(&self) -> &[DiscreteSignal<T>] {
        &self.diffs
    }

    /// Difference stored at ladder level `level`.
    pub fn diff(&self, level: usize) -> Option<&DiscreteSignal<T>> {
        level.checked_sub(self.start_level).and_then(|i| self.diffs.get(i))
    }

    pub fn low(&self) -> &DiscreteSignal<T> {
        &self.low
    }
}

/// Decomposes a signal sampled on the finest ladder level.
pub fn decompose<T: Real>(
    signal: &DiscreteSignal<T>,
    ladder: &ResolutionLadder,
    kernel: &SmoothingKernelSpec,
) -> Result<PyramidDecomposition<T>> {
    if signal.grid() != ladder.level(0) {
        return Err(Error::IncomparableGrids(format!(
            "signal grid {} is not the finest ladder level {}",
            signal.grid(),
            ladder.level(0)
        )));
    }
    build(signal, ladder, kernel, 0)
}

/// Decomposes a signal sampled on some ladder level `u`, skipping the
/// difference terms of every finer level (they vanish for sampled data).
pub fn decompose_adapted<T: Real>(
    signal: &DiscreteSignal<T>,
    ladder: &ResolutionLadder,
    kernel: &SmoothingKernelSpec,
) -> Result<PyramidDecomposition<T>> {
    let u = ladder.position(signal.grid()).ok_or_else(|| {
        Error::IncomparableGrids(format!("signal grid {} is not a level of ladder {ladder}", signal.grid()))
    })?;
    build(signal, ladder, kernel, u)
}

fn build<T: Real>(
    signal: &DiscreteSignal<T>,
    ladder: &ResolutionLadder,
    kernel: &SmoothingKernelSpec,
    start: usize,
) -> Result<PyramidDecomposition<T>> {
    kernel.validate()?;
    let mut low = signal.clone();
    let mut diffs = Vec::with_capacity(ladder.coarsest() - start);
    for level in start..ladder.coarsest() {
        let next = downsample(&low, ladder.level(level + 1), kernel)?;
        let predicted = upsample(&next, ladder.level(level))?;
        diffs.push(low.sub(&predicted)?);
        low = next;
    }
    Ok(PyramidDecomposition { ladder: ladder.clone(), kernel: kernel.clone(), start_level: start, diffs, low })
}

/// Sums the low term and the differences of levels `level .. m`, returning
/// the signal smoothed to the band of `level` on that level's grid.
pub fn reconstruct<T: Real>(decomp: &PyramidDecomposition<T>, level: usize) -> Result<DiscreteSignal<T>> {
    let m = decomp.ladder.coarsest();
    if level < decomp.start_level || level > m {
        return Err(Error::InvalidArgument(format!(
            "reconstruction level {level} outside {}..={m}",
            decomp.start_level
        )));
    }
    let mut acc = decomp.low.clone();
    for l in (level..m).rev() {
        acc = upsample(&acc, decomp.ladder.level(l))?.add(&decomp.diffs[l - decomp.start_level])?;
    }
    Ok(acc)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    ladder: ResolutionLadder,
    kernel: SmoothingKernelSpec,
    start_level: usize,
    dtype: DType,
    features: usize,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const LOW_FILE: &str = "low.arsg";

pub fn diff_file(level: usize) -> String {
    format!("diff_{level}.arsg")
}

/// Writes `diff_<level>.arsg`, `low.arsg` and a manifest into `dir`.
pub fn write_dir<T: Real>(decomp: &PyramidDecomposition<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, d) in decomp.diffs.iter().enumerate() {
        write_atomic(&dir.join(diff_file(decomp.start_level + i)), &arsg::encode(d))?;
    }
    write_atomic(&dir.join(LOW_FILE), &arsg::encode(&decomp.low))?;
    let manifest = Manifest {
        ladder: decomp.ladder.clone(),
        kernel: decomp.kernel.clone(),
        start_level: decomp.start_level,
        dtype: T::DTYPE,
        features: decomp.low.features(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

pub fn read_dir<T: Real>(dir: &Path) -> Result<PyramidDecomposition<T>> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let m = manifest.ladder.coarsest();
    if manifest.start_level > m {
        return Err(Error::Format(format!("start level {} beyond ladder", manifest.start_level)));
    }
    let load = |name: String, level: usize| -> Result<DiscreteSignal<T>> {
        let s = arsg::decode::<T>(&fs::read(dir.join(&name))?)?;
        if s.grid() != manifest.ladder.level(level) || s.features() != manifest.features {
            return Err(Error::Format(format!("{name} does not match the manifest")));
        }
        Ok(s)
    };
    let diffs = (manifest.start_level..m).map(|l| load(diff_file(l), l)).collect::<Result<Vec<_>>>()?;
    let low = load(LOW_FILE.to_string(), m)?;
    Ok(PyramidDecomposition {
        ladder: manifest.ladder,
        kernel: manifest.kernel,
        start_level: manifest.start_level,
        diffs,
        low,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::GridSpec;

    fn ladder() -> ResolutionLadder {
        "16,8,4".parse().unwrap()
    }

    #[test]
    fn constant_signal_has_zero_diffs() {
        let s = DiscreteSignal::<f64>::constant(GridSpec::line(16).unwrap(), 2, 0.75);
        for k in [SmoothingKernelSpec::Perfect, SmoothingKernelSpec::truncated_gaussian()] {
            let d = decompose(&s, &ladder(), &k).unwrap();
            assert_eq!(d.diffs().len(), 2);
            for diff in d.diffs() {
                assert!(diff.values().iter().all(|v| v.abs() < 1e-12));
            }
            assert!(d.low().values().iter().all(|v| (v - 0.75).abs() < 1e-12));
        }
    }

    #[test]
    fn coarsest_level_input_has_no_diffs() {
        let s = DiscreteSignal::<f64>::constant(GridSpec::line(4).unwrap(), 1, 1.0);
        let d = decompose_adapted(&s, &ladder(), &SmoothingKernelSpec::Perfect).unwrap();
        assert!(d.diffs().is_empty());
        assert_eq!(d.low(), &s);
        assert_eq!(reconstruct(&d, 2).unwrap(), s);
        assert!(reconstruct(&d, 1).is_err());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let s = DiscreteSignal::<f64>::zeros(GridSpec::line(8).unwrap(), 1);
        assert!(decompose(&s, &ladder(), &SmoothingKernelSpec::Perfect).is_err());
        let s = DiscreteSignal::<f64>::zeros(GridSpec::line(12).unwrap(), 1);
        assert!(decompose_adapted(&s, &ladder(), &SmoothingKernelSpec::Perfect).is_err());
    }
}
