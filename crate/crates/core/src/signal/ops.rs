use super::fourier;
use super::grid::GridSpec;
use super::kernel::SmoothingKernelSpec;
use super::DiscreteSignal;
use crate::error::{Error, Result};
use crate::real::Real;

fn ensure_finite<T: Real>(signal: &DiscreteSignal<T>) -> Result<()> {
    match signal.values().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("signal value at index {i}"))),
        None => Ok(()),
    }
}

/// Direct circular convolution of every line along `axis` with centred taps.
fn convolve_axis<T: Real>(data: &[T], outer: usize, extents: &[usize], axis: usize, taps: &[f64]) -> Vec<T> {
    let n = extents[axis];
    let before: usize = extents[..axis].iter().product();
    let inner: usize = extents[axis + 1..].iter().product();
    let r = (taps.len() / 2) as isize;
    let taps: Vec<T> = taps.iter().map(|&t| T::of(t)).collect();
    let mut out = vec![T::zero(); data.len()];
    for l in 0..outer * before {
        for k in 0..n {
            for (t, &h) in taps.iter().enumerate() {
                let src = (k as isize - (t as isize - r)).rem_euclid(n as isize) as usize;
                for i in 0..inner {
                    out[(l * n + k) * inner + i] += h * data[(l * n + src) * inner + i];
                }
            }
        }
    }
    out
}

/// Smooths `signal` down to the band of `target`, returning a signal on the
/// original grid.
pub fn lowpass<T: Real>(
    signal: &DiscreteSignal<T>,
    target: &GridSpec,
    kernel: &SmoothingKernelSpec,
) -> Result<DiscreteSignal<T>> {
    kernel.validate()?;
    ensure_finite(signal)?;
    let factors = signal.grid().require_coarser(target)?;
    let ext = signal.grid().extents();
    let values = if kernel.is_perfect() {
        fourier::band_project(signal.values(), signal.features(), ext, target.extents())
    } else {
        let mut cur = signal.values().to_vec();
        for (axis, &f) in factors.iter().enumerate() {
            if f > 1 {
                let taps = kernel.taps(f).expect("approximate kernels have taps");
                cur = convolve_axis(&cur, signal.features(), ext, axis, &taps);
            }
        }
        cur
    };
    Ok(signal.with_values(signal.grid().clone(), values))
}

/// Keeps the samples that coincide with the coarse grid (stride subsets
/// anchored at index 0).
pub fn decimate<T: Real>(signal: &DiscreteSignal<T>, to: &GridSpec) -> Result<DiscreteSignal<T>> {
    let factors = signal.grid().require_coarser(to)?;
    let mut ext = signal.grid().extents().to_vec();
    let mut cur = signal.values().to_vec();
    for (axis, &f) in factors.iter().enumerate() {
        if f > 1 {
            cur = super::axis::decimate_axis(&cur, signal.features(), &ext, axis, f);
            ext[axis] /= f;
        }
    }
    Ok(signal.with_values(to.clone(), cur))
}

/// `lowpass` followed by `decimate`.
pub fn downsample<T: Real>(
    signal: &DiscreteSignal<T>,
    to: &GridSpec,
    kernel: &SmoothingKernelSpec,
) -> Result<DiscreteSignal<T>> {
    decimate(&lowpass(signal, to, kernel)?, to)
}

/// Whittaker-Shannon interpolation onto a finer grid that the current grid
/// subdivides.
pub fn upsample<T: Real>(signal: &DiscreteSignal<T>, to: &GridSpec) -> Result<DiscreteSignal<T>> {
    to.require_coarser(signal.grid())?;
    ensure_finite(signal)?;
    Ok(resample_unchecked(signal, to))
}

/// Bandlimited resampling between arbitrary grids of equal dimension.
/// Downward moves discard content above the target band.
pub fn resample<T: Real>(signal: &DiscreteSignal<T>, to: &GridSpec) -> Result<DiscreteSignal<T>> {
    if signal.grid().dims() != to.dims() {
        return Err(Error::IncomparableGrids(format!("{} and {to} differ in dimension", signal.grid())));
    }
    ensure_finite(signal)?;
    Ok(resample_unchecked(signal, to))
}

fn resample_unchecked<T: Real>(signal: &DiscreteSignal<T>, to: &GridSpec) -> DiscreteSignal<T> {
    if signal.grid() == to {
        return signal.clone();
    }
    let values = fourier::resample(signal.values(), signal.features(), signal.grid().extents(), to.extents());
    signal.with_values(to.clone(), values)
}

/// Subtracts the spatial mean of every channel.
pub fn mean_reject<T: Real>(signal: &DiscreteSignal<T>) -> DiscreteSignal<T> {
    let n = signal.grid().len();
    let mut values = signal.values().to_vec();
    for line in values.chunks_mut(n) {
        let mean = line.iter().copied().sum::<T>() / T::of(n as f64);
        line.iter_mut().for_each(|v| *v -= mean);
    }
    signal.with_values(signal.grid().clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandCheck {
    pub within: bool,
    pub max_deviation: f64,
}

/// Membership test for the band of `level_grid`: `|lowpass(s) - s|_inf <= tol`.
pub fn check_bandlimited<T: Real>(
    signal: &DiscreteSignal<T>,
    level_grid: &GridSpec,
    kernel: &SmoothingKernelSpec,
    tol: f64,
) -> Result<BandCheck> {
    let smoothed = lowpass(signal, level_grid, kernel)?;
    let max_deviation = smoothed.max_abs_diff(signal);
    Ok(BandCheck { within: max_deviation <= tol, max_deviation })
}
