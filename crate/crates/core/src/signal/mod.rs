//! Sampled multichannel signals on the periodic unit domain and the
//! operators that move them between bandwidths and resolutions.

pub mod arsg;
pub mod axis;
pub mod fourier;
mod grid;
mod kernel;
mod ops;

pub use grid::{GridSpec, ResolutionLadder};
pub use kernel::{Resampler, SmoothingKernelSpec};
pub use ops::{check_bandlimited, decimate, downsample, lowpass, mean_reject, resample, upsample, BandCheck};

use crate::error::{Error, Result};
use crate::real::Real;

/// A sampled signal with `features` channels. Values are feature-major, then
/// row-major over the grid axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSignal<T> {
    grid: GridSpec,
    features: usize,
    values: Vec<T>,
}

impl<T: Real> DiscreteSignal<T> {
    pub fn new(grid: GridSpec, features: usize, values: Vec<T>) -> Result<Self> {
        if features == 0 {
            return Err(Error::InvalidArgument("a signal needs at least one feature".into()));
        }
        if values.len() != features * grid.len() {
            return Err(Error::Shape(format!(
                "{} values for {features} features on grid {grid}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("signal value at index {i}")));
        }
        Ok(Self { grid, features, values })
    }

    pub fn zeros(grid: GridSpec, features: usize) -> Self {
        let values = vec![T::zero(); features * grid.len()];
        Self { grid, features, values }
    }

    pub fn constant(grid: GridSpec, features: usize, value: T) -> Self {
        let values = vec![value; features * grid.len()];
        Self { grid, features, values }
    }

    /// Samples `f(channel, x)` where `x` holds the unit-domain coordinates.
    pub fn from_fn(grid: GridSpec, features: usize, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let ext = grid.extents().to_vec();
        let mut values = Vec::with_capacity(features * grid.len());
        let mut x = vec![0.0; ext.len()];
        for c in 0..features {
            for flat in 0..grid.len() {
                let mut rem = flat;
                for a in (0..ext.len()).rev() {
                    x[a] = (rem % ext[a]) as f64 / ext[a] as f64;
                    rem /= ext[a];
                }
                values.push(T::of(f(c, &x)));
            }
        }
        Self { grid, features, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn cast<U: Real>(&self) -> DiscreteSignal<U> {
        DiscreteSignal {
            grid: self.grid.clone(),
            features: self.features,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Largest absolute elementwise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &DiscreteSignal<T>) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.features, other.features, "feature mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &DiscreteSignal<T>) -> Result<DiscreteSignal<T>> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DiscreteSignal<T>) -> Result<DiscreteSignal<T>> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DiscreteSignal<T>, f: impl Fn(T, T) -> T) -> Result<DiscreteSignal<T>> {
        if self.grid != other.grid || self.features != other.features {
            return Err(Error::Shape(format!(
                "cannot combine {}x{} with {}x{}",
                self.features, self.grid, other.features, other.grid
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(DiscreteSignal { grid: self.grid.clone(), features: self.features, values })
    }

    pub(crate) fn with_values(&self, grid: GridSpec, values: Vec<T>) -> DiscreteSignal<T> {
        debug_assert_eq!(values.len(), self.features * grid.len());
        DiscreteSignal { grid, features: self.features, values }
    }
}
