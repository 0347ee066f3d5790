//! Fixed-resolution layers with explicit forward caches and backward passes.
//!
//! Every layer maps a spatially constant input to a spatially constant
//! output, which is what lets the blocks built from them sit inside a
//! Laplacian residual.

mod block;
mod head;
mod layers;
mod loss;

pub use block::{zero_constancy_check, BlockTape, ConstancyReport, InnerBlock, InnerBlockSpec};
pub use head::{Head, HeadTape};
pub use layers::{silu, silu_derivative, BatchNorm, BatchNormCache, Depthwise, Layer, LayerCache, Padding, Pointwise};
pub use loss::{accuracy, predictions, softmax_cross_entropy};

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::signal::{DiscreteSignal, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A batch of multichannel signals on one grid. Values are batch-major, then
/// feature-major, then row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    batch: usize,
    features: usize,
    grid: GridSpec,
    values: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(batch: usize, features: usize, grid: GridSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != batch * features * grid.len() {
            return Err(Error::Shape(format!(
                "{} values for batch {batch} x {features} features on {grid}",
                values.len()
            )));
        }
        Ok(Self { batch, features, grid, values })
    }

    pub fn zeros(batch: usize, features: usize, grid: GridSpec) -> Self {
        let values = vec![T::zero(); batch * features * grid.len()];
        Self { batch, features, grid, values }
    }

    /// Stacks signals that share a grid and feature count.
    pub fn from_signals(signals: &[DiscreteSignal<T>]) -> Result<Self> {
        let first = signals.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
        let mut values = Vec::with_capacity(signals.len() * first.values().len());
        for s in signals {
            if s.grid() != first.grid() || s.features() != first.features() {
                return Err(Error::Shape("signals in a batch must share grid and features".into()));
            }
            values.extend_from_slice(s.values());
        }
        Self::new(signals.len(), first.features(), first.grid().clone(), values)
    }

    pub fn signal(&self, b: usize) -> DiscreteSignal<T> {
        let n = self.features * self.grid.len();
        DiscreteSignal::new(self.grid.clone(), self.features, self.values[b * n..(b + 1) * n].to_vec())
            .expect("feature map holds finite values")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spatial(&self) -> usize {
        self.grid.len()
    }

    /// `batch * features`: the number of spatial lines.
    pub fn lines(&self) -> usize {
        self.batch * self.features
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Same batch and features, new grid and values.
    pub fn with_grid(&self, grid: GridSpec, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.batch * self.features * grid.len(), "feature map length");
        Self { batch: self.batch, features: self.features, grid, values }
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        self.with_grid(self.grid.clone(), values)
    }

    pub fn cast<U: Real>(&self) -> FeatureMap<U> {
        FeatureMap {
            batch: self.batch,
            features: self.features,
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &FeatureMap<T>) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).abs().as_f64()).fold(0.0, f64::max)
    }

    /// Largest per-(item, channel) spatial standard deviation.
    pub fn max_spatial_std(&self) -> f64 {
        let n = self.spatial();
        self.values
            .chunks(n)
            .map(|line| {
                let mean = line.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
                (line.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("feature map value at index {i}"))),
            None => Ok(()),
        }
    }
}

/// A named tensor with its gradient. Buffers (batch-norm running statistics)
/// are parameters that the optimiser skips and that carry no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    trainable: bool,
}

impl<T: Real> Parameter<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "parameter shape");
        let grad = vec![T::zero(); value.len()];
        Self { shape, value, grad, trainable: true }
    }

    pub fn buffer(shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "buffer shape");
        Self { shape, value, grad: Vec::new(), trainable: false }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![T::zero(); n])
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn fan_in_uniform<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let value = (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect();
        Self::new(shape, value)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub(crate) fn accumulate(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (a, &b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Uniform access to the parameters of a layer stack, in a fixed order.
pub trait HasParameters<T> {
    fn collect_parameters<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter<T>)>);
    fn collect_parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>);
}

/// Applies a `outputs x features` matrix to every site, without bias.
pub fn project_features<T: Real>(x: &FeatureMap<T>, weight: &[T], outputs: usize) -> FeatureMap<T> {
    layers::apply_features(x, weight, outputs, None)
}
