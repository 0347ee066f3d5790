use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Depthwise, Layer, LayerCache, Padding, Pointwise};
use super::{FeatureMap, HasParameters, Mode, Parameter};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::signal::GridSpec;

/// Shape of an inverted-bottleneck block: pointwise expand, `depth` rounds of
/// depthwise 3x3 and pointwise 1x1, pointwise contract. Batch norm and SiLU
/// follow every layer except the final contraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerBlockSpec {
    pub features: usize,
    pub expansion: usize,
    pub depth: usize,
    #[serde(default = "replicate")]
    pub padding: Padding,
}

fn replicate() -> Padding {
    Padding::Replicate
}

impl InnerBlockSpec {
    pub fn new(features: usize) -> Self {
        Self { features, expansion: 2, depth: 1, padding: Padding::Replicate }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.expansion == 0 {
            return Err(Error::InvalidArgument("block features and expansion must be positive".into()));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.features * self.expansion
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerBlock<T> {
    features: usize,
    layers: Vec<Layer<T>>,
}

/// Per-layer caches from one forward pass, consumed by `backward` and `commit`.
#[derive(Debug, Clone)]
pub struct BlockTape<T> {
    caches: Vec<LayerCache<T>>,
}

impl<T: Real> InnerBlock<T> {
    pub fn new<R: Rng + ?Sized>(spec: &InnerBlockSpec, dims: usize, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (f, h) = (spec.features, spec.hidden());
        let mut layers = vec![
            Layer::Pointwise(Pointwise::new(f, h, true, rng)),
            Layer::BatchNorm(BatchNorm::new(h)),
            Layer::Silu,
        ];
        for _ in 0..spec.depth {
            layers.push(Layer::Depthwise(Depthwise::new(h, dims, spec.padding, rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(h)));
            layers.push(Layer::Silu);
            layers.push(Layer::Pointwise(Pointwise::new(h, h, false, rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(h)));
            layers.push(Layer::Silu);
        }
        layers.push(Layer::Pointwise(Pointwise::new(h, f, true, rng)));
        Ok(Self { features: f, layers })
    }

    /// A block with no layers.
    pub fn identity(features: usize) -> Self {
        Self { features, layers: Vec::new() }
    }

    /// Arbitrary layer stack; features must be preserved end to end.
    pub fn from_layers(features: usize, layers: Vec<Layer<T>>) -> Self {
        Self { features, layers }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn forward(&self, x: &FeatureMap<T>, mode: Mode) -> Result<(FeatureMap<T>, BlockTape<T>)> {
        if x.features() != self.features {
            return Err(Error::Shape(format!("block expects {} features, got {}", self.features, x.features())));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&cur, mode)?;
            caches.push(cache);
            cur = y;
        }
        if cur.features() != self.features {
            return Err(Error::Shape("block layers do not preserve the feature count".into()));
        }
        Ok((cur, BlockTape { caches }))
    }

    pub fn backward(&mut self, tape: &BlockTape<T>, grad: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::Shape("tape does not belong to this block".into()));
        }
        let mut g = grad.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }

    /// Commits batch-norm running statistics gathered in a train-mode forward.
    pub fn commit(&mut self, tape: &BlockTape<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            layer.commit(cache);
        }
    }

    /// Forward multiply-accumulates for one sample with `spatial` sites.
    pub fn macs(&self, spatial: usize) -> u64 {
        self.layers.iter().map(|l| l.macs(spatial)).sum()
    }
}

impl<T: Real> HasParameters<T> for InnerBlock<T> {
    fn collect_parameters<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter<T>)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect_parameters(&format!("{prefix}.{i}"), out);
        }
    }

    fn collect_parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        for layer in &mut self.layers {
            layer.collect_parameters_mut(out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstancyReport {
    pub pass: bool,
    pub max_deviation: f64,
}

/// Runs the block on an all-zero batch in eval mode and measures the largest
/// per-(item, channel) spatial standard deviation of the output.
pub fn zero_constancy_check<T: Real>(block: &InnerBlock<T>, grid: &GridSpec, tol: f64) -> ConstancyReport {
    let x = FeatureMap::zeros(2, block.features(), grid.clone());
    match block.forward(&x, Mode::Eval) {
        Ok((y, _)) => {
            let max_deviation = y.max_spatial_std();
            ConstancyReport { pass: max_deviation <= tol, max_deviation }
        }
        Err(_) => ConstancyReport { pass: false, max_deviation: f64::INFINITY },
    }
}
