use rand::Rng;

use super::layers::{BatchNorm, Layer, LayerCache, Pointwise};
use super::{FeatureMap, HasParameters, Mode, Parameter};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::signal::GridSpec;

/// Classifier on the coarsest feature map: an optional pointwise tail
/// (pointwise, batch norm, SiLU), global average pooling, dropout and a
/// linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    tail: Vec<Layer<T>>,
    linear: Pointwise<T>,
    features: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct HeadTape<T> {
    tail: Vec<LayerCache<T>>,
    grid: GridSpec,
    pooled: FeatureMap<T>,
    mask: Option<Vec<T>>,
}

impl<T: Real> Head<T> {
    /// `tail_features == 0` drops the tail.
    pub fn new<R: Rng + ?Sized>(
        features: usize,
        tail_features: usize,
        classes: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if features == 0 || classes == 0 {
            return Err(Error::InvalidArgument("head needs features and classes".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("head dropout {dropout} outside [0, 1)")));
        }
        let (tail, pooled) = if tail_features == 0 {
            (Vec::new(), features)
        } else {
            (
                vec![
                    Layer::Pointwise(Pointwise::new(features, tail_features, true, rng)),
                    Layer::BatchNorm(BatchNorm::new(tail_features)),
                    Layer::Silu,
                ],
                tail_features,
            )
        };
        Ok(Self { tail, linear: Pointwise::new(pooled, classes, true, rng), features, dropout })
    }

    /// Linear layer only, with the given weight (`classes x features`) and bias.
    pub fn linear_only(features: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let classes = bias.len();
        if weight.len() != classes * features {
            return Err(Error::Shape("head weight must be classes x features".into()));
        }
        let linear = Pointwise { weight: Parameter::new(vec![classes, features], weight), bias: Some(Parameter::new(vec![classes], bias)) };
        Ok(Self { tail: Vec::new(), linear, features, dropout: 0.0 })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.linear.outputs()
    }

    /// Width of the pooled vector that dropout acts on.
    pub fn pooled_features(&self) -> usize {
        self.linear.inputs()
    }

    /// Inverted-dropout mask for a batch: entries are 0 or `1 / (1 - p)`.
    pub fn sample_mask<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<T>> {
        if self.dropout == 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - self.dropout));
        Some(
            (0..batch * self.pooled_features())
                .map(|_| if rng.random::<f64>() < self.dropout { T::zero() } else { keep })
                .collect(),
        )
    }

    /// Logits as a `batch x classes` map on a single site. The mask is only
    /// applied in train mode.
    pub fn forward(&self, x: &FeatureMap<T>, mode: Mode, mask: Option<&[T]>) -> Result<(FeatureMap<T>, HeadTape<T>)> {
        if x.features() != self.features {
            return Err(Error::Shape(format!("head expects {} features, got {}", self.features, x.features())));
        }
        let mut tail = Vec::with_capacity(self.tail.len());
        let mut cur = x.clone();
        for layer in &self.tail {
            let (y, cache) = layer.forward(&cur, mode)?;
            tail.push(cache);
            cur = y;
        }
        let grid = cur.grid().clone();
        let s = T::of(cur.spatial() as f64);
        let site = GridSpec::line(1).expect("unit grid");
        let means: Vec<T> = cur.values().chunks(cur.spatial()).map(|l| l.iter().copied().sum::<T>() / s).collect();
        let pooled = FeatureMap::new(cur.batch(), cur.features(), site, means)?;
        let mask = match (mode, mask) {
            (Mode::Train, Some(m)) => {
                if m.len() != pooled.values().len() {
                    return Err(Error::Shape("head dropout mask length".into()));
                }
                Some(m.to_vec())
            }
            _ => None,
        };
        let dropped = match &mask {
            Some(m) => pooled.with_values(pooled.values().iter().zip(m).map(|(&v, &k)| v * k).collect()),
            None => pooled.clone(),
        };
        let logits = self.linear.forward(&dropped)?;
        Ok((logits, HeadTape { tail, grid, pooled: dropped, mask }))
    }

    pub fn backward(&mut self, tape: &HeadTape<T>, grad: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        if tape.tail.len() != self.tail.len() {
            return Err(Error::Shape("tape does not belong to this head".into()));
        }
        let mut g = self.linear.backward(&tape.pooled, grad);
        if let Some(m) = &tape.mask {
            g.values_mut().iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        let n = tape.grid.len();
        let inv = T::one() / T::of(n as f64);
        let spread: Vec<T> = g.values().iter().flat_map(|&v| std::iter::repeat_n(v * inv, n)).collect();
        let mut g = g.with_grid(tape.grid.clone(), spread);
        for (layer, cache) in self.tail.iter_mut().zip(&tape.tail).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }

    pub fn commit(&mut self, tape: &HeadTape<T>) {
        for (layer, cache) in self.tail.iter_mut().zip(&tape.tail) {
            layer.commit(cache);
        }
    }

    /// Forward multiply-accumulates for one sample on a grid of `spatial` sites.
    pub fn macs(&self, spatial: usize) -> u64 {
        self.tail.iter().map(|l| l.macs(spatial)).sum::<u64>() + (self.classes() * self.pooled_features()) as u64
    }
}

impl<T: Real> HasParameters<T> for Head<T> {
    fn collect_parameters<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter<T>)>) {
        for (i, layer) in self.tail.iter().enumerate() {
            layer.collect_parameters(&format!("{prefix}.tail.{i}"), out);
        }
        out.push((format!("{prefix}.linear.weight"), &self.linear.weight));
        if let Some(b) = &self.linear.bias {
            out.push((format!("{prefix}.linear.bias"), b));
        }
    }

    fn collect_parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        for layer in &mut self.tail {
            layer.collect_parameters_mut(out);
        }
        out.push(&mut self.linear.weight);
        if let Some(b) = &mut self.linear.bias {
            out.push(b);
        }
    }
}

