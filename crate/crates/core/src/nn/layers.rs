use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureMap, HasParameters, Mode, Parameter};
use crate::error::{Error, Result};
use crate::macs;
use crate::par;
use crate::real::Real;

/// 1x1 convolution: a per-sample matrix over features, with optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise<T> {
    pub weight: Parameter<T>,
    pub bias: Option<Parameter<T>>,
}

impl<T: Real> Pointwise<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, bias: bool, rng: &mut R) -> Self {
        Self {
            weight: Parameter::fan_in_uniform(vec![outputs, inputs], inputs, rng),
            bias: bias.then(|| Parameter::zeros(vec![outputs])),
        }
    }

    /// Weight = identity, bias = 0.
    pub fn identity(features: usize, bias: bool) -> Self {
        let mut w = vec![T::zero(); features * features];
        for i in 0..features {
            w[i * features + i] = T::one();
        }
        Self { weight: Parameter::new(vec![features, features], w), bias: bias.then(|| Parameter::zeros(vec![features])) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        if x.features() != self.inputs() {
            return Err(Error::Shape(format!("pointwise expects {} features, got {}", self.inputs(), x.features())));
        }
        Ok(apply_features(x, &self.weight.value, self.outputs(), self.bias.as_ref().map(|b| b.value.as_slice())))
    }

    pub fn backward(&mut self, input: &FeatureMap<T>, grad: &FeatureMap<T>) -> FeatureMap<T> {
        let (cin, cout, s) = (self.inputs(), self.outputs(), input.spatial());
        let x = input.values();
        let g = grad.values();
        let gw = par::sum_ordered(input.batch(), cout * cin, |b| {
            let xb = &x[b * cin * s..(b + 1) * cin * s];
            let gb = &g[b * cout * s..(b + 1) * cout * s];
            let mut acc = vec![T::zero(); cout * cin];
            for o in 0..cout {
                let go = &gb[o * s..(o + 1) * s];
                for i in 0..cin {
                    acc[o * cin + i] = go.iter().zip(&xb[i * s..(i + 1) * s]).map(|(&a, &b)| a * b).sum();
                }
            }
            acc
        });
        macs::record((input.batch() * cout * cin * s) as u64);
        self.weight.accumulate(&gw);
        if let Some(bias) = self.bias.as_mut() {
            let gb = bias_grad(grad);
            bias.accumulate(&gb);
        }
        apply_features_transposed(grad, &self.weight.value, cin)
    }
}

/// `out[b, o, p] = sum_i w[o, i] * x[b, i, p] + bias[o]`.
pub(crate) fn apply_features<T: Real>(x: &FeatureMap<T>, w: &[T], outputs: usize, bias: Option<&[T]>) -> FeatureMap<T> {
    let (cin, s) = (x.features(), x.spatial());
    macs::record((x.batch() * outputs * cin * s) as u64);
    let src = x.values();
    let mut out = vec![T::zero(); x.batch() * outputs * s];
    par::for_each_chunk(&mut out, outputs * s, |b, dst| {
        let xb = &src[b * cin * s..(b + 1) * cin * s];
        for o in 0..outputs {
            let row = &mut dst[o * s..(o + 1) * s];
            if let Some(bias) = bias {
                row.iter_mut().for_each(|v| *v = bias[o]);
            }
            for i in 0..cin {
                let wv = w[o * cin + i];
                for (r, &v) in row.iter_mut().zip(&xb[i * s..(i + 1) * s]) {
                    *r += wv * v;
                }
            }
        }
    });
    FeatureMap { batch: x.batch(), features: outputs, grid: x.grid().clone(), values: out }
}

/// `out[b, i, p] = sum_o w[o, i] * g[b, o, p]`.
pub(crate) fn apply_features_transposed<T: Real>(g: &FeatureMap<T>, w: &[T], inputs: usize) -> FeatureMap<T> {
    let (cout, s) = (g.features(), g.spatial());
    macs::record((g.batch() * cout * inputs * s) as u64);
    let src = g.values();
    let mut out = vec![T::zero(); g.batch() * inputs * s];
    par::for_each_chunk(&mut out, inputs * s, |b, dst| {
        let gb = &src[b * cout * s..(b + 1) * cout * s];
        for o in 0..cout {
            let go = &gb[o * s..(o + 1) * s];
            for i in 0..inputs {
                let wv = w[o * inputs + i];
                for (r, &v) in dst[i * s..(i + 1) * s].iter_mut().zip(go) {
                    *r += wv * v;
                }
            }
        }
    });
    FeatureMap { batch: g.batch(), features: inputs, grid: g.grid().clone(), values: out }
}

/// Per-channel sum over batch and space.
fn bias_grad<T: Real>(grad: &FeatureMap<T>) -> Vec<T> {
    let (c, s) = (grad.features(), grad.spatial());
    let mut acc = vec![T::zero(); c];
    for (l, line) in grad.values().chunks(s).enumerate() {
        acc[l % c] += line.iter().copied().sum::<T>();
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Edge replication: keeps constant inputs constant.
    Replicate,
    /// Zero padding. Breaks constancy; only useful as a counterexample.
    Zero,
}

/// Depthwise 3 (1-D) or 3x3 (2-D) convolution, stride 1, same-size output.
#[derive(Debug, Clone, PartialEq)]
pub struct Depthwise<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub padding: Padding,
    dims: usize,
}

const TAPS: isize = 1;

impl<T: Real> Depthwise<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, dims: usize, padding: Padding, rng: &mut R) -> Self {
        let k = 3usize.pow(dims as u32);
        Self {
            weight: Parameter::fan_in_uniform(vec![channels, k], k, rng),
            bias: Parameter::zeros(vec![channels]),
            padding,
            dims,
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn kernel_len(&self) -> usize {
        3usize.pow(self.dims as u32)
    }

    /// Source index for output site `p` shifted by `offsets`, or `None` when
    /// it falls into zero padding.
    fn source(&self, ext: &[usize], p: usize, offsets: &[isize]) -> Option<usize> {
        let mut idx = 0usize;
        let mut rem = p;
        let mut coords = [0isize; 2];
        for a in (0..ext.len()).rev() {
            coords[a] = (rem % ext[a]) as isize;
            rem /= ext[a];
        }
        for a in 0..ext.len() {
            let mut c = coords[a] + offsets[a];
            if c < 0 || c >= ext[a] as isize {
                match self.padding {
                    Padding::Replicate => c = c.clamp(0, ext[a] as isize - 1),
                    Padding::Zero => return None,
                }
            }
            idx = idx * ext[a] + c as usize;
        }
        Some(idx)
    }

    fn offsets(&self) -> Vec<Vec<isize>> {
        match self.dims {
            1 => (-TAPS..=TAPS).map(|d| vec![d]).collect(),
            _ => (-TAPS..=TAPS).flat_map(|a| (-TAPS..=TAPS).map(move |b| vec![a, b])).collect(),
        }
    }

    /// Gather table: for each tap and output site, the source site.
    fn table(&self, ext: &[usize]) -> Vec<Vec<Option<usize>>> {
        let n: usize = ext.iter().product();
        self.offsets().iter().map(|off| (0..n).map(|p| self.source(ext, p, off)).collect()).collect()
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        if x.features() != self.channels() || x.grid().dims() != self.dims {
            return Err(Error::Shape(format!(
                "depthwise expects {} channels in {}-D, got {} channels on {}",
                self.channels(),
                self.dims,
                x.features(),
                x.grid()
            )));
        }
        let (c, s, k) = (self.channels(), x.spatial(), self.kernel_len());
        let table = self.table(x.grid().extents());
        macs::record((x.lines() * s * k) as u64);
        let src = x.values();
        let w = &self.weight.value;
        let bias = &self.bias.value;
        let mut out = vec![T::zero(); src.len()];
        par::for_each_chunk(&mut out, s, |l, dst| {
            let ch = l % c;
            let line = &src[l * s..(l + 1) * s];
            dst.iter_mut().for_each(|v| *v = bias[ch]);
            for (t, col) in table.iter().enumerate() {
                let wv = w[ch * k + t];
                for (p, srcp) in col.iter().enumerate() {
                    if let Some(q) = srcp {
                        dst[p] += wv * line[*q];
                    }
                }
            }
        });
        Ok(x.with_values(out))
    }

    pub fn backward(&mut self, input: &FeatureMap<T>, grad: &FeatureMap<T>) -> FeatureMap<T> {
        let (c, s, k) = (self.channels(), input.spatial(), self.kernel_len());
        let table = self.table(input.grid().extents());
        macs::record((2 * input.lines() * s * k) as u64);
        let x = input.values();
        let g = grad.values();
        let gw = par::sum_ordered(input.batch(), c * k, |b| {
            let mut acc = vec![T::zero(); c * k];
            for ch in 0..c {
                let l = b * c + ch;
                let line = &x[l * s..(l + 1) * s];
                let gl = &g[l * s..(l + 1) * s];
                for (t, col) in table.iter().enumerate() {
                    let mut sum = T::zero();
                    for (p, srcp) in col.iter().enumerate() {
                        if let Some(q) = srcp {
                            sum += gl[p] * line[*q];
                        }
                    }
                    acc[ch * k + t] = sum;
                }
            }
            acc
        });
        self.weight.accumulate(&gw);
        self.bias.accumulate(&bias_grad(grad));
        let w = &self.weight.value;
        let mut out = vec![T::zero(); x.len()];
        par::for_each_chunk(&mut out, s, |l, dst| {
            let ch = l % c;
            let gl = &g[l * s..(l + 1) * s];
            for (t, col) in table.iter().enumerate() {
                let wv = w[ch * k + t];
                for (p, srcp) in col.iter().enumerate() {
                    if let Some(q) = srcp {
                        dst[*q] += wv * gl[p];
                    }
                }
            }
        });
        grad.with_values(out)
    }
}

/// Per-channel batch normalisation with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Parameter<T>,
    pub running_var: Parameter<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
    count: usize,
    train: bool,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Parameter::new(vec![channels], vec![T::one(); channels]),
            beta: Parameter::zeros(vec![channels]),
            running_mean: Parameter::buffer(vec![channels], vec![T::zero(); channels]),
            running_var: Parameter::buffer(vec![channels], vec![T::one(); channels]),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &FeatureMap<T>, mode: Mode) -> Result<(FeatureMap<T>, BatchNormCache<T>)> {
        let c = self.channels();
        if x.features() != c {
            return Err(Error::Shape(format!("batch norm expects {c} channels, got {}", x.features())));
        }
        let s = x.spatial();
        let count = x.batch() * s;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut sq = vec![T::zero(); c];
                for (l, line) in x.values().chunks(s).enumerate() {
                    mean[l % c] += line.iter().copied().sum::<T>();
                }
                let n = T::of(count as f64);
                mean.iter_mut().for_each(|m| *m /= n);
                for (l, line) in x.values().chunks(s).enumerate() {
                    let m = mean[l % c];
                    sq[l % c] += line.iter().map(|&v| (v - m) * (v - m)).sum::<T>();
                }
                sq.iter_mut().for_each(|v| *v /= n);
                (mean, sq)
            }
            Mode::Eval => (self.running_mean.value.clone(), self.running_var.value.clone()),
        };
        let eps = T::of(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut normalized = x.values().to_vec();
        let mut out = x.values().to_vec();
        for (l, (nl, ol)) in normalized.chunks_mut(s).zip(out.chunks_mut(s)).enumerate() {
            let ch = l % c;
            let (m, is, g, b) = (mean[ch], inv_std[ch], self.gamma.value[ch], self.beta.value[ch]);
            for (nv, ov) in nl.iter_mut().zip(ol.iter_mut()) {
                *nv = (*nv - m) * is;
                *ov = g * *nv + b;
            }
        }
        let cache = BatchNormCache { normalized, inv_std, batch_mean: mean, batch_var: var, count, train: mode == Mode::Train };
        Ok((x.with_values(out), cache))
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, grad: &FeatureMap<T>) -> FeatureMap<T> {
        let (c, s) = (self.channels(), grad.spatial());
        let g = grad.values();
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for (l, (gl, xl)) in g.chunks(s).zip(cache.normalized.chunks(s)).enumerate() {
            sum_g[l % c] += gl.iter().copied().sum::<T>();
            sum_gx[l % c] += gl.iter().zip(xl).map(|(&a, &b)| a * b).sum::<T>();
        }
        self.gamma.accumulate(&sum_gx);
        self.beta.accumulate(&sum_g);
        let n = T::of(cache.count as f64);
        let mut out = g.to_vec();
        for (l, (ol, xl)) in out.chunks_mut(s).zip(cache.normalized.chunks(s)).enumerate() {
            let ch = l % c;
            let scale = self.gamma.value[ch] * cache.inv_std[ch];
            if cache.train {
                let (mg, mgx) = (sum_g[ch] / n, sum_gx[ch] / n);
                for (o, &xh) in ol.iter_mut().zip(xl) {
                    *o = scale * (*o - mg - xh * mgx);
                }
            } else {
                ol.iter_mut().for_each(|o| *o *= scale);
            }
        }
        grad.with_values(out)
    }

    /// Folds the batch statistics of a train-mode forward into the running
    /// estimates (unbiased variance).
    pub fn commit(&mut self, cache: &BatchNormCache<T>) {
        if !cache.train {
            return;
        }
        let mom = T::of(self.momentum);
        let keep = T::one() - mom;
        let n = cache.count as f64;
        let unbias = T::of(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
        for ch in 0..self.channels() {
            let rm = &mut self.running_mean.value[ch];
            *rm = keep * *rm + mom * cache.batch_mean[ch];
            let rv = &mut self.running_var.value[ch];
            *rv = keep * *rv + mom * cache.batch_var[ch] * unbias;
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `x * sigmoid(x)`.
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

pub fn silu_derivative<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Pointwise(Pointwise<T>),
    Depthwise(Depthwise<T>),
    BatchNorm(BatchNorm<T>),
    Silu,
}

#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Input(FeatureMap<T>),
    BatchNorm(BatchNormCache<T>),
}

impl<T: Real> Layer<T> {
    pub fn forward(&self, x: &FeatureMap<T>, mode: Mode) -> Result<(FeatureMap<T>, LayerCache<T>)> {
        match self {
            Layer::Pointwise(l) => Ok((l.forward(x)?, LayerCache::Input(x.clone()))),
            Layer::Depthwise(l) => Ok((l.forward(x)?, LayerCache::Input(x.clone()))),
            Layer::BatchNorm(l) => {
                let (y, cache) = l.forward(x, mode)?;
                Ok((y, LayerCache::BatchNorm(cache)))
            }
            Layer::Silu => {
                let y: Vec<T> = x.values().iter().map(|&v| silu(v)).collect();
                Ok((x.with_values(y), LayerCache::Input(x.clone())))
            }
        }
    }

    pub fn backward(&mut self, cache: &LayerCache<T>, grad: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        match (self, cache) {
            (Layer::Pointwise(l), LayerCache::Input(x)) => Ok(l.backward(x, grad)),
            (Layer::Depthwise(l), LayerCache::Input(x)) => Ok(l.backward(x, grad)),
            (Layer::BatchNorm(l), LayerCache::BatchNorm(c)) => Ok(l.backward(c, grad)),
            (Layer::Silu, LayerCache::Input(x)) => {
                let g: Vec<T> =
                    x.values().iter().zip(grad.values()).map(|(&v, &gv)| gv * silu_derivative(v)).collect();
                Ok(grad.with_values(g))
            }
            _ => Err(Error::Shape("tape entry does not match layer".into())),
        }
    }

    pub fn commit(&mut self, cache: &LayerCache<T>) {
        if let (Layer::BatchNorm(l), LayerCache::BatchNorm(c)) = (self, cache) {
            l.commit(c);
        }
    }

    /// Multiply-accumulates for one forward pass on one sample with `spatial` sites.
    pub fn macs(&self, spatial: usize) -> u64 {
        match self {
            Layer::Pointwise(l) => (l.inputs() * l.outputs() * spatial) as u64,
            Layer::Depthwise(l) => (l.channels() * l.kernel_len() * spatial) as u64,
            Layer::BatchNorm(_) | Layer::Silu => 0,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Layer::Pointwise(_) => "pw",
            Layer::Depthwise(_) => "dw",
            Layer::BatchNorm(_) => "bn",
            Layer::Silu => "silu",
        }
    }
}

impl<T: Real> HasParameters<T> for Layer<T> {
    fn collect_parameters<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter<T>)>) {
        let p = |n: &str| format!("{prefix}.{}.{n}", self.kind());
        match self {
            Layer::Pointwise(l) => {
                out.push((p("weight"), &l.weight));
                if let Some(b) = &l.bias {
                    out.push((p("bias"), b));
                }
            }
            Layer::Depthwise(l) => {
                out.push((p("weight"), &l.weight));
                out.push((p("bias"), &l.bias));
            }
            Layer::BatchNorm(l) => {
                out.push((p("gamma"), &l.gamma));
                out.push((p("beta"), &l.beta));
                out.push((p("running_mean"), &l.running_mean));
                out.push((p("running_var"), &l.running_var));
            }
            Layer::Silu => {}
        }
    }

    fn collect_parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        match self {
            Layer::Pointwise(l) => {
                out.push(&mut l.weight);
                if let Some(b) = &mut l.bias {
                    out.push(b);
                }
            }
            Layer::Depthwise(l) => {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
            Layer::BatchNorm(l) => {
                out.push(&mut l.gamma);
                out.push(&mut l.beta);
                out.push(&mut l.running_mean);
                out.push(&mut l.running_var);
            }
            Layer::Silu => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::GridSpec;

    #[test]
    fn silu_closed_forms() {
        assert_eq!(silu(0.0f64), 0.0);
        assert!((silu(1.0f64) - 0.7310585786300049).abs() < 1e-15);
        assert_eq!(silu_derivative(0.0f64), 0.5);
    }

    #[test]
    fn identity_pointwise_is_noop() {
        let x = FeatureMap::new(2, 3, GridSpec::line(4).unwrap(), (0..24).map(|v| v as f64 * 0.5 - 3.0).collect()).unwrap();
        let y = Pointwise::identity(3, true).forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn pointwise_weight_gradient_is_outer_product() {
        // single site, single sample: dL/dW = g x^T
        let x = FeatureMap::new(1, 2, GridSpec::line(1).unwrap(), vec![2.0, -1.0]).unwrap();
        let mut pw = Pointwise::<f64>::identity(2, false);
        pw.weight.value = vec![0.3, 0.1, -0.2, 0.5];
        let g = FeatureMap::new(1, 3 - 1, GridSpec::line(1).unwrap(), vec![1.5, 4.0]).unwrap();
        let gx = pw.backward(&x, &g);
        assert_eq!(pw.weight.grad, vec![3.0, -1.5, 8.0, -4.0]);
        assert_eq!(gx.values(), &[0.3 * 1.5 - 0.2 * 4.0, 0.1 * 1.5 + 0.5 * 4.0]);
    }

    #[test]
    fn replicate_depthwise_keeps_constants_and_zero_padding_does_not() {
        let mut rng = rand::rng();
        let x = FeatureMap::new(1, 2, GridSpec::square(4).unwrap(), vec![1.5; 32]).unwrap();
        let rep = Depthwise::<f64>::new(2, 2, Padding::Replicate, &mut rng);
        assert!(rep.forward(&x).unwrap().max_spatial_std() < 1e-12);
        let zero = Depthwise::<f64> { padding: Padding::Zero, ..rep };
        assert!(zero.forward(&x).unwrap().max_spatial_std() > 1e-3);
    }

    #[test]
    fn batch_norm_train_normalises() {
        let x = FeatureMap::new(2, 1, GridSpec::line(2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bn = BatchNorm::<f64>::new(1);
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        let mean: f64 = y.values().iter().sum::<f64>() / 4.0;
        let var: f64 = y.values().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.25 / (1.25 + 1e-5)).abs() < 1e-9);
    }
}
