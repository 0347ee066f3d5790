use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dropout::{DropoutConfig, DropoutMask};
use super::entry::{entry_level, EntryPolicy};
use super::residual::{LaplacianResidual, ResidualTape};
use crate::error::{Error, Result};
use crate::nn::{
    FeatureMap, HasParameters, Head, HeadTape, InnerBlock, InnerBlockSpec, Mode, Padding, Parameter, Pointwise,
};
use crate::real::Real;
use crate::signal::{fourier, GridSpec, ResolutionLadder, Resampler, SmoothingKernelSpec};

/// Logits with the residual and head tapes of one pass.
type Run<T> = (FeatureMap<T>, Vec<ResidualTape<T>>, HeadTape<T>);

/// Architecture hyperparameters. `features[n]` is the width of the residual
/// stream on ladder level `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub ladder: ResolutionLadder,
    pub in_features: usize,
    pub features: Vec<usize>,
    pub classes: usize,
    /// Width of the pointwise tail before pooling; 0 disables it.
    pub tail_features: usize,
    pub expansion: usize,
    pub depth: usize,
    pub kernel: SmoothingKernelSpec,
    pub head_dropout: f64,
    pub dropout: DropoutConfig,
}

impl ModelConfig {
    /// Three-level 1-D ladder 64, 32, 16 with widths 8, 16, 32.
    pub fn desk_1d(in_features: usize, classes: usize) -> Self {
        Self::with_ladder("64,32,16".parse().expect("valid ladder"), in_features, classes)
    }

    /// Three-level 2-D ladder 32x32, 16x16, 8x8 with widths 8, 16, 32.
    pub fn desk_2d(in_features: usize, classes: usize) -> Self {
        Self::with_ladder("32x32,16x16,8x8".parse().expect("valid ladder"), in_features, classes)
    }

    /// Widths double per level starting at 8.
    pub fn with_ladder(ladder: ResolutionLadder, in_features: usize, classes: usize) -> Self {
        let m = ladder.len() - 1;
        Self {
            features: (0..ladder.len()).map(|n| 8 << n).collect(),
            ladder,
            in_features,
            classes,
            tail_features: 64,
            expansion: 2,
            depth: 1,
            kernel: SmoothingKernelSpec::Perfect,
            head_dropout: 0.2,
            dropout: DropoutConfig::uniform(m, 0.3),
        }
    }

    pub fn residual_count(&self) -> usize {
        self.ladder.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.features.len() != self.ladder.len() {
            return bad(format!("{} feature widths for {} ladder levels", self.features.len(), self.ladder.len()));
        }
        if self.in_features == 0 || self.classes == 0 || self.features.contains(&0) || self.expansion == 0 {
            return bad("feature widths, classes and expansion must be positive".into());
        }
        if self.dropout.len() != self.residual_count() {
            return bad(format!("{} dropout probabilities for {} residuals", self.dropout.len(), self.residual_count()));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return bad(format!("head dropout {} outside [0, 1)", self.head_dropout));
        }
        self.dropout.validate()?;
        self.kernel.validate()
    }
}

/// Tape of a forward pass from level 0, consumed by `backward` and `commit`.
#[derive(Debug, Clone)]
pub struct ModelTape<T> {
    input: FeatureMap<T>,
    residuals: Vec<ResidualTape<T>>,
    head: HeadTape<T>,
}

/// A chain of Laplacian residuals over a resolution ladder plus a classifier
/// head. Inputs on a coarser ladder level skip the finer residuals and enter
/// through the composed projection.
#[derive(Debug)]
pub struct ArrnModel<T> {
    config: ModelConfig,
    input_projection: Pointwise<T>,
    residuals: Vec<LaplacianResidual<T>>,
    head: Head<T>,
    composed: Mutex<Vec<Option<Arc<Vec<T>>>>>,
}

impl<T: Real> Clone for ArrnModel<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            input_projection: self.input_projection.clone(),
            residuals: self.residuals.clone(),
            head: self.head.clone(),
            composed: Mutex::new(vec![None; self.config.ladder.len()]),
        }
    }
}

impl<T: Real> PartialEq for ArrnModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.input_projection == other.input_projection
            && self.residuals == other.residuals
            && self.head == other.head
    }
}

impl<T: Real> ArrnModel<T> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let dims = config.ladder.dims();
        let f = &config.features;
        let input_projection = Pointwise::new(config.in_features, f[0], false, rng);
        let mut residuals = Vec::with_capacity(config.residual_count());
        for n in 0..config.residual_count() {
            let spec = InnerBlockSpec {
                features: f[n],
                expansion: config.expansion,
                depth: config.depth,
                padding: Padding::Replicate,
            };
            let block = InnerBlock::new(&spec, dims, rng)?;
            let projection = Pointwise::new(f[n], f[n + 1], false, rng);
            let resampler = Resampler::new(config.ladder.level(n), config.ladder.level(n + 1), &config.kernel)?;
            residuals.push(LaplacianResidual::new(n, block, projection, resampler)?);
        }
        let head = Head::new(f[f.len() - 1], config.tail_features, config.classes, config.head_dropout, rng)?;
        let levels = config.ladder.len();
        Ok(Self { config, input_projection, residuals, head, composed: Mutex::new(vec![None; levels]) })
    }

    /// Same parameters, different smoothing kernel.
    pub fn with_kernel(&self, kernel: &SmoothingKernelSpec) -> Result<Self> {
        let mut out = self.clone();
        out.config.kernel = kernel.clone();
        for r in &mut out.residuals {
            r.set_kernel(kernel)?;
        }
        Ok(out)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ladder(&self) -> &ResolutionLadder {
        &self.config.ladder
    }

    pub fn residuals(&self) -> &[LaplacianResidual<T>] {
        &self.residuals
    }

    pub fn residuals_mut(&mut self) -> &mut [LaplacianResidual<T>] {
        self.invalidate();
        &mut self.residuals
    }

    pub fn input_projection(&self) -> &Parameter<T> {
        &self.input_projection.weight
    }

    pub fn input_projection_mut(&mut self) -> &mut Parameter<T> {
        self.invalidate();
        &mut self.input_projection.weight
    }

    pub fn head(&self) -> &Head<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head<T> {
        &mut self.head
    }

    pub fn parameter_count(&self) -> usize {
        let mut ps = Vec::new();
        self.collect_parameters("", &mut ps);
        ps.iter().filter(|(_, p)| p.trainable()).map(|(_, p)| p.len()).sum()
    }

    fn invalidate(&mut self) {
        self.composed.get_mut().unwrap_or_else(|e| e.into_inner()).iter_mut().for_each(|c| *c = None);
    }

    /// Product of the input projection and the first `level` residual
    /// projections, `features[level] x in_features`, computed once.
    pub fn composed_projection(&self, level: usize) -> Arc<Vec<T>> {
        let mut cache = self.composed.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(m) = &cache[level] {
            return Arc::clone(m);
        }
        let cin = self.config.in_features;
        let mut m = self.input_projection.weight.value.clone();
        for r in &self.residuals[..level] {
            let (fi, fo) = (r.in_features(), r.out_features());
            let p = &r.projection().value;
            let mut next = vec![T::zero(); fo * cin];
            for o in 0..fo {
                for k in 0..fi {
                    let w = p[o * fi + k];
                    for i in 0..cin {
                        next[o * cin + i] += w * m[k * cin + i];
                    }
                }
            }
            m = next;
        }
        let m = Arc::new(m);
        cache[level] = Some(Arc::clone(&m));
        m
    }

    fn check_input(&self, x: &FeatureMap<T>) -> Result<()> {
        if x.features() != self.config.in_features {
            return Err(Error::Shape(format!("model expects {} input features, got {}", self.config.in_features, x.features())));
        }
        Ok(())
    }

    fn run(
        &self,
        mut r: FeatureMap<T>,
        entry: usize,
        gates: &[bool],
        mode: Mode,
        head_mask: Option<&[T]>,
    ) -> Result<Run<T>> {
        let mut tapes = Vec::with_capacity(self.residuals.len() - entry);
        for (res, &gate) in self.residuals[entry..].iter().zip(gates) {
            let (next, tape) = res.forward(&r, gate, mode)?;
            tapes.push(tape);
            r = next;
        }
        let (logits, head) = self.head.forward(&r, mode, head_mask)?;
        Ok((logits, tapes, head))
    }

    /// Evaluation through every residual. `mask` gates the residuals; `None`
    /// keeps all of them.
    pub fn forward_full(&self, x: &FeatureMap<T>, mask: Option<&DropoutMask>, mode: Mode) -> Result<FeatureMap<T>> {
        Ok(self.forward_taped(x, mask, mode, None)?.0)
    }

    /// `forward_full` that also records the tape for `backward`.
    pub fn forward_taped(
        &self,
        x: &FeatureMap<T>,
        mask: Option<&DropoutMask>,
        mode: Mode,
        head_mask: Option<&[T]>,
    ) -> Result<(FeatureMap<T>, ModelTape<T>)> {
        self.check_input(x)?;
        if x.grid() != self.ladder().level(0) {
            return Err(Error::Shape(format!("full evaluation needs the finest grid {}, got {}", self.ladder().level(0), x.grid())));
        }
        let m = self.residuals.len();
        let all = DropoutMask::all_on(m);
        let mask = mask.unwrap_or(&all);
        if mask.len() != m {
            return Err(Error::Shape(format!("dropout mask of length {} for {m} residuals", mask.len())));
        }
        let r0 = self.input_projection.forward(x)?;
        let (logits, residuals, head) = self.run(r0, 0, mask.gates(), mode, head_mask)?;
        Ok((logits, ModelTape { input: x.clone(), residuals, head }))
    }

    /// Evaluation from the ladder level matching the input grid, skipping all
    /// finer residuals.
    pub fn forward_adapted(&self, x: &FeatureMap<T>, mode: Mode) -> Result<FeatureMap<T>> {
        self.check_input(x)?;
        let level = self
            .ladder()
            .position(x.grid())
            .ok_or_else(|| Error::Shape(format!("grid {} is not a ladder level", x.grid())))?;
        let m = self.composed_projection(level);
        let r = crate::nn::project_features(x, &m, self.config.features[level]);
        let gates = vec![true; self.residuals.len() - level];
        Ok(self.run(r, level, &gates, mode, None)?.0)
    }

    /// Resamples `x` onto its entry level and evaluates adaptively. Returns
    /// the level used.
    pub fn forward_at(&self, x: &FeatureMap<T>, policy: EntryPolicy, mode: Mode) -> Result<(usize, FeatureMap<T>)> {
        let (level, x) = self.prepare_input(x, policy)?;
        Ok((level, self.forward_adapted(&x, mode)?))
    }

    /// Interpolates `x` to the finest grid and evaluates every residual.
    pub fn forward_full_at(&self, x: &FeatureMap<T>, mode: Mode) -> Result<FeatureMap<T>> {
        let fine = self.ladder().level(0).clone();
        self.forward_full(&resample_map(x, &fine), None, mode)
    }

    /// Entry level for `x` and the input resampled onto it (spectral
    /// interpolation, not counted as compute).
    pub fn prepare_input(&self, x: &FeatureMap<T>, policy: EntryPolicy) -> Result<(usize, FeatureMap<T>)> {
        let plan = entry_level(self.ladder(), x.grid(), policy)?;
        let x = if plan.resample { resample_map(x, &plan.grid) } else { x.clone() };
        Ok((plan.level, x))
    }

    pub fn backward(&mut self, tape: &ModelTape<T>, grad: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.invalidate();
        if tape.residuals.len() != self.residuals.len() {
            return Err(Error::Shape("tape does not belong to this model".into()));
        }
        let mut g = self.head.backward(&tape.head, grad)?;
        for (res, t) in self.residuals.iter_mut().zip(&tape.residuals).rev() {
            g = res.backward(t, &g)?;
        }
        Ok(self.input_projection.backward(&tape.input, &g))
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn commit(&mut self, tape: &ModelTape<T>) {
        for (res, t) in self.residuals.iter_mut().zip(&tape.residuals) {
            res.commit(t);
        }
        self.head.commit(&tape.head);
    }

    /// Forward multiply-accumulates per sample when entering at `level` with
    /// every residual active.
    pub fn count_macs(&self, level: usize) -> u64 {
        let grid = self.ladder().level(level).len();
        let entry = (self.config.in_features * self.config.features[level] * grid) as u64;
        entry + self.residuals[level..].iter().map(|r| r.macs(true)).sum::<u64>() + self.head_macs()
    }

    /// Forward multiply-accumulates per sample of a full pass under `mask`.
    pub fn count_macs_masked(&self, mask: &DropoutMask) -> u64 {
        let entry = (self.config.in_features * self.config.features[0] * self.ladder().level(0).len()) as u64;
        entry + self.residuals.iter().zip(mask.gates()).map(|(r, &g)| r.macs(g)).sum::<u64>() + self.head_macs()
    }

    fn head_macs(&self) -> u64 {
        self.head.macs(self.ladder().level(self.ladder().coarsest()).len())
    }
}

/// Spectral resampling of every line onto `grid`.
pub fn resample_map<T: Real>(x: &FeatureMap<T>, grid: &GridSpec) -> FeatureMap<T> {
    if x.grid() == grid {
        return x.clone();
    }
    x.with_grid(grid.clone(), fourier::resample(x.values(), x.lines(), x.grid().extents(), grid.extents()))
}

impl<T: Real> HasParameters<T> for ArrnModel<T> {
    fn collect_parameters<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter<T>)>) {
        let p = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        out.push((p("input_projection"), &self.input_projection.weight));
        for (n, r) in self.residuals.iter().enumerate() {
            r.collect_parameters(&p(&format!("residual.{n}")), out);
        }
        self.head.collect_parameters(&p("head"), out);
    }

    fn collect_parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        self.invalidate();
        out.push(&mut self.input_projection.weight);
        for r in &mut self.residuals {
            r.collect_parameters_mut(out);
        }
        self.head.collect_parameters_mut(out);
    }
}
