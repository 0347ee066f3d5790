use crate::error::{Error, Result};
use crate::nn::{BlockTape, FeatureMap, HasParameters, InnerBlock, Mode, Parameter, Pointwise};
use crate::real::Real;
use crate::signal::{Resampler, SmoothingKernelSpec};

/// One rung of the residual chain: maps features on ladder level `level` to
/// the next coarser level.
///
/// Only the band between the two levels passes through the block. Its output
/// is mean-rejected, smoothed and decimated, added to the decimated low band
/// and projected to the next feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianResidual<T> {
    level: usize,
    block: InnerBlock<T>,
    projection: Pointwise<T>,
    resampler: Resampler<T>,
}

#[derive(Debug, Clone)]
pub struct ResidualTape<T> {
    block: Option<BlockTape<T>>,
    /// Projection input on the coarse grid.
    pre_projection: FeatureMap<T>,
}

/// Subtracts the spatial mean of every line.
pub(crate) fn reject_mean<T: Real>(values: &mut [T], spatial: usize) {
    let n = T::of(spatial as f64);
    for line in values.chunks_mut(spatial) {
        let mean = line.iter().copied().sum::<T>() / n;
        line.iter_mut().for_each(|v| *v -= mean);
    }
}

impl<T: Real> LaplacianResidual<T> {
    pub fn new(level: usize, block: InnerBlock<T>, projection: Pointwise<T>, resampler: Resampler<T>) -> Result<Self> {
        if projection.bias.is_some() {
            return Err(Error::InvalidArgument("residual projection carries no bias".into()));
        }
        if block.features() != projection.inputs() {
            return Err(Error::Shape("block and projection disagree on features".into()));
        }
        Ok(Self { level, block, projection, resampler })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn in_features(&self) -> usize {
        self.projection.inputs()
    }

    pub fn out_features(&self) -> usize {
        self.projection.outputs()
    }

    pub fn block(&self) -> &InnerBlock<T> {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut InnerBlock<T> {
        &mut self.block
    }

    pub fn projection(&self) -> &Parameter<T> {
        &self.projection.weight
    }

    pub fn projection_mut(&mut self) -> &mut Parameter<T> {
        &mut self.projection.weight
    }

    pub fn resampler(&self) -> &Resampler<T> {
        &self.resampler
    }

    pub(crate) fn set_kernel(&mut self, kernel: &SmoothingKernelSpec) -> Result<()> {
        self.resampler = Resampler::new(self.resampler.fine(), self.resampler.coarse(), kernel)?;
        Ok(())
    }

    pub fn forward(&self, r: &FeatureMap<T>, gate: bool, mode: Mode) -> Result<(FeatureMap<T>, ResidualTape<T>)> {
        if r.grid() != self.resampler.fine() || r.features() != self.in_features() {
            return Err(Error::Shape(format!(
                "residual {} expects {} features on {}, got {} on {}",
                self.level,
                self.in_features(),
                self.resampler.fine(),
                r.features(),
                r.grid()
            )));
        }
        let outer = r.lines();
        let coarse = self.resampler.coarse().clone();
        let (summed, block) = if gate {
            let low = self.resampler.lowpass(r.values(), outer);
            let diff: Vec<T> = r.values().iter().zip(&low).map(|(&a, &b)| a - b).collect();
            let (y, tape) = self.block.forward(&r.with_values(diff), mode)?;
            let mut z = y.into_values();
            reject_mean(&mut z, r.spatial());
            let mut s = self.resampler.reduce(&z, outer);
            for (v, d) in s.iter_mut().zip(self.resampler.decimate(&low, outer)) {
                *v += d;
            }
            (s, Some(tape))
        } else {
            (self.resampler.reduce(r.values(), outer), None)
        };
        let pre_projection = r.with_grid(coarse, summed);
        let out = self.projection.forward(&pre_projection)?;
        Ok((out, ResidualTape { block, pre_projection }))
    }

    pub fn backward(&mut self, tape: &ResidualTape<T>, grad: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let g_s = self.projection.backward(&tape.pre_projection, grad);
        let outer = g_s.lines();
        let fine = self.resampler.fine().clone();
        let Some(block_tape) = &tape.block else {
            return Ok(g_s.with_grid(fine, self.resampler.reduce_adjoint(g_s.values(), outer)));
        };
        let mut g_z = self.resampler.reduce_adjoint(g_s.values(), outer);
        reject_mean(&mut g_z, fine.len());
        let g_diff = self.block.backward(block_tape, &g_s.with_grid(fine.clone(), g_z))?;
        let mut g_low = self.resampler.decimate_adjoint(g_s.values(), outer);
        for (l, &d) in g_low.iter_mut().zip(g_diff.values()) {
            *l -= d;
        }
        let mut g_r = self.resampler.lowpass_adjoint(&g_low, outer);
        for (r, &d) in g_r.iter_mut().zip(g_diff.values()) {
            *r += d;
        }
        Ok(g_diff.with_values(g_r))
    }

    pub fn commit(&mut self, tape: &ResidualTape<T>) {
        if let Some(t) = &tape.block {
            self.block.commit(t);
        }
    }

    /// Forward multiply-accumulates per sample.
    pub fn macs(&self, gate: bool) -> u64 {
        let f = self.in_features() as u64;
        let proj = (self.in_features() * self.out_features() * self.resampler.coarse().len()) as u64;
        let reduce = f * self.resampler.reduce_macs();
        if gate {
            f * self.resampler.lowpass_macs() + self.block.macs(self.resampler.fine().len()) + reduce + proj
        } else {
            reduce + proj
        }
    }
}

impl<T: Real> HasParameters<T> for LaplacianResidual<T> {
    fn collect_parameters<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter<T>)>) {
        self.block.collect_parameters(&format!("{prefix}.block"), out);
        out.push((format!("{prefix}.projection"), &self.projection.weight));
    }

    fn collect_parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        self.block.collect_parameters_mut(out);
        out.push(&mut self.projection.weight);
    }
}
