//! Smoothing kernels and the dense per-axis resampling operators built from
//! them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::axis::{self, Matrix};
use super::fourier;
use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::real::Real;

/// How the smoothing kernel for a bandwidth reduction is realised.
///
/// `Perfect` is the ideal (Dirichlet) low-pass, implemented by spectral
/// truncation. The two approximations are separable spatial kernels applied
/// by circular convolution on the fine grid; their taps are expressed for a
/// factor-2 reduction and scale with the decimation factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
#[derive(Default)]
pub enum SmoothingKernelSpec {
    #[default]
    Perfect,
    /// Hann-windowed sinc with cutoff at the coarse Nyquist frequency.
    WindowedSinc { taps_per_axis: usize },
    /// `sigma = sigma_factor * factor`, truncated at `ceil(radius_factor * sigma)`.
    TruncatedGaussian { sigma_factor: f64, radius_factor: f64 },
}


impl SmoothingKernelSpec {
    pub fn windowed_sinc() -> Self {
        SmoothingKernelSpec::WindowedSinc { taps_per_axis: 9 }
    }

    pub fn truncated_gaussian() -> Self {
        SmoothingKernelSpec::TruncatedGaussian { sigma_factor: 0.5, radius_factor: 2.0 }
    }

    pub fn is_perfect(&self) -> bool {
        matches!(self, SmoothingKernelSpec::Perfect)
    }

    /// Short label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            SmoothingKernelSpec::Perfect => "perfect",
            SmoothingKernelSpec::WindowedSinc { .. } => "windowed-sinc",
            SmoothingKernelSpec::TruncatedGaussian { .. } => "gaussian",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SmoothingKernelSpec::Perfect => Ok(()),
            SmoothingKernelSpec::WindowedSinc { taps_per_axis } => {
                if taps_per_axis < 3 || taps_per_axis % 2 == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "windowed-sinc taps must be odd and >= 3, got {taps_per_axis}"
                    )));
                }
                Ok(())
            }
            SmoothingKernelSpec::TruncatedGaussian { sigma_factor, radius_factor } => {
                if !(sigma_factor > 0.0 && radius_factor > 0.0 && sigma_factor.is_finite() && radius_factor.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian factors must be positive, got sigma {sigma_factor}, radius {radius_factor}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Centred 1-D taps (length `2r + 1`, summing to one) for a reduction by
    /// `factor`, or `None` for the spectral kernel.
    pub fn taps(&self, factor: usize) -> Option<Vec<f64>> {
        if factor <= 1 {
            return match self {
                SmoothingKernelSpec::Perfect => None,
                _ => Some(vec![1.0]),
            };
        }
        let f = factor as f64;
        let raw: Vec<f64> = match *self {
            SmoothingKernelSpec::Perfect => return None,
            SmoothingKernelSpec::WindowedSinc { taps_per_axis } => {
                let r = (((taps_per_axis - 1) / 2) as f64 * f / 2.0).ceil() as isize;
                (-r..=r)
                    .map(|j| {
                        let x = j as f64 / f;
                        let sinc = if j == 0 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
                        let w = 0.5 * (1.0 + (std::f64::consts::PI * j as f64 / (r + 1) as f64).cos());
                        sinc * w
                    })
                    .collect()
            }
            SmoothingKernelSpec::TruncatedGaussian { sigma_factor, radius_factor } => {
                let sigma = sigma_factor * f;
                let r = (radius_factor * sigma).ceil() as isize;
                (-r..=r).map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp()).collect()
            }
        };
        let sum: f64 = raw.iter().sum();
        Some(raw.into_iter().map(|v| v / sum).collect())
    }
}

impl fmt::Display for SmoothingKernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothingKernelSpec::Perfect => f.write_str("perfect"),
            SmoothingKernelSpec::WindowedSinc { taps_per_axis } => write!(f, "windowed-sinc:{taps_per_axis}"),
            SmoothingKernelSpec::TruncatedGaussian { sigma_factor, radius_factor } => {
                write!(f, "gaussian:{sigma_factor}:{radius_factor}")
            }
        }
    }
}

impl FromStr for SmoothingKernelSpec {
    type Err = Error;

    /// Accepts `perfect`, `windowed-sinc[:taps]` (alias `sinc`) and
    /// `gaussian[:sigma_factor[:radius_factor]]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize| -> Result<Option<f64>> {
            args.get(i)
                .map(|a| a.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad kernel parameter `{a}`"))))
                .transpose()
        };
        let spec = match name {
            "perfect" if args.is_empty() => SmoothingKernelSpec::Perfect,
            "windowed-sinc" | "sinc" if args.len() <= 1 => SmoothingKernelSpec::WindowedSinc {
                taps_per_axis: num(0)?.map(|v| v as usize).unwrap_or(9),
            },
            "gaussian" | "truncated-gaussian" if args.len() <= 2 => SmoothingKernelSpec::TruncatedGaussian {
                sigma_factor: num(0)?.unwrap_or(0.5),
                radius_factor: num(1)?.unwrap_or(2.0),
            },
            _ => return Err(Error::InvalidArgument(format!("unknown kernel `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Dense operators for one axis of a fine-to-coarse reduction.
#[derive(Debug, Clone)]
struct AxisOps<T> {
    factor: usize,
    /// Smoothing on the fine grid (n x n).
    lowpass: Matrix<T>,
    lowpass_t: Matrix<T>,
    /// Smoothing fused with decimation (e x n).
    reduce: Matrix<T>,
    reduce_t: Matrix<T>,
    /// Bandlimited interpolation from coarse to fine (n x e).
    upsample: Matrix<T>,
}

fn lowpass_matrix(kernel: &SmoothingKernelSpec, n: usize, e: usize) -> Matrix<f64> {
    match kernel.taps(n / e) {
        None => {
            let eye = Matrix::<f64>::identity(n);
            // The projector is symmetric, so projecting the rows of the
            // identity yields the matrix itself.
            Matrix::from_vec(n, n, fourier::band_project(eye.data(), n, &[n], &[e]))
        }
        Some(taps) => {
            let r = (taps.len() / 2) as isize;
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                for (t, &h) in taps.iter().enumerate() {
                    let offset = t as isize - r;
                    let j = (i as isize - offset).rem_euclid(n as isize) as usize;
                    data[i * n + j] += h;
                }
            }
            Matrix::from_vec(n, n, data)
        }
    }
}

fn upsample_matrix(e: usize, n: usize) -> Matrix<f64> {
    let eye = Matrix::<f64>::identity(e);
    // Row j of the result is the interpolant of the j-th coarse impulse.
    let cols = fourier::resample(eye.data(), e, &[e], &[n]);
    Matrix::from_vec(e, n, cols).transpose()
}

impl<T: Real> AxisOps<T> {
    fn build(kernel: &SmoothingKernelSpec, n: usize, e: usize) -> Self {
        let factor = n / e;
        let lowpass = lowpass_matrix(kernel, n, e);
        let reduce_rows: Vec<f64> = (0..e).flat_map(|r| lowpass.data()[r * factor * n..(r * factor + 1) * n].to_vec()).collect();
        let reduce = Matrix::from_vec(e, n, reduce_rows);
        let upsample = upsample_matrix(e, n);
        Self {
            factor,
            lowpass_t: lowpass.transpose().cast(),
            lowpass: lowpass.cast(),
            reduce_t: reduce.transpose().cast(),
            reduce: reduce.cast(),
            upsample: upsample.cast(),
        }
    }
}

/// Linear resampling between a fine grid and an integer subdivision of it,
/// realised as dense separable matrices.
///
/// With the `Perfect` kernel `lowpass` is the exact orthogonal band
/// projector, `reduce = decimate . lowpass`, and `upsample . reduce == lowpass`.
#[derive(Debug, Clone)]
pub struct Resampler<T> {
    fine: GridSpec,
    coarse: GridSpec,
    kernel: SmoothingKernelSpec,
    axes: Vec<Option<AxisOps<T>>>,
}

impl<T> PartialEq for Resampler<T> {
    fn eq(&self, other: &Self) -> bool {
        self.fine == other.fine && self.coarse == other.coarse && self.kernel == other.kernel
    }
}

impl<T: Real> Resampler<T> {
    pub fn new(fine: &GridSpec, coarse: &GridSpec, kernel: &SmoothingKernelSpec) -> Result<Self> {
        kernel.validate()?;
        let factors = fine.require_coarser(coarse)?;
        let axes = factors
            .iter()
            .zip(fine.extents().iter().zip(coarse.extents()))
            .map(|(&f, (&n, &e))| (f > 1).then(|| AxisOps::build(kernel, n, e)))
            .collect();
        Ok(Self { fine: fine.clone(), coarse: coarse.clone(), kernel: kernel.clone(), axes })
    }

    pub fn fine(&self) -> &GridSpec {
        &self.fine
    }

    pub fn coarse(&self) -> &GridSpec {
        &self.coarse
    }

    pub fn kernel(&self) -> &SmoothingKernelSpec {
        &self.kernel
    }

    fn chain(&self, data: &[T], outer: usize, start: &[usize], pick: impl Fn(&AxisOps<T>) -> &Matrix<T>) -> Vec<T> {
        let mut ext = start.to_vec();
        let mut cur: Option<Vec<T>> = None;
        for (axis, ops) in self.axes.iter().enumerate() {
            if let Some(ops) = ops {
                let mat = pick(ops);
                let next = axis::apply_matrix(cur.as_deref().unwrap_or(data), outer, &ext, axis, mat);
                ext[axis] = mat.rows();
                cur = Some(next);
            }
        }
        cur.unwrap_or_else(|| data.to_vec())
    }

    /// Smoothing on the fine grid.
    pub fn lowpass(&self, data: &[T], outer: usize) -> Vec<T> {
        self.chain(data, outer, self.fine.extents(), |o| &o.lowpass)
    }

    pub fn lowpass_adjoint(&self, data: &[T], outer: usize) -> Vec<T> {
        self.chain(data, outer, self.fine.extents(), |o| &o.lowpass_t)
    }

    /// Smoothing fused with decimation, fine to coarse.
    pub fn reduce(&self, data: &[T], outer: usize) -> Vec<T> {
        self.chain(data, outer, self.fine.extents(), |o| &o.reduce)
    }

    pub fn reduce_adjoint(&self, data: &[T], outer: usize) -> Vec<T> {
        self.chain(data, outer, self.coarse.extents(), |o| &o.reduce_t)
    }

    /// Bandlimited interpolation, coarse to fine.
    pub fn upsample(&self, data: &[T], outer: usize) -> Vec<T> {
        self.chain(data, outer, self.coarse.extents(), |o| &o.upsample)
    }

    pub fn decimate(&self, data: &[T], outer: usize) -> Vec<T> {
        let mut ext = self.fine.extents().to_vec();
        let mut cur = data.to_vec();
        for (axis, ops) in self.axes.iter().enumerate() {
            if let Some(ops) = ops {
                cur = axis::decimate_axis(&cur, outer, &ext, axis, ops.factor);
                ext[axis] /= ops.factor;
            }
        }
        cur
    }

    pub fn decimate_adjoint(&self, data: &[T], outer: usize) -> Vec<T> {
        let mut ext = self.coarse.extents().to_vec();
        let mut cur = data.to_vec();
        for (axis, ops) in self.axes.iter().enumerate() {
            if let Some(ops) = ops {
                cur = axis::decimate_axis_adjoint(&cur, outer, &ext, axis, ops.factor);
                ext[axis] *= ops.factor;
            }
        }
        cur
    }

    /// Multiply-accumulates of one `lowpass` call per feature line.
    pub fn lowpass_macs(&self) -> u64 {
        self.chain_macs(self.fine.extents(), |o| &o.lowpass)
    }

    /// Multiply-accumulates of one `reduce` call per feature line.
    pub fn reduce_macs(&self) -> u64 {
        self.chain_macs(self.fine.extents(), |o| &o.reduce)
    }

    fn chain_macs(&self, start: &[usize], pick: impl Fn(&AxisOps<T>) -> &Matrix<T>) -> u64 {
        let mut ext = start.to_vec();
        let mut total = 0u64;
        for (axis, ops) in self.axes.iter().enumerate() {
            if let Some(ops) = ops {
                let mat = pick(ops);
                let others: usize = ext.iter().enumerate().filter(|&(a, _)| a != axis).map(|(_, &e)| e).product();
                total += (mat.rows() * mat.cols() * others) as u64;
                ext[axis] = mat.rows();
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_normalised_and_odd() {
        for spec in [SmoothingKernelSpec::windowed_sinc(), SmoothingKernelSpec::truncated_gaussian()] {
            for factor in [2, 3, 4] {
                let t = spec.taps(factor).unwrap();
                assert_eq!(t.len() % 2, 1);
                assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                // symmetric
                for i in 0..t.len() / 2 {
                    assert!((t[i] - t[t.len() - 1 - i]).abs() < 1e-15);
                }
            }
        }
        assert_eq!(SmoothingKernelSpec::windowed_sinc().taps(2).unwrap().len(), 9);
        assert_eq!(SmoothingKernelSpec::truncated_gaussian().taps(2).unwrap().len(), 5);
        assert!(SmoothingKernelSpec::Perfect.taps(2).is_none());
    }

    #[test]
    fn parse_roundtrip() {
        for s in ["perfect", "windowed-sinc:9", "gaussian:0.5:2"] {
            let k: SmoothingKernelSpec = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!("sinc".parse::<SmoothingKernelSpec>().unwrap(), SmoothingKernelSpec::windowed_sinc());
        assert!("windowed-sinc:4".parse::<SmoothingKernelSpec>().is_err());
        assert!("gaussian:-1".parse::<SmoothingKernelSpec>().is_err());
        assert!("box".parse::<SmoothingKernelSpec>().is_err());
    }

    #[test]
    fn perfect_upsample_of_reduce_is_lowpass() {
        let fine = GridSpec::line(12).unwrap();
        let coarse = GridSpec::line(4).unwrap();
        let r = Resampler::<f64>::new(&fine, &coarse, &SmoothingKernelSpec::Perfect).unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i * 37) % 11) as f64).collect();
        let a = r.upsample(&r.reduce(&x, 1), 1);
        let b = r.lowpass(&x, 1);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn mac_counts_match_instrumented_calls() {
        let fine = GridSpec::new(vec![8, 4]).unwrap();
        let coarse = GridSpec::new(vec![4, 2]).unwrap();
        let r = Resampler::<f64>::new(&fine, &coarse, &SmoothingKernelSpec::truncated_gaussian()).unwrap();
        let x = vec![1.0; 3 * 32];
        let (_, n) = crate::macs::instrument(|| r.reduce(&x, 3));
        assert_eq!(n, 3 * r.reduce_macs());
        let (_, n) = crate::macs::instrument(|| r.lowpass(&x, 3));
        assert_eq!(n, 3 * r.lowpass_macs());
    }
}
