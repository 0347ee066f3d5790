//! Synthetic multiscale classification data.
//!
//! Each class owns an amplitude per frequency band, where band `n` holds the
//! frequencies resolved on ladder level `n` but not on level `n + 1` (the
//! last band is everything the coarsest level resolves). A sample spreads
//! its band amplitude evenly over the band's frequencies with random phases,
//! so its band energies are the squared class amplitudes up to jitter and
//! noise. Downsampling to level `n` deletes the bands finer than `n`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::arrn::resample_map;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::FeatureMap;
use crate::real::Real;
use crate::signal::{arsg, fourier, DiscreteSignal, GridSpec, ResolutionLadder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub ladder: ResolutionLadder,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of additive white noise per sample site.
    pub noise: f64,
    /// Relative standard deviation of per-sample band amplitudes.
    pub jitter: f64,
    /// Band amplitudes are drawn from `[min, max]`.
    pub amplitude: (f64, f64),
    /// Distinct amplitudes in the coarsest band (capped at `classes`); fewer
    /// than `classes` makes low-resolution inputs only partially informative.
    pub coarse_levels: usize,
    pub seed: u64,
    /// Explicit `classes x bands` amplitudes, overriding the random draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signatures: Option<Vec<Vec<f64>>>,
}

impl SynthDatasetSpec {
    /// 1-D ladder 64, 32, 16 with four classes and 3072 samples.
    pub fn desk_1d(seed: u64) -> Self {
        Self {
            ladder: "64,32,16".parse().expect("valid ladder"),
            classes: 4,
            train_per_class: 512,
            test_per_class: 256,
            noise: 0.05,
            jitter: 0.1,
            amplitude: (0.3, 1.0),
            coarse_levels: 4,
            seed,
            signatures: None,
        }
    }

    pub fn bands(&self) -> usize {
        self.ladder.len()
    }

    pub fn grid(&self) -> &GridSpec {
        self.ladder.level(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.classes < 2 || self.train_per_class == 0 || self.test_per_class == 0 {
            return bad("need at least two classes and samples in both splits");
        }
        if self.coarse_levels == 0 {
            return bad("coarse levels must be positive");
        }
        if !(self.noise >= 0.0 && self.jitter >= 0.0 && self.amplitude.0 >= 0.0 && self.amplitude.0 <= self.amplitude.1) {
            return bad("noise, jitter and amplitudes must be non-negative with min <= max");
        }
        if let Some(sig) = &self.signatures {
            if sig.len() != self.classes || sig.iter().any(|s| s.len() != self.bands()) {
                return bad("signatures must be classes x bands");
            }
        }
        Ok(())
    }

    /// `classes x bands` amplitudes.
    pub fn signature_table(&self) -> Vec<Vec<f64>> {
        if let Some(sig) = &self.signatures {
            return sig.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5167_4e41_5455_5245);
        let (lo, hi) = self.amplitude;
        let spaced = |count: usize, i: usize| if count == 1 { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 };
        let levels = self.coarse_levels.min(self.classes);
        let mut table = vec![vec![0.0; self.bands()]; self.classes];
        for b in 0..self.bands() {
            let mut perm: Vec<usize> = (0..self.classes).collect();
            perm.shuffle(&mut rng);
            let coarse = b == self.bands() - 1;
            for (c, row) in table.iter_mut().enumerate() {
                row[b] = if coarse {
                    spaced(levels, perm[c] % levels)
                } else {
                    spaced(self.classes, perm[c])
                };
            }
        }
        table
    }
}

/// Band of signed frequency vector `k` under `ladder`: the coarsest level
/// whose band strictly contains it. `None` for the constant term.
pub fn band_of(ladder: &ResolutionLadder, k: &[isize]) -> Option<usize> {
    if k.iter().all(|&v| v == 0) {
        return None;
    }
    (0..ladder.len()).rev().find(|&n| {
        ladder.level(n).extents().iter().zip(k).all(|(&e, &v)| 2 * v.unsigned_abs() < e)
    })
}

/// Whether `k` sits on the Nyquist boundary of some level, where the band
/// split is ambiguous.
fn on_boundary(ladder: &ResolutionLadder, k: &[isize]) -> bool {
    ladder.levels().iter().any(|g| g.extents().iter().zip(k).any(|(&e, &v)| e % 2 == 0 && 2 * v.unsigned_abs() == e))
}

/// Signed frequency vectors of a grid, in row-major bin order.
fn frequencies(grid: &GridSpec) -> Vec<Vec<isize>> {
    let ext = grid.extents();
    (0..grid.len())
        .map(|mut p| {
            let mut k = vec![0isize; ext.len()];
            for a in (0..ext.len()).rev() {
                k[a] = fourier::frequency(p % ext[a], ext[a]);
                p /= ext[a];
            }
            k
        })
        .collect()
}

fn fft_all(buf: &mut [Complex<f64>], outer: usize, ext: &[usize], inverse: bool) {
    for axis in 0..ext.len() {
        fourier::fft_axis(buf, outer, ext, axis, inverse);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub inputs: FeatureMap<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Split<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (FeatureMap<T>, Vec<usize>) {
        let per = self.inputs.features() * self.inputs.spatial();
        let src = self.inputs.values();
        let mut values = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            values.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        let map = FeatureMap::new(indices.len(), self.inputs.features(), self.inputs.grid().clone(), values)
            .expect("gathered shape");
        (map, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Perfect-kernel resampling of every sample onto `grid`.
    pub fn resampled(&self, grid: &GridSpec) -> Self {
        Self { inputs: resample_map(&self.inputs, grid), labels: self.labels.clone() }
    }

    pub fn cast<U: Real>(&self) -> Split<U> {
        Split { inputs: self.inputs.cast(), labels: self.labels.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub spec: SynthDatasetSpec,
    pub train: Split<T>,
    pub test: Split<T>,
}

/// Pure function of the spec (including its seed).
pub fn generate_dataset<T: Real>(spec: &SynthDatasetSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let table = spec.signature_table();
    let grid = spec.grid().clone();
    let n = grid.len();
    let freqs = frequencies(&grid);
    let bands: Vec<Option<usize>> =
        freqs.iter().map(|k| if on_boundary(&spec.ladder, k) { None } else { band_of(&spec.ladder, k) }).collect();
    // One representative per conjugate pair: the lexicographically positive one.
    let positive: Vec<usize> =
        (0..n).filter(|&p| bands[p].is_some() && freqs[p].iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)).collect();
    let mut counts = vec![0usize; spec.bands()];
    for &p in &positive {
        counts[bands[p].expect("filtered")] += 1;
    }
    let index_of = |k: &[isize]| -> usize {
        let ext = grid.extents();
        k.iter().zip(ext).fold(0, |acc, (&v, &e)| acc * e + v.rem_euclid(e as isize) as usize)
    };
    let mirror: Vec<usize> = positive.iter().map(|&p| index_of(&freqs[p].iter().map(|v| -v).collect::<Vec<_>>())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let sample = |class: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let amps: Vec<f64> = table[class]
            .iter()
            .enumerate()
            .map(|(b, &a)| {
                let a = (a * (1.0 + spec.jitter * gauss.sample(rng))).max(0.0);
                // energy a^2 spread over the band's cosines, each of mean square m^2/2
                if counts[b] == 0 { 0.0 } else { a * (2.0 / counts[b] as f64).sqrt() }
            })
            .collect();
        let mut spec_buf = vec![Complex::new(0.0, 0.0); n];
        for (&p, &q) in positive.iter().zip(&mirror) {
            let m = amps[bands[p].expect("filtered")];
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let c = Complex::from_polar(0.5 * m * n as f64, phase);
            spec_buf[p] = c;
            spec_buf[q] = c.conj();
        }
        fft_all(&mut spec_buf, 1, grid.extents(), true);
        spec_buf.iter().map(|c| c.re + spec.noise * gauss.sample(rng)).collect()
    };
    let make = |per_class: usize, rng: &mut ChaCha8Rng| -> Split<T> {
        let mut values = Vec::with_capacity(per_class * spec.classes * n);
        let mut labels = Vec::with_capacity(per_class * spec.classes);
        for class in 0..spec.classes {
            for _ in 0..per_class {
                values.extend(sample(class, rng).into_iter().map(T::of));
                labels.push(class);
            }
        }
        let inputs = FeatureMap::new(labels.len(), 1, grid.clone(), values).expect("generated shape");
        Split { inputs, labels }
    };
    let train = make(spec.train_per_class, &mut rng);
    let test = make(spec.test_per_class, &mut rng);
    Ok(Dataset { spec: spec.clone(), train, test })
}

/// Per-band energy (mean square) of every sample, summed over channels.
/// Frequencies are binned by `band_of` on the sample's own grid.
pub fn band_energies<T: Real>(split: &Split<T>, ladder: &ResolutionLadder) -> Vec<Vec<f64>> {
    let x = &split.inputs;
    let grid = x.grid();
    let n = grid.len();
    let bands: Vec<Option<usize>> = frequencies(grid).iter().map(|k| band_of(ladder, k)).collect();
    let mut buf: Vec<Complex<f64>> = x.values().iter().map(|v| Complex::new(v.as_f64(), 0.0)).collect();
    fft_all(&mut buf, x.lines(), grid.extents(), false);
    let norm = (n * n) as f64;
    (0..x.batch())
        .map(|b| {
            let mut e = vec![0.0; ladder.len()];
            for c in 0..x.features() {
                let line = &buf[(b * x.features() + c) * n..(b * x.features() + c + 1) * n];
                for (v, band) in line.iter().zip(&bands) {
                    if let Some(band) = band {
                        e[*band] += v.norm_sqr() / norm;
                    }
                }
            }
            e
        })
        .collect()
}

/// Nearest-centroid classifier on log band energies.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergyOracle {
    ladder: ResolutionLadder,
    centroids: Vec<Vec<f64>>,
}

fn log_features(e: &[f64]) -> Vec<f64> {
    e.iter().map(|v| (v + 1e-12).ln()).collect()
}

impl BandEnergyOracle {
    pub fn fit<T: Real>(split: &Split<T>, ladder: &ResolutionLadder, classes: usize) -> Self {
        let mut sums = vec![vec![0.0; ladder.len()]; classes];
        let mut counts = vec![0usize; classes];
        for (e, &y) in band_energies(split, ladder).iter().zip(&split.labels) {
            for (s, f) in sums[y].iter_mut().zip(log_features(e)) {
                *s += f;
            }
            counts[y] += 1;
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
        }
        Self { ladder: ladder.clone(), centroids: sums }
    }

    pub fn predict<T: Real>(&self, split: &Split<T>) -> Vec<usize> {
        band_energies(split, &self.ladder)
            .iter()
            .map(|e| {
                let f = log_features(e);
                let dist = |c: &Vec<f64>| c.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                (0..self.centroids.len())
                    .min_by(|&a, &b| dist(&self.centroids[a]).total_cmp(&dist(&self.centroids[b])))
                    .expect("at least one class")
            })
            .collect()
    }

    pub fn accuracy<T: Real>(&self, split: &Split<T>) -> f64 {
        let hits = self.predict(split).iter().zip(&split.labels).filter(|(p, y)| p == y).count();
        hits as f64 / split.len().max(1) as f64
    }
}

pub const SPEC_FILE: &str = "dataset.toml";

/// Writes `dataset.toml`, `{train,test}.arsg` (samples stacked as features)
/// and `{train,test}_labels.txt`.
pub fn write_dataset<T: Real>(dir: &Path, data: &Dataset<T>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let spec = toml::to_string(&data.spec).map_err(|e| Error::Format(format!("dataset spec: {e}")))?;
    write_atomic(&dir.join(SPEC_FILE), spec.as_bytes())?;
    for (name, split) in [("train", &data.train), ("test", &data.test)] {
        let x = &split.inputs;
        let signal = DiscreteSignal::new(x.grid().clone(), x.lines(), x.values().to_vec())?;
        write_atomic(&dir.join(format!("{name}.arsg")), &arsg::encode(&signal))?;
        let labels: String = split.labels.iter().map(|l| format!("{l}\n")).collect();
        write_atomic(&dir.join(format!("{name}_labels.txt")), labels.as_bytes())?;
    }
    Ok(())
}

pub fn read_dataset<T: Real>(dir: &Path) -> Result<Dataset<T>> {
    let text = std::fs::read_to_string(dir.join(SPEC_FILE))?;
    let spec: SynthDatasetSpec = toml::from_str(&text).map_err(|e| Error::Format(format!("dataset spec: {e}")))?;
    let read_split = |name: &str| -> Result<Split<T>> {
        let signal: DiscreteSignal<T> = arsg::decode(&std::fs::read(dir.join(format!("{name}.arsg")))?)?;
        let labels = std::fs::read_to_string(dir.join(format!("{name}_labels.txt")))?
            .lines()
            .map(|l| l.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad label `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        if labels.is_empty() || !signal.features().is_multiple_of(labels.len()) {
            return Err(Error::Format(format!("{name}: {} lines for {} labels", signal.features(), labels.len())));
        }
        let channels = signal.features() / labels.len();
        let grid = signal.grid().clone();
        let inputs = FeatureMap::new(labels.len(), channels, grid, signal.into_values())?;
        Ok(Split { inputs, labels })
    };
    Ok(Dataset { train: read_split("train")?, test: read_split("test")?, spec })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_follow_the_ladder() {
        let ladder: ResolutionLadder = "64,32,16".parse().unwrap();
        assert_eq!(band_of(&ladder, &[0]), None);
        assert_eq!(band_of(&ladder, &[3]), Some(2));
        assert_eq!(band_of(&ladder, &[-9]), Some(1));
        assert_eq!(band_of(&ladder, &[20]), Some(0));
        assert!(on_boundary(&ladder, &[8]) && on_boundary(&ladder, &[-16]) && !on_boundary(&ladder, &[9]));
    }

    #[test]
    fn coarse_band_has_fewer_levels() {
        let spec = SynthDatasetSpec { coarse_levels: 2, ..SynthDatasetSpec::desk_1d(1) };
        let t = spec.signature_table();
        let mut coarse: Vec<u64> = t.iter().map(|r| r[2].to_bits()).collect();
        coarse.sort();
        coarse.dedup();
        assert_eq!(coarse.len(), 2);
        let mut fine: Vec<u64> = t.iter().map(|r| r[0].to_bits()).collect();
        fine.sort();
        fine.dedup();
        assert_eq!(fine.len(), 4);
    }
}
