//! Discrete-Fourier routines on the periodic unit domain.
//!
//! Frequencies use the signed convention `k = j` for `j <= n/2` and
//! `k = j - n` otherwise. The band of a grid with extent `E` is
//! `|k| < E/2`, plus, for even `E`, the cosine half of the `±E/2` pair: on a
//! finer grid the two Nyquist coefficients are replaced by their average.
//! That keeps the projector real, idempotent and orthogonal, and makes its
//! range exactly the set of signals interpolated from the coarse grid.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::real::Real;

/// Signed frequency of DFT bin `j` on an `n`-point grid.
#[inline]
pub fn frequency(j: usize, n: usize) -> isize {
    if j <= n / 2 {
        j as isize
    } else {
        j as isize - n as isize
    }
}

fn bin(k: isize, n: usize) -> usize {
    k.rem_euclid(n as isize) as usize
}

/// In-place DFT of every line along `axis`. The inverse is normalised by
/// `1/n`, so forward then inverse is the identity.
pub fn fft_axis<T: Real>(data: &mut [Complex<T>], outer: usize, extents: &[usize], axis: usize, inverse: bool) {
    let n = extents[axis];
    let before: usize = extents[..axis].iter().product();
    let inner: usize = extents[axis + 1..].iter().product();
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let scale = if inverse { T::one() / T::of(n as f64) } else { T::one() };
    let mut line = vec![Complex::new(T::zero(), T::zero()); n];
    for l in 0..outer * before {
        for i in 0..inner {
            for k in 0..n {
                line[k] = data[(l * n + k) * inner + i];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[(l * n + k) * inner + i] = line[k] * scale;
            }
        }
    }
}

/// Projects one spectrum of an `n`-point line onto the band of extent `e`.
pub fn band_project_line<T: Real>(spec: &mut [Complex<T>], e: usize) {
    let n = spec.len();
    if e >= n {
        return;
    }
    let half = T::of(0.5);
    if e.is_multiple_of(2) {
        let (a, b) = (e / 2, n - e / 2);
        let avg = (spec[a] + spec[b]) * half;
        spec[a] = avg;
        spec[b] = avg;
    }
    for (j, c) in spec.iter_mut().enumerate() {
        let k = frequency(j, n).unsigned_abs();
        let keep = 2 * k < e || (e.is_multiple_of(2) && 2 * k == e);
        if !keep {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
}

/// Maps the spectrum of an `n`-point line to the spectrum of the
/// bandlimited interpolant sampled on `m` points.
pub fn resample_line_spectrum<T: Real>(spec: &[Complex<T>], m: usize) -> Vec<Complex<T>> {
    let n = spec.len();
    let mut src = spec.to_vec();
    if m < n {
        band_project_line(&mut src, m);
    }
    let scale = T::of(m as f64 / n as f64);
    let half = T::of(0.5);
    let mut out = vec![Complex::new(T::zero(), T::zero()); m];
    for (j, &c) in src.iter().enumerate() {
        if c.re == T::zero() && c.im == T::zero() {
            continue;
        }
        if n.is_multiple_of(2) && j == n / 2 && m > n {
            // The n-grid Nyquist bin stands for a cosine at +-n/2.
            let k = (n / 2) as isize;
            out[bin(k, m)] = out[bin(k, m)] + c * half * scale;
            out[bin(-k, m)] = out[bin(-k, m)] + c * half * scale;
        } else {
            let b = bin(frequency(j, n), m);
            out[b] = out[b] + c * scale;
        }
    }
    out
}

fn to_complex<T: Real>(data: &[T]) -> Vec<Complex<T>> {
    data.iter().map(|&v| Complex::new(v, T::zero())).collect()
}

/// Orthogonal projection of a real array onto the band of `target` extents.
pub fn band_project<T: Real>(data: &[T], outer: usize, extents: &[usize], target: &[usize]) -> Vec<T> {
    let mut buf = to_complex(data);
    for axis in 0..extents.len() {
        if target[axis] >= extents[axis] {
            continue;
        }
        fft_axis(&mut buf, outer, extents, axis, false);
        let n = extents[axis];
        let before: usize = extents[..axis].iter().product();
        let inner: usize = extents[axis + 1..].iter().product();
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        for l in 0..outer * before {
            for i in 0..inner {
                for k in 0..n {
                    line[k] = buf[(l * n + k) * inner + i];
                }
                band_project_line(&mut line, target[axis]);
                for k in 0..n {
                    buf[(l * n + k) * inner + i] = line[k];
                }
            }
        }
        fft_axis(&mut buf, outer, extents, axis, true);
    }
    buf.into_iter().map(|c| c.re).collect()
}

/// Bandlimited (Whittaker-Shannon on the torus) resampling between any two
/// grids of the same dimension. Downward resampling first projects onto the
/// target band.
pub fn resample<T: Real>(data: &[T], outer: usize, extents: &[usize], target: &[usize]) -> Vec<T> {
    let mut cur = to_complex(data);
    let mut ext = extents.to_vec();
    for axis in 0..ext.len() {
        let (n, m) = (ext[axis], target[axis]);
        if n == m {
            continue;
        }
        fft_axis(&mut cur, outer, &ext, axis, false);
        let before: usize = ext[..axis].iter().product();
        let inner: usize = ext[axis + 1..].iter().product();
        let mut next_ext = ext.clone();
        next_ext[axis] = m;
        let mut next = vec![Complex::new(T::zero(), T::zero()); outer * before * m * inner];
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        for l in 0..outer * before {
            for i in 0..inner {
                for k in 0..n {
                    line[k] = cur[(l * n + k) * inner + i];
                }
                let spec = resample_line_spectrum(&line, m);
                for k in 0..m {
                    next[(l * m + k) * inner + i] = spec[k];
                }
            }
        }
        fft_axis(&mut next, outer, &next_ext, axis, true);
        cur = next;
        ext = next_ext;
    }
    cur.into_iter().map(|c| c.re).collect()
}
