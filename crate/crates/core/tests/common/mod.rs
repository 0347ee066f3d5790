#![allow(dead_code)]

use arrn::arrn::{ArrnModel, ModelConfig};
use arrn::nn::{FeatureMap, HasParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const GRAD_TOL: f64 = 1e-4;

/// Five-point central difference with step `H`.
pub fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    let (p1, m1, p2, m2) = (f(H), f(-H), f(2.0 * H), f(-2.0 * H));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * H)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Below this norm a gradient counts as identically zero; central
/// differences of a zero gradient only carry rounding noise.
pub const ZERO_FLOOR: f64 = 1e-8;

/// `||a - b|| / max(||a||, ||b||, ZERO_FLOOR)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / dot(a, a).sqrt().max(dot(b, b).sqrt()).max(ZERO_FLOOR)
}

/// Central differences of `loss` with respect to every trainable parameter
/// entry, in `collect_parameters_mut` order.
pub fn numeric_param_grads<M: HasParameters<f64>>(model: &mut M, loss: impl Fn(&M) -> f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let count = {
        let mut ps = Vec::new();
        model.collect_parameters_mut(&mut ps);
        ps.len()
    };
    for p in 0..count {
        let (len, trainable) = {
            let mut ps = Vec::new();
            model.collect_parameters_mut(&mut ps);
            (ps[p].len(), ps[p].trainable())
        };
        if !trainable {
            continue;
        }
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = nudge(model, p, i, 0.0);
            *gi = central(|d| {
                set(model, p, i, orig + d);
                loss(model)
            });
            set(model, p, i, orig);
        }
        out.push(g);
    }
    out
}

fn nudge<M: HasParameters<f64>>(model: &mut M, p: usize, i: usize, by: f64) -> f64 {
    let mut ps = Vec::new();
    model.collect_parameters_mut(&mut ps);
    let orig = ps[p].value[i];
    ps[p].value[i] += by;
    orig
}

fn set<M: HasParameters<f64>>(model: &mut M, p: usize, i: usize, v: f64) {
    let mut ps = Vec::new();
    model.collect_parameters_mut(&mut ps);
    ps[p].value[i] = v;
}

pub fn analytic_param_grads<M: HasParameters<f64>>(model: &mut M) -> Vec<Vec<f64>> {
    let mut ps = Vec::new();
    model.collect_parameters_mut(&mut ps);
    ps.into_iter().filter(|p| p.trainable()).map(|p| p.grad.clone()).collect()
}

pub fn zero_grads<M: HasParameters<f64>>(model: &mut M) {
    let mut ps = Vec::new();
    model.collect_parameters_mut(&mut ps);
    ps.into_iter().for_each(|p| p.zero_grad());
}

/// Central differences of `loss` with respect to the input values.
pub fn numeric_input_grad(x: &FeatureMap<f64>, loss: impl Fn(&FeatureMap<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.values().len())
        .map(|i| {
            let orig = probe.values()[i];
            let g = central(|d| {
                probe.values_mut()[i] = orig + d;
                loss(&probe)
            });
            probe.values_mut()[i] = orig;
            g
        })
        .collect()
}

/// Every trainable parameter set to random values, including biases and
/// batch-norm affine terms, so no gradient path is trivially zero.
pub fn randomize<M: HasParameters<f64>>(model: &mut M, rng: &mut impl Rng) {
    let mut ps = Vec::new();
    model.collect_parameters_mut(&mut ps);
    for p in ps {
        if p.trainable() {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
    }
}

/// Adds `U(-scale, scale)` to every trainable parameter, keeping the
/// initialisation's conditioning while making biases and affine terms
/// nonzero.
pub fn perturb<M: HasParameters<f64>>(model: &mut M, scale: f64, rng: &mut impl Rng) {
    let mut ps = Vec::new();
    model.collect_parameters_mut(&mut ps);
    for p in ps {
        if p.trainable() {
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-scale..scale));
        }
    }
}

/// Random model with nonzero biases, batch-norm affine terms and running
/// statistics, so that no path is trivially zero.
pub fn random_model(config: ModelConfig, seed: u64) -> ArrnModel<f64> {
    let mut r = rng(seed);
    let mut model = ArrnModel::new(config, &mut r).unwrap();
    let mut params = Vec::new();
    model.collect_parameters_mut(&mut params);
    for p in params {
        if p.trainable() {
            p.value.iter_mut().for_each(|v| *v += 0.2 * (r.random::<f64>() - 0.5));
        } else {
            // running variance stays positive
            p.value.iter_mut().for_each(|v| *v += 0.3 * r.random::<f64>());
        }
    }
    model
}
