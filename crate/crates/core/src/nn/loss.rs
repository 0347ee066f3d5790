use crate::real::Real;

/// Mean softmax cross-entropy over a batch of `classes`-wide logit rows, and
/// its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], classes: usize, labels: &[usize]) -> (f64, Vec<T>) {
    assert_eq!(logits.len(), classes * labels.len(), "logit rows vs labels");
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); logits.len()];
    for ((row, g), &y) in logits.chunks(classes).zip(grad.chunks_mut(classes)).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - row[y].as_f64();
        for (k, (gk, e)) in g.iter_mut().zip(&exps).enumerate() {
            let target = if k == y { 1.0 } else { 0.0 };
            *gk = T::of((e / z - target) / n);
        }
    }
    (loss / n, grad)
}

/// Index of the largest logit per row (first on ties).
pub fn predictions<T: Real>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for k in 1..classes {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose arg-max matches the label.
pub fn accuracy<T: Real>(logits: &[T], classes: usize, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions(logits, classes).iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64; 4], 4, &[2]);
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert_eq!(grad, vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn accuracy_counts_argmax() {
        let logits = [1.0f64, 2.0, 3.0, 0.0];
        assert_eq!(accuracy(&logits, 2, &[1, 1]), 0.5);
    }
}
