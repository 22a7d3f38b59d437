use rand::Rng;

use super::{NnError, Real, Tensor};

/// Lower clamp on probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted) of one row.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Mean negative log-likelihood of `labels` under `probs` (`[B, K]`), and
/// the gradient of that mean with respect to the pre-softmax logits,
/// `(probs - onehot) / B`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), NnError> {
    let [b, k] = match probs.shape() {
        [b, k] => [*b, *k],
        sh => return Err(NnError::Shape(format!("probs must be [B, K], got {sh:?}"))),
    };
    if labels.len() != b {
        return Err(NnError::Shape(format!("{} labels for batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::Label(bad, k));
    }
    let scale = T::one() / T::of(b as f64);
    let clamp = T::of(LOG_CLAMP);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (row, (&label, g)) in probs.data.chunks_exact(k).zip(labels.iter().zip(grad.data.chunks_exact_mut(k))) {
        loss -= row[label].max(clamp).ln();
        g[label] -= T::one();
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    assert!((0.0..1.0).contains(&rate), "drop rate must be in [0, 1)");
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect()
}

/// Applies dropout; in eval mode the input is returned unchanged with an all-ones mask.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> (Tensor<T>, Vec<T>) {
    match mode {
        DropoutMode::Eval => (input.clone(), vec![T::one(); input.len()]),
        DropoutMode::Train => {
            let mask = dropout_mask(input.len(), rate, rng);
            let mut out = input.clone();
            out.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= *m);
            (out, mask)
        }
    }
}
