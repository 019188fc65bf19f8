//! Action selection from a probability vector.

use rand::Rng;

use crate::{Error, Result};

/// Samples an index with probability `probs[i]`.
///
/// `probs` must be nonnegative and sum to 1 within 1e-5; all-zero input is an
/// error.
pub fn categorical_sample<R: Rng>(probs: &[f32], rng: &mut R) -> Result<usize> {
    let mut sum = 0.0f32;
    for &p in probs {
        if !(p >= 0.0) {
            return Err(Error::Contract(format!("negative or NaN probability {p}")));
        }
        sum += p;
    }
    if sum <= 0.0 {
        return Err(Error::Contract("all-zero probability vector".into()));
    }
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::Contract(format!("probabilities sum to {sum}, expected 1")));
    }
    let u: f32 = rng.gen::<f32>() * sum;
    let mut acc = 0.0f32;
    let mut last_nonzero = 0usize;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // Floating-point shortfall: fall back to the last index with mass.
    Ok(last_nonzero)
}

/// Deterministic argmax with lowest-index tie-break.
pub fn greedy_argmax(probs: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
