//! Masked policy math: renormalized softmax over available actions, the
//! clipped-surrogate objective, entropy bonus, and their exact logit
//! gradients. Generic over the scalar so the whole loss path can be
//! finite-difference checked in `f64`.

use crate::nn::{forward_layers, Cache, LayerSpec, NetworkParams, NetworkSpec, Real, Tensor};
use crate::obs::ReducedObservation;
use crate::{Error, Result};

/// Probabilities over actions with masked entries exactly zero and the rest
/// renormalized (softmax restricted to available logits).
pub fn masked_probs<S: Real>(logits: &[S], mask: &[bool]) -> Vec<S> {
    debug_assert_eq!(logits.len(), mask.len());
    let mut max = S::neg_infinity();
    for (z, &m) in logits.iter().zip(mask) {
        if m && *z > max {
            max = *z;
        }
    }
    let mut sum = S::zero();
    let mut out = vec![S::zero(); logits.len()];
    for i in 0..logits.len() {
        if mask[i] {
            let e = (logits[i] - max).exp();
            out[i] = e;
            sum = sum + e;
        }
    }
    for v in out.iter_mut() {
        *v = *v / sum;
    }
    out
}

/// Entropy of a masked distribution, counting only entries with mass.
pub fn masked_entropy<S: Real>(probs: &[S]) -> S {
    let mut h = S::zero();
    for &p in probs {
        if p > S::zero() {
            h = h - p * p.ln();
        }
    }
    h
}

/// Per-sample actor objective pieces and the gradient of the actor *loss*
/// (negated objective) w.r.t. the raw logits.
#[derive(Debug, Clone)]
pub struct ActorSampleLoss<S: Real> {
    pub clip_objective: S,
    pub entropy: S,
    pub ratio: S,
    pub d_logits: Vec<S>,
}

/// Clipped surrogate `min(r*A, clip(r, 1-eps, 1+eps)*A)` plus entropy bonus
/// `c2 * H`, evaluated for one stored transition. Masked logits get zero
/// probability and zero gradient.
pub fn actor_sample_loss<S: Real>(
    logits: &[S],
    mask: &[bool],
    action: usize,
    old_log_prob: S,
    advantage: S,
    epsilon: S,
    c2: S,
) -> Result<ActorSampleLoss<S>> {
    if !mask[action] {
        return Err(Error::Internal("stored action is masked in replayed state".into()));
    }
    let probs = masked_probs(logits, mask);
    let log_prob = probs[action].ln();
    let ratio = (log_prob - old_log_prob).exp();
    let lo = S::one() - epsilon;
    let hi = S::one() + epsilon;
    let clipped_ratio = ratio.max(lo).min(hi);
    let surr = ratio * advantage;
    let surr_clipped = clipped_ratio * advantage;
    let clip_objective = surr.min(surr_clipped);
    // Gradient flows only while the unclipped branch is active.
    let clip_saturated = (advantage > S::zero() && ratio > hi) || (advantage < S::zero() && ratio < lo);
    let g = if clip_saturated { S::zero() } else { ratio * advantage };

    let entropy = masked_entropy(&probs);
    let mut d_logits = vec![S::zero(); logits.len()];
    for i in 0..logits.len() {
        if !mask[i] {
            continue;
        }
        let p = probs[i];
        let indicator = if i == action { S::one() } else { S::zero() };
        // d log pi(a) / dz_i = 1{i=a} - p_i over the available subset.
        let d_logp = indicator - p;
        // dH/dz_i = -p_i (ln p_i + H).
        let d_ent = -p * (p.ln() + entropy);
        // Loss is the negated objective.
        d_logits[i] = -(g * d_logp + c2 * d_ent);
    }
    Ok(ActorSampleLoss { clip_objective, entropy, ratio, d_logits })
}

/// Squared-error value loss and its gradient w.r.t. the value output.
pub fn critic_sample_loss<S: Real>(value: S, target: S) -> (S, S) {
    let diff = value - target;
    (diff * diff, (S::one() + S::one()) * diff)
}

/// Network input for one agent decision.
pub fn obs_to_input(obs: &ReducedObservation) -> Result<Tensor> {
    Tensor::new(vec![obs.n_maps, obs.n, obs.n], obs.maps.clone())
}

/// Number of layers to run to obtain raw logits (everything except a
/// trailing softmax).
pub fn logits_layers(spec: &NetworkSpec) -> usize {
    match spec.layers.last() {
        Some(LayerSpec::Softmax) => spec.layers.len() - 1,
        _ => spec.layers.len(),
    }
}

/// Raw logits (pre-softmax) plus the activation cache for backprop.
pub fn forward_logits<S: Real>(
    spec: &NetworkSpec,
    params: &NetworkParams<S>,
    input: &Tensor<S>,
    embedding: Option<&[S]>,
) -> Result<(Vec<S>, Cache<S>)> {
    let (out, cache) = forward_layers(spec, params, input, embedding, logits_layers(spec))?;
    Ok((out.into_data(), cache))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_probs_zero_out_unavailable_actions() {
        let logits = [1.0f32, 2.0, 3.0, 4.0];
        let mask = [true, false, true, false];
        let p = masked_probs(&logits, &mask);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[3], 0.0);
        let sum: f32 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(p[2] > p[0]);
    }

    #[test]
    fn fresh_policy_has_unit_ratio_and_objective_equals_advantage() {
        // Before any update the behavior and current policies coincide, so
        // r = 1, the clip is inactive, and L^CLIP = A.
        let logits = [0.3f64, -0.2, 0.9];
        let mask = [true; 3];
        let probs = masked_probs(&logits, &mask);
        let old_logp = probs[2].ln();
        let adv = 1.7;
        let out = actor_sample_loss(&logits, &mask, 2, old_logp, adv, 0.2, 0.0).unwrap();
        assert!((out.ratio - 1.0).abs() < 1e-12);
        assert!((out.clip_objective - adv).abs() < 1e-12);
    }

    #[test]
    fn saturated_clip_kills_the_gradient() {
        // A > 0 with ratio = 1.5 > 1 + eps: objective uses 1.2 * A and the
        // sample contributes zero policy gradient.
        let logits = [0.0f64, 0.0];
        let mask = [true, true];
        let probs = masked_probs(&logits, &mask);
        // Make old log-prob small enough that ratio = p/exp(old) = 1.5.
        let old_logp = (probs[0] / 1.5).ln();
        let adv = 2.0;
        let out = actor_sample_loss(&logits, &mask, 0, old_logp, adv, 0.2, 0.0).unwrap();
        assert!((out.ratio - 1.5).abs() < 1e-12);
        assert!((out.clip_objective - 1.2 * adv).abs() < 1e-12);
        for d in &out.d_logits {
            assert_eq!(*d, 0.0);
        }
    }

    #[test]
    fn entropy_bounds_hold() {
        let logits = vec![0.0f32; 11];
        let mask = vec![true; 11];
        let h = masked_entropy(&masked_probs(&logits, &mask));
        assert!((h - (11.0f32).ln()).abs() < 1e-5);
        let mut one_hot = vec![-50.0f32; 11];
        one_hot[4] = 50.0;
        let h0 = masked_entropy(&masked_probs(&one_hot, &mask));
        assert!(h0 >= 0.0 && h0 < 1e-3);
    }

    #[test]
    fn critic_loss_is_squared_error() {
        let (l, d) = critic_sample_loss(3.0f32, 1.0);
        assert_eq!(l, 4.0);
        assert_eq!(d, 4.0);
    }
}
