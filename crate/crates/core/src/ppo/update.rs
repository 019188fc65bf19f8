//! The PPO update: epochs of shuffled minibatches maximizing
//! `L_CLIP - c1 * L_VF + c2 * S` via Adam on the actor and critic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::buffer::{Advantages, RolloutBuffer};
use super::policy::{actor_sample_loss, critic_sample_loss, forward_logits, logits_layers};
use crate::nn::{
    adam_step, backward_layers, forward, grad_l2_norm, scale_grads, AdamState, Gradients,
    NetworkParams, NetworkSpec,
};
use crate::{Error, Result};

/// Fixed accumulation chunk count: parallel speedup without making results
/// depend on the thread count.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct UpdateConfig {
    pub epsilon: f32,
    pub c1: f32,
    pub c2: f32,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub normalize_advantages: bool,
    pub grad_clip: Option<f32>,
}

/// Mean loss terms over the update, for the metrics log.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub loss_clip: f64,
    pub loss_vf: f64,
    pub entropy: f64,
    pub minibatches: usize,
}

struct ChunkGrads {
    actor: Gradients,
    critic: Gradients,
    clip_sum: f64,
    vf_sum: f64,
    entropy_sum: f64,
}

#[allow(clippy::too_many_arguments)]
fn accumulate_chunk(
    actor_spec: &NetworkSpec,
    actor: &NetworkParams,
    critic_spec: &NetworkSpec,
    critic: &NetworkParams,
    buffer: &RolloutBuffer,
    adv: &[f32],
    vtarg: &[f32],
    cfg: &UpdateConfig,
    indices: &[usize],
) -> Result<ChunkGrads> {
    let mut out = ChunkGrads {
        actor: Gradients::zeros_like(actor, &actor_spec.input_shape),
        critic: Gradients::zeros_like(critic, &critic_spec.input_shape),
        clip_sum: 0.0,
        vf_sum: 0.0,
        entropy_sum: 0.0,
    };
    for &i in indices {
        let input = &buffer.inputs[i];
        let emb = actor_spec.embedding_len().map(|_| buffer.embeddings[i].as_slice());

        let (logits, cache) = forward_logits(actor_spec, actor, input, emb)?;
        let sample = actor_sample_loss(
            &logits,
            &buffer.masks[i],
            buffer.actions[i],
            buffer.log_probs[i],
            adv[i],
            cfg.epsilon,
            cfg.c2,
        )?;
        let upstream = crate::nn::Tensor::from_flat(sample.d_logits);
        let g = backward_layers(actor_spec, actor, &cache, &upstream, logits_layers(actor_spec))?;
        out.actor.accumulate(&g);
        out.clip_sum += sample.clip_objective as f64;
        out.entropy_sum += sample.entropy as f64;

        let (value_out, value_cache) = forward(critic_spec, critic, input, emb)?;
        let (vf_loss, dv) = critic_sample_loss(value_out.data()[0], vtarg[i]);
        let upstream = crate::nn::Tensor::from_flat(vec![cfg.c1 * dv]);
        let g = backward_layers(critic_spec, critic, &value_cache, &upstream, critic_spec.layers.len())?;
        out.critic.accumulate(&g);
        out.vf_sum += vf_loss as f64;
    }
    Ok(out)
}

/// Runs `cfg.epochs` passes of shuffled minibatches over the buffer,
/// stepping both networks with Adam after each minibatch. Aborts (without
/// touching parameters) if the loss goes non-finite.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    actor_spec: &NetworkSpec,
    actor: &mut NetworkParams,
    actor_adam: &mut AdamState,
    critic_spec: &NetworkSpec,
    critic: &mut NetworkParams,
    critic_adam: &mut AdamState,
    buffer: &RolloutBuffer,
    advantages: &Advantages,
    cfg: &UpdateConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    buffer.validate()?;
    if cfg.minibatch_size == 0 {
        return Err(Error::Config("minibatch size must be positive".into()));
    }
    let n = buffer.len();
    let mut adv = advantages.adv.clone();
    if cfg.normalize_advantages {
        let mean: f32 = adv.iter().sum::<f32>() / n as f32;
        let var: f32 = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f32>() / n as f32;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }
    }

    let mut stats = UpdateStats::default();
    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        // Fisher-Yates with the caller's deterministic stream.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for batch in indices.chunks(cfg.minibatch_size) {
            let chunk_size = batch.len().div_ceil(GRAD_CHUNKS);
            let chunks: Vec<ChunkGrads> = batch
                .par_chunks(chunk_size)
                .map(|ix| {
                    accumulate_chunk(
                        actor_spec, actor, critic_spec, critic, buffer, &adv, &advantages.vtarg,
                        cfg, ix,
                    )
                })
                .collect::<Result<_>>()?;

            let mut actor_grads = Gradients::zeros_like(actor, &actor_spec.input_shape);
            let mut critic_grads = Gradients::zeros_like(critic, &critic_spec.input_shape);
            let (mut clip_sum, mut vf_sum, mut ent_sum) = (0.0f64, 0.0f64, 0.0f64);
            for c in &chunks {
                actor_grads.accumulate(&c.actor);
                critic_grads.accumulate(&c.critic);
                clip_sum += c.clip_sum;
                vf_sum += c.vf_sum;
                ent_sum += c.entropy_sum;
            }
            let inv = 1.0 / batch.len() as f32;
            scale_grads(&mut actor_grads, inv);
            scale_grads(&mut critic_grads, inv);

            if !(clip_sum.is_finite() && vf_sum.is_finite() && ent_sum.is_finite()) {
                return Err(Error::TrainAbort("non-finite loss in ppo update".into()));
            }
            if let Some(max_norm) = cfg.grad_clip {
                for grads in [&mut actor_grads, &mut critic_grads] {
                    let norm = grad_l2_norm(grads);
                    if norm > max_norm {
                        scale_grads(grads, max_norm / norm);
                    }
                }
            }
            adam_step(actor, &actor_grads, actor_adam)?;
            adam_step(critic, &critic_grads, critic_adam)?;

            stats.loss_clip += clip_sum / batch.len() as f64;
            stats.loss_vf += vf_sum / batch.len() as f64;
            stats.entropy += ent_sum / batch.len() as f64;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        stats.loss_clip /= stats.minibatches as f64;
        stats.loss_vf /= stats.minibatches as f64;
        stats.entropy /= stats.minibatches as f64;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, LayerSpec, Tensor};
    use crate::ppo::policy::masked_probs;
    use rand::SeedableRng;

    /// Two-armed bandit with a known optimum: arm 0 pays 1, arm 1 pays 0.
    /// With the entropy bonus off, the policy must saturate on arm 0.
    #[test]
    fn bandit_policy_converges_to_the_optimal_arm() {
        let actor_spec = NetworkSpec::new(
            vec![1],
            vec![
                LayerSpec::Dense { name: "fc".into(), in_features: 1, out_features: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        let critic_spec = NetworkSpec::new(
            vec![1],
            vec![LayerSpec::Dense { name: "fc".into(), in_features: 1, out_features: 1 }],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut actor = init_params(&actor_spec, &mut rng, Some(0.01)).unwrap();
        let mut critic = init_params(&critic_spec, &mut rng, None).unwrap();
        let adam_cfg = crate::nn::AdamConfig { lr: 0.05, ..Default::default() };
        let mut actor_adam = AdamState::new(&actor, adam_cfg);
        let mut critic_adam = AdamState::new(&critic, adam_cfg);
        let cfg = UpdateConfig {
            epsilon: 0.2,
            c1: 0.5,
            c2: 0.0,
            epochs: 1,
            minibatch_size: 64,
            normalize_advantages: true,
            grad_clip: Some(0.5),
        };

        let input = Tensor::new(vec![1], vec![1.0]).unwrap();
        for update in 0..200 {
            // Collect 64 one-step episodes under the current policy.
            let mut buffer = crate::ppo::buffer::RolloutBuffer::with_capacity(1, 64, 1, 2);
            for _ in 0..64 {
                let (logits, _) = forward_logits(&actor_spec, &actor, &input, None).unwrap();
                let probs = masked_probs(&logits, &[true, true]);
                let action = crate::nn::categorical_sample(&probs, &mut rng).unwrap();
                let (v, _) = forward(&critic_spec, &critic, &input, None).unwrap();
                buffer.inputs.push(input.clone());
                buffer.embeddings.push(Vec::new());
                buffer.masks.push(vec![true, true]);
                buffer.actions.push(action);
                buffer.log_probs.push(probs[action].ln());
                buffer.values.push(v.data()[0]);
                buffer.rewards.push(if action == 0 { 1.0 } else { 0.0 });
                buffer.dones.push(true);
            }
            let adv = crate::ppo::buffer::compute_gae(&buffer, 0.99, 0.95).unwrap();
            let mut shuffle = ChaCha8Rng::seed_from_u64(update);
            ppo_update(
                &actor_spec, &mut actor, &mut actor_adam, &critic_spec, &mut critic,
                &mut critic_adam, &buffer, &adv, &cfg, &mut shuffle,
            )
            .unwrap();
        }
        let (logits, _) = forward_logits(&actor_spec, &actor, &input, None).unwrap();
        let probs = masked_probs(&logits, &[true, true]);
        assert!(probs[0] > 0.99, "optimal arm probability {} after training", probs[0]);
    }

    #[test]
    fn update_is_deterministic_for_fixed_seed() {
        let actor_spec = NetworkSpec::new(
            vec![2],
            vec![
                LayerSpec::Dense { name: "fc".into(), in_features: 2, out_features: 3 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        let critic_spec = NetworkSpec::new(
            vec![2],
            vec![LayerSpec::Dense { name: "fc".into(), in_features: 2, out_features: 1 }],
        )
        .unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let mut actor = init_params(&actor_spec, &mut rng, Some(0.01)).unwrap();
            let mut critic = init_params(&critic_spec, &mut rng, None).unwrap();
            let mut actor_adam = AdamState::new(&actor, Default::default());
            let mut critic_adam = AdamState::new(&critic, Default::default());
            let mut buffer = crate::ppo::buffer::RolloutBuffer::with_capacity(1, 32, 1, 3);
            for t in 0..32 {
                let x = Tensor::new(vec![2], vec![(t as f32) / 32.0, 1.0]).unwrap();
                let (logits, _) = forward_logits(&actor_spec, &actor, &x, None).unwrap();
                let probs = masked_probs(&logits, &[true, true, true]);
                let action = t % 3;
                buffer.inputs.push(x);
                buffer.embeddings.push(Vec::new());
                buffer.masks.push(vec![true, true, true]);
                buffer.actions.push(action);
                buffer.log_probs.push(probs[action].ln());
                buffer.values.push(0.0);
                buffer.rewards.push((t % 5) as f32 - 2.0);
                buffer.dones.push(t % 7 == 6);
            }
            let adv = crate::ppo::buffer::compute_gae(&buffer, 0.99, 0.95).unwrap();
            let cfg = UpdateConfig {
                epsilon: 0.2,
                c1: 0.5,
                c2: 0.01,
                epochs: 3,
                minibatch_size: 8,
                normalize_advantages: true,
                grad_clip: Some(0.5),
            };
            let mut shuffle = ChaCha8Rng::seed_from_u64(77);
            ppo_update(
                &actor_spec, &mut actor, &mut actor_adam, &critic_spec, &mut critic,
                &mut critic_adam, &buffer, &adv, &cfg, &mut shuffle,
            )
            .unwrap();
            actor.entries[0].w.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
