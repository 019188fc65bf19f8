//! Horizon-length experience storage and generalized advantage estimation.

use crate::nn::Tensor;
use crate::{Error, Result};

/// Flat SoA record of one update cycle's experience, indexed by
/// `(env, step, agent)`.
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub steps_per_env: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    /// Policy inputs, one per sample.
    pub inputs: Vec<Tensor>,
    /// Layout embeddings (empty vectors when the network takes none).
    pub embeddings: Vec<Vec<f32>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f32>,
    pub values: Vec<f32>,
    /// Shared team reward, replicated per agent sample.
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    /// Critic value of the observation after the final step, per
    /// `(env, agent)`; multiplied by `1 - done` during GAE.
    pub bootstrap: Vec<f32>,
}

impl RolloutBuffer {
    pub fn with_capacity(n_envs: usize, steps_per_env: usize, n_agents: usize, n_actions: usize) -> Self {
        let n = n_envs * steps_per_env * n_agents;
        Self {
            n_envs,
            steps_per_env,
            n_agents,
            n_actions,
            inputs: Vec::with_capacity(n),
            embeddings: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            bootstrap: vec![0.0; n_envs * n_agents],
        }
    }

    #[inline]
    pub fn idx(&self, env: usize, step: usize, agent: usize) -> usize {
        (env * self.steps_per_env + step) * self.n_agents + agent
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Total environment steps recorded.
    pub fn env_steps(&self) -> usize {
        self.n_envs * self.steps_per_env
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_envs * self.steps_per_env * self.n_agents;
        if self.len() != n {
            return Err(Error::Internal(format!(
                "buffer holds {} samples, layout expects {n}",
                self.len()
            )));
        }
        if !self.log_probs.iter().all(|l| l.is_finite()) {
            return Err(Error::Internal("non-finite log-probability in buffer".into()));
        }
        Ok(())
    }
}

/// Advantage estimates and value targets, sample-aligned with the buffer.
#[derive(Debug, Clone)]
pub struct Advantages {
    pub adv: Vec<f32>,
    pub vtarg: Vec<f32>,
}

/// Exponentially weighted advantage estimates: for each `(env, agent)`
/// stream, `A_t = sum_l (gamma*lambda)^l delta_{t+l}` truncated at episode
/// and horizon boundaries, with `delta_t = r_t + gamma*V_{t+1}*(1-d_t) -
/// V_t`. Value targets are `A_t + V_t`.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f32, lambda: f32) -> Result<Advantages> {
    buffer.validate()?;
    let mut adv = vec![0.0f32; buffer.len()];
    let mut vtarg = vec![0.0f32; buffer.len()];
    let t_len = buffer.steps_per_env;
    for e in 0..buffer.n_envs {
        for a in 0..buffer.n_agents {
            let mut acc = 0.0f32;
            for t in (0..t_len).rev() {
                let i = buffer.idx(e, t, a);
                let done = buffer.dones[i];
                let non_terminal = if done { 0.0 } else { 1.0 };
                let next_value = if t + 1 == t_len {
                    buffer.bootstrap[e * buffer.n_agents + a]
                } else {
                    buffer.values[buffer.idx(e, t + 1, a)]
                };
                let delta = buffer.rewards[i] + gamma * next_value * non_terminal - buffer.values[i];
                acc = delta + gamma * lambda * non_terminal * acc;
                adv[i] = acc;
                vtarg[i] = acc + buffer.values[i];
            }
        }
    }
    if !adv.iter().all(|v| v.is_finite()) {
        return Err(Error::Internal("non-finite advantage".into()));
    }
    Ok(Advantages { adv, vtarg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic_buffer(
        rewards: &[f32],
        values: &[f32],
        dones: &[bool],
        bootstrap: f32,
    ) -> RolloutBuffer {
        let t = rewards.len();
        let mut b = RolloutBuffer::with_capacity(1, t, 1, 2);
        for i in 0..t {
            b.inputs.push(Tensor::zeros(vec![1]));
            b.embeddings.push(Vec::new());
            b.masks.push(vec![true, true]);
            b.actions.push(0);
            b.log_probs.push(0.0);
            b.values.push(values[i]);
            b.rewards.push(rewards[i]);
            b.dones.push(dones[i]);
        }
        b.bootstrap[0] = bootstrap;
        b
    }

    /// Brute-force double sum over l, truncated at the first episode end.
    fn brute_force_gae(
        rewards: &[f32],
        values: &[f32],
        dones: &[bool],
        bootstrap: f32,
        gamma: f32,
        lambda: f32,
    ) -> Vec<f32> {
        let t_len = rewards.len();
        let delta = |t: usize| -> f32 {
            let nt = if dones[t] { 0.0 } else { 1.0 };
            let next_v = if t + 1 == t_len { bootstrap } else { values[t + 1] };
            rewards[t] + gamma * next_v * nt - values[t]
        };
        (0..t_len)
            .map(|t| {
                let mut sum = 0.0f32;
                let mut weight = 1.0f32;
                for l in 0..t_len - t {
                    sum += weight * delta(t + l);
                    if dones[t + l] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn lambda_zero_reduces_to_one_step_td() {
        let rewards = [1.0, -2.0, 0.5, 3.0];
        let values = [0.2, 0.4, -0.1, 0.9];
        let dones = [false, false, false, false];
        let b = synthetic_buffer(&rewards, &values, &dones, 0.7);
        let adv = compute_gae(&b, 0.99, 0.0).unwrap();
        for t in 0..4 {
            let next_v = if t == 3 { 0.7 } else { values[t + 1] };
            let delta = rewards[t] + 0.99 * next_v - values[t];
            assert!((adv.adv[t] - delta).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_one_gamma_one_gives_monte_carlo_residual() {
        // On a finished episode the sum telescopes to total return minus V.
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, -0.5, 0.25];
        let dones = [false, false, true];
        let b = synthetic_buffer(&rewards, &values, &dones, 123.0);
        let adv = compute_gae(&b, 1.0, 1.0).unwrap();
        let total: f32 = rewards.iter().sum();
        assert!((adv.adv[0] - (total - values[0])).abs() < 1e-5);
        assert!((adv.vtarg[0] - total).abs() < 1e-5);
    }

    #[test]
    fn matches_brute_force_double_sum_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let t = 10;
            let rewards: Vec<f32> = (0..t).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let values: Vec<f32> = (0..t).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let dones: Vec<bool> = (0..t).map(|_| rng.gen::<f64>() < 0.2).collect();
            let bootstrap = rng.gen_range(-3.0..3.0);
            let gamma = rng.gen_range(0.5..1.0);
            let lambda = rng.gen_range(0.0..1.0);
            let b = synthetic_buffer(&rewards, &values, &dones, bootstrap);
            let fast = compute_gae(&b, gamma, lambda).unwrap();
            let slow = brute_force_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
            for (f, s) in fast.adv.iter().zip(&slow) {
                assert!((f - s).abs() < 1e-4, "recursion {f} vs brute force {s}");
            }
        }
    }

    #[test]
    fn done_blocks_advantage_propagation() {
        let rewards = [1.0, 1.0, 1.0];
        let values = [0.0, 0.0, 0.0];
        let dones = [false, true, false];
        let b = synthetic_buffer(&rewards, &values, &dones, 0.0);
        let adv = compute_gae(&b, 0.99, 0.95).unwrap();
        // Step 1 ends an episode: its advantage is exactly r (= 1), and step
        // 0 only sees steps 0..=1.
        assert!((adv.adv[1] - 1.0).abs() < 1e-6);
        let expect0 = 1.0 + 0.99 * 0.0 + 0.99 * 0.95 * 1.0;
        assert!((adv.adv[0] - expect0).abs() < 1e-6);
    }
}
