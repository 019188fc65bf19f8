//! Parallel experience collection and the greedy evaluation protocol.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::buffer::RolloutBuffer;
use super::policy::{forward_logits, masked_probs, obs_to_input};
use crate::env::{Action, Env, Outcome, Scenario};
use crate::nn::{categorical_sample, forward, greedy_argmax, NetworkParams, NetworkSpec};
use crate::obs::ReducedObservation;
use crate::{Error, Result};

/// One rollout worker: an environment it exclusively owns, its action
/// sampling stream, and the pending observation.
pub struct Worker {
    pub env: Env,
    pub rng: ChaCha8Rng,
    pub last_obs: Vec<ReducedObservation>,
}

impl Worker {
    pub fn new(mut env: Env, rng: ChaCha8Rng) -> Result<Self> {
        let last_obs = env.reset()?;
        Ok(Self { env, rng, last_obs })
    }
}

/// Shared read-only nets handed to workers as value snapshots.
pub struct PolicyNets<'a> {
    pub actor_spec: &'a NetworkSpec,
    pub actor: &'a NetworkParams,
    pub critic_spec: &'a NetworkSpec,
    pub critic: &'a NetworkParams,
}

fn mask_for(env: &Env, agent: usize, n_actions: usize) -> Vec<bool> {
    // A reduced action head (moves + idle only) simply drops the trailing
    // declaration entries of the env mask.
    env.action_mask(agent)[..n_actions].to_vec()
}

fn value_of(nets: &PolicyNets, obs: &ReducedObservation) -> Result<f32> {
    let input = obs_to_input(obs)?;
    let emb = nets.critic_spec.embedding_len().map(|_| obs.embedding.as_slice());
    let (out, _) = forward(nets.critic_spec, nets.critic, &input, emb)?;
    Ok(out.data()[0])
}

struct WorkerSamples {
    inputs: Vec<crate::nn::Tensor>,
    embeddings: Vec<Vec<f32>>,
    masks: Vec<Vec<bool>>,
    actions: Vec<usize>,
    log_probs: Vec<f32>,
    values: Vec<f32>,
    rewards: Vec<f32>,
    dones: Vec<bool>,
    bootstrap: Vec<f32>,
}

fn run_worker(
    nets: &PolicyNets,
    worker: &mut Worker,
    steps: usize,
    n_actions: usize,
) -> Result<WorkerSamples> {
    let n_agents = worker.env.config().n_agents;
    let mut out = WorkerSamples {
        inputs: Vec::with_capacity(steps * n_agents),
        embeddings: Vec::with_capacity(steps * n_agents),
        masks: Vec::with_capacity(steps * n_agents),
        actions: Vec::with_capacity(steps * n_agents),
        log_probs: Vec::with_capacity(steps * n_agents),
        values: Vec::with_capacity(steps * n_agents),
        rewards: Vec::with_capacity(steps * n_agents),
        dones: Vec::with_capacity(steps * n_agents),
        bootstrap: vec![0.0; n_agents],
    };
    for _ in 0..steps {
        let mut joint = Vec::with_capacity(n_agents);
        for agent in 0..n_agents {
            let obs = &worker.last_obs[agent];
            let input = obs_to_input(obs)?;
            let emb = nets.actor_spec.embedding_len().map(|_| obs.embedding.as_slice());
            let (logits, _) = forward_logits(nets.actor_spec, nets.actor, &input, emb)?;
            let mask = mask_for(&worker.env, agent, n_actions);
            let probs = masked_probs(&logits, &mask);
            let action = categorical_sample(&probs, &mut worker.rng)?;
            let log_prob = probs[action].ln();
            let value = value_of(nets, obs)?;

            out.inputs.push(input);
            out.embeddings.push(obs.embedding.clone());
            out.masks.push(mask);
            out.actions.push(action);
            out.log_probs.push(log_prob);
            out.values.push(value);
            joint.push(Action::from_index(action)?);
        }
        let result = worker.env.step(&joint)?;
        for _ in 0..n_agents {
            out.rewards.push(result.reward);
            out.dones.push(result.done);
        }
        worker.last_obs = if result.done { worker.env.reset()? } else { result.observations };
    }
    for agent in 0..n_agents {
        // When the final step ended an episode this value is masked off by
        // the done flag during GAE; computing it unconditionally keeps the
        // control flow branch-free.
        out.bootstrap[agent] = value_of(nets, &worker.last_obs[agent])?;
    }
    Ok(out)
}

/// Collects exactly `horizon` environment steps split evenly across workers.
/// Workers run in parallel but are merged in worker order, so results do not
/// depend on thread scheduling.
pub fn collect_rollout(
    nets: &PolicyNets,
    workers: &mut [Worker],
    horizon: usize,
    n_actions: usize,
) -> Result<RolloutBuffer> {
    if workers.is_empty() || horizon % workers.len() != 0 {
        return Err(Error::Config(format!(
            "horizon {horizon} must be divisible by worker count {}",
            workers.len()
        )));
    }
    let steps = horizon / workers.len();
    let n_agents = workers[0].env.config().n_agents;
    let results: Vec<Result<WorkerSamples>> = workers
        .par_iter_mut()
        .map(|w| run_worker(nets, w, steps, n_actions))
        .collect();

    let mut buffer = RolloutBuffer::with_capacity(results.len(), steps, n_agents, n_actions);
    for (e, result) in results.into_iter().enumerate() {
        let samples = result?;
        buffer.inputs.extend(samples.inputs);
        buffer.embeddings.extend(samples.embeddings);
        buffer.masks.extend(samples.masks);
        buffer.actions.extend(samples.actions);
        buffer.log_probs.extend(samples.log_probs);
        buffer.values.extend(samples.values);
        buffer.rewards.extend(samples.rewards);
        buffer.dones.extend(samples.dones);
        for a in 0..n_agents {
            buffer.bootstrap[e * n_agents + a] = samples.bootstrap[a];
        }
    }
    buffer.validate()?;
    Ok(buffer)
}

/// Greedy action (argmax of the masked policy) for one agent.
pub fn greedy_action(
    actor_spec: &NetworkSpec,
    actor: &NetworkParams,
    env: &Env,
    obs: &ReducedObservation,
    agent: usize,
    n_actions: usize,
) -> Result<usize> {
    let input = obs_to_input(obs)?;
    let emb = actor_spec.embedding_len().map(|_| obs.embedding.as_slice());
    let (logits, _) = forward_logits(actor_spec, actor, &input, emb)?;
    let mask = mask_for(env, agent, n_actions);
    let probs = masked_probs(&logits, &mask);
    Ok(greedy_argmax(&probs))
}

/// Aggregate metrics over completed evaluation episodes.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub reward_mean: f64,
    pub length_mean: f64,
    pub cost_mean: f64,
    pub success_rate: [f64; 3],
    pub wrong_decl_rate: f64,
    /// Mean episode length over reachable-scenario episodes only.
    pub reachable_length_mean: f64,
}

/// Runs the policy greedily (most probable action under the mask) for
/// `eval_steps` environment steps and averages completed episodes.
pub fn evaluate_policy(
    actor_spec: &NetworkSpec,
    actor: &NetworkParams,
    env: &mut Env,
    eval_steps: usize,
    n_actions: usize,
) -> Result<EvalMetrics> {
    let n_agents = env.config().n_agents;
    let mut obs = env.reset()?;
    let mut ep_reward = 0.0f64;
    let mut ep_len = 0usize;
    let mut ep_cost = 0usize;

    let mut episodes = 0usize;
    let mut reward_sum = 0.0f64;
    let mut length_sum = 0usize;
    let mut cost_sum = 0usize;
    let mut scenario_total = [0usize; 3];
    let mut scenario_correct = [0usize; 3];
    let mut wrong = 0usize;
    let mut reach_len_sum = 0usize;

    for _ in 0..eval_steps {
        let joint: Vec<Action> = (0..n_agents)
            .map(|agent| {
                greedy_action(actor_spec, actor, env, &obs[agent], agent, n_actions)
                    .and_then(Action::from_index)
            })
            .collect::<Result<_>>()?;
        let result = env.step(&joint)?;
        ep_reward += result.reward as f64;
        ep_len += 1;
        ep_cost += result.info.moved;
        if result.done {
            episodes += 1;
            reward_sum += ep_reward;
            length_sum += ep_len;
            cost_sum += ep_cost;
            let s_idx = Scenario::ALL.iter().position(|&s| s == result.info.scenario).unwrap();
            scenario_total[s_idx] += 1;
            if result.info.outcome == Some(Outcome::correct_for(result.info.scenario)) {
                scenario_correct[s_idx] += 1;
            }
            if result.info.outcome == Some(Outcome::WrongDeclaration) {
                wrong += 1;
            }
            if result.info.scenario == Scenario::Reachable {
                reach_len_sum += ep_len;
            }
            ep_reward = 0.0;
            ep_len = 0;
            ep_cost = 0;
            obs = env.reset()?;
        } else {
            obs = result.observations;
        }
    }

    let mut metrics = EvalMetrics { episodes, ..EvalMetrics::default() };
    if episodes > 0 {
        metrics.reward_mean = reward_sum / episodes as f64;
        metrics.length_mean = length_sum as f64 / episodes as f64;
        metrics.cost_mean = cost_sum as f64 / episodes as f64;
        metrics.wrong_decl_rate = wrong as f64 / episodes as f64;
        for i in 0..3 {
            metrics.success_rate[i] = if scenario_total[i] > 0 {
                scenario_correct[i] as f64 / scenario_total[i] as f64
            } else {
                0.0
            };
        }
        if scenario_total[0] > 0 {
            metrics.reachable_length_mean = reach_len_sum as f64 / scenario_total[0] as f64;
        }
    }
    Ok(metrics)
}
