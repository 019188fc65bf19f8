//! Centralized-learning / distributed-execution training loop: all agents
//! share one actor, one central critic scores every agent's experience, and
//! cycles of collect / advantage / update run until the step budget is
//! spent. Every `eval_every` steps the current policy is run greedily in a
//! fresh environment and the averages are logged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::buffer::compute_gae;
use super::rollout::{collect_rollout, evaluate_policy, PolicyNets, Worker};
use super::update::{ppo_update, UpdateConfig, UpdateStats};
use crate::env::{EmbeddingSource, Env, EnvConfig};
use crate::io::checkpoint::{params_entries, save_checkpoint};
use crate::io::metrics::{MetricsRow, MetricsWriter};
use crate::io::rng::{derive_seed, substream};
use crate::nn::{init_params, AdamConfig, AdamState, NetworkParams, NetworkSpec, ActorArch};
use crate::obs::ObsConfig;
use crate::{Error, Result};

fn default_epsilon() -> f32 {
    0.2
}
fn default_gamma() -> f32 {
    0.99
}
fn default_lambda() -> f32 {
    0.95
}
fn default_horizon() -> usize {
    4000
}
fn default_epochs() -> usize {
    20
}
fn default_lr() -> f32 {
    3e-4
}
fn default_c1() -> f32 {
    0.5
}
fn default_c2() -> f32 {
    0.01
}
fn default_total_steps() -> u64 {
    30_000_000
}
fn default_eval_every() -> u64 {
    40_000
}
fn default_eval_steps() -> u64 {
    4_000
}
fn default_n_envs() -> usize {
    8
}
fn default_true() -> bool {
    true
}
fn default_grad_clip() -> Option<f32> {
    Some(0.5)
}
fn default_hidden() -> usize {
    1280
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f32,
    #[serde(default = "default_gamma")]
    pub gamma: f32,
    #[serde(default = "default_lambda")]
    pub lambda: f32,
    /// Environment steps per update cycle, split across workers.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_epochs")]
    pub epochs_per_update: usize,
    #[serde(default = "default_lr")]
    pub lr: f32,
    /// Value-loss coefficient.
    #[serde(default = "default_c1")]
    pub c1: f32,
    /// Entropy-bonus coefficient.
    #[serde(default = "default_c2")]
    pub c2: f32,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eval_steps")]
    pub eval_steps: u64,
    /// Defaults to `horizon * n_agents / 8` when unset.
    #[serde(default)]
    pub minibatch_size: Option<usize>,
    #[serde(default = "default_n_envs")]
    pub n_envs: usize,
    #[serde(default = "default_true")]
    pub normalize_advantages: bool,
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f32>,
    /// Hidden dense width of the policy/value CNNs.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Reduced-action ablation: 9 actions (8 moves + idle), no declarations.
    #[serde(default)]
    pub odmtl: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl TrainConfig {
    pub fn n_actions(&self) -> usize {
        if self.odmtl {
            9
        } else {
            11
        }
    }

    pub fn validate(&self, max_steps: usize, n_envs_agents: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config("epsilon must lie in (0, 1)".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.horizon < max_steps {
            return Err(Error::Config(format!(
                "horizon {} must cover the {max_steps}-step episode cap",
                self.horizon
            )));
        }
        if self.n_envs == 0 || self.horizon % self.n_envs != 0 {
            return Err(Error::Config(format!(
                "horizon {} must divide evenly across {} workers",
                self.horizon, self.n_envs
            )));
        }
        if self.total_steps < self.horizon as u64 {
            return Err(Error::Config("total_steps smaller than one horizon".into()));
        }
        let _ = n_envs_agents;
        Ok(())
    }

    pub fn arch(&self, obs_cfg: &ObsConfig) -> ActorArch {
        ActorArch {
            n_maps: obs_cfg.n_maps(),
            window: obs_cfg.window,
            embed: obs_cfg.embed_len,
            hidden: self.hidden,
            actions: self.n_actions(),
            ..ActorArch::default()
        }
    }

    fn update_config(&self, n_agents: usize) -> UpdateConfig {
        UpdateConfig {
            epsilon: self.epsilon,
            c1: self.c1,
            c2: self.c2,
            epochs: self.epochs_per_update,
            minibatch_size: self
                .minibatch_size
                .unwrap_or((self.horizon * n_agents / 8).max(1)),
            normalize_advantages: self.normalize_advantages,
            grad_clip: self.grad_clip,
        }
    }
}

pub struct TrainOutputs {
    pub arch: ActorArch,
    pub actor_spec: NetworkSpec,
    pub actor: NetworkParams,
    pub critic_spec: NetworkSpec,
    pub critic: NetworkParams,
    pub rows: Vec<MetricsRow>,
}

fn checkpoint_entries<'a>(
    actor: &'a NetworkParams,
    critic: &'a NetworkParams,
    embedder: &'a EmbeddingSource,
) -> Vec<(String, &'a crate::nn::Tensor)> {
    let mut entries = params_entries("actor", actor);
    entries.extend(params_entries("critic", critic));
    if let EmbeddingSource::Encoder { params, .. } = embedder {
        entries.extend(params_entries("cae.enc", params));
    }
    entries
}

/// Full training run. Writes `metrics.csv` and periodic checkpoints into
/// `out_dir` when given.
pub fn train(
    env_cfg: &EnvConfig,
    obs_cfg: &ObsConfig,
    cfg: &TrainConfig,
    embedder: &EmbeddingSource,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutputs> {
    env_cfg.validate()?;
    obs_cfg.validate(env_cfg.h, env_cfg.w)?;
    cfg.validate(env_cfg.max_steps, cfg.n_envs * env_cfg.n_agents)?;

    let arch = cfg.arch(obs_cfg);
    let actor_spec = arch.actor_spec()?;
    let critic_spec = arch.critic_spec()?;
    let mut actor = init_params(&actor_spec, &mut substream(seed, "init", 0), Some(0.01))?;
    let mut critic = init_params(&critic_spec, &mut substream(seed, "init", 1), None)?;
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut actor_adam = AdamState::new(&actor, adam_cfg);
    let mut critic_adam = AdamState::new(&critic, adam_cfg);

    let mut workers = Vec::with_capacity(cfg.n_envs);
    for e in 0..cfg.n_envs {
        let mut worker_cfg = env_cfg.clone();
        worker_cfg.seed = derive_seed(seed, "env", e as u64);
        let env = Env::new(worker_cfg, obs_cfg.clone(), embedder_clone(embedder))?;
        workers.push(Worker::new(env, substream(seed, "rollout", e as u64))?);
    }

    let mut metrics = match out_dir {
        Some(dir) => Some(MetricsWriter::create(&dir.join("metrics.csv"))?),
        None => None,
    };
    let mut rows = Vec::new();
    let mut eval_index = 0u64;
    let mut last_stats = UpdateStats::default();

    let mut run_eval = |step: u64,
                        actor: &NetworkParams,
                        stats: &UpdateStats,
                        eval_index: &mut u64,
                        rows: &mut Vec<MetricsRow>,
                        metrics: &mut Option<MetricsWriter>|
     -> Result<()> {
        let mut eval_cfg = env_cfg.clone();
        eval_cfg.seed = derive_seed(seed, "eval-env", *eval_index);
        let mut eval_env = Env::new(eval_cfg, obs_cfg.clone(), embedder_clone(embedder))?;
        let m = evaluate_policy(
            &actor_spec,
            actor,
            &mut eval_env,
            cfg.eval_steps as usize,
            cfg.n_actions(),
        )?;
        *eval_index += 1;
        let row = MetricsRow {
            step,
            episodic_reward_mean: m.reward_mean,
            episodic_length_mean: m.length_mean,
            episodic_cost_mean: m.cost_mean,
            success_rate_reachable: m.success_rate[0],
            success_rate_unreachable: m.success_rate[1],
            success_rate_nonexistent: m.success_rate[2],
            loss_clip: stats.loss_clip,
            loss_vf: stats.loss_vf,
            entropy: stats.entropy,
        };
        if let Some(w) = metrics.as_mut() {
            w.write(&row)?;
        }
        rows.push(row);
        Ok(())
    };

    run_eval(0, &actor, &last_stats, &mut eval_index, &mut rows, &mut metrics)?;
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("ckpt_0.ckpt"), &checkpoint_entries(&actor, &critic, embedder))?;
    }

    let cycles = cfg.total_steps / cfg.horizon as u64;
    let update_cfg = cfg.update_config(env_cfg.n_agents);
    let mut steps_done = 0u64;
    for cycle in 0..cycles {
        let buffer = {
            let nets = PolicyNets {
                actor_spec: &actor_spec,
                actor: &actor,
                critic_spec: &critic_spec,
                critic: &critic,
            };
            collect_rollout(&nets, &mut workers, cfg.horizon, cfg.n_actions())?
        };
        let advantages = compute_gae(&buffer, cfg.gamma, cfg.lambda)?;
        let mut shuffle = substream(seed, "shuffle", cycle);
        let result = ppo_update(
            &actor_spec,
            &mut actor,
            &mut actor_adam,
            &critic_spec,
            &mut critic,
            &mut critic_adam,
            &buffer,
            &advantages,
            &update_cfg,
            &mut shuffle,
        );
        last_stats = match result {
            Ok(stats) => stats,
            Err(e @ Error::TrainAbort(_)) => {
                // Parameters are untouched on abort; keep the last good state
                // on disk for diagnosis.
                if let Some(dir) = out_dir {
                    save_checkpoint(
                        &dir.join("abort.ckpt"),
                        &checkpoint_entries(&actor, &critic, embedder),
                    )?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };

        let before = steps_done;
        steps_done += cfg.horizon as u64;
        if before / cfg.eval_every != steps_done / cfg.eval_every {
            run_eval(steps_done, &actor, &last_stats, &mut eval_index, &mut rows, &mut metrics)?;
            if let Some(dir) = out_dir {
                save_checkpoint(
                    &dir.join(format!("ckpt_{steps_done}.ckpt")),
                    &checkpoint_entries(&actor, &critic, embedder),
                )?;
            }
        }
    }

    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("final.ckpt"), &checkpoint_entries(&actor, &critic, embedder))?;
    }
    Ok(TrainOutputs { arch, actor_spec, actor, critic_spec, critic, rows })
}

fn embedder_clone(e: &EmbeddingSource) -> EmbeddingSource {
    match e {
        EmbeddingSource::Zeros(n) => EmbeddingSource::Zeros(*n),
        EmbeddingSource::Encoder { spec, params } => {
            EmbeddingSource::Encoder { spec: spec.clone(), params: params.clone() }
        }
    }
}
