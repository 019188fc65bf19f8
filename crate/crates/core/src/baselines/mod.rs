//! Comparison policies and the paired-seed benchmark harness.

mod uniform;

pub use uniform::UniformSweepPolicy;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    Action, EmbeddingSource, Env, EnvConfig, Outcome, Scenario, ACTION_COUNT,
};
use crate::io::rng::{derive_seed, substream};
use crate::nn::{
    categorical_sample, ddqn_centralized_spec, flops_estimate, spec_param_count, ActorArch,
    NetworkParams, NetworkSpec,
};
use crate::obs::{ObsConfig, ReducedObservation};
use crate::ppo::greedy_action;
use crate::{Error, Result};

/// A policy the benchmark harness can drive through episodes.
pub enum BenchPolicy {
    /// Deterministic boustrophedon coverage; never declares.
    Uniform(UniformSweepPolicy),
    /// Uniform over the currently unmasked actions.
    Random,
    /// Greedy (most probable action) trained policy; `n_actions = 9` yields
    /// the reduced-action variant with no declarations.
    Greedy { spec: NetworkSpec, params: NetworkParams, n_actions: usize },
}

impl BenchPolicy {
    pub fn uniform() -> Self {
        BenchPolicy::Uniform(UniformSweepPolicy::new())
    }

    fn begin_episode(&mut self, env: &Env) {
        if let BenchPolicy::Uniform(p) = self {
            p.begin_episode(env);
        }
    }

    fn act(
        &mut self,
        env: &Env,
        obs: &[ReducedObservation],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Action>> {
        match self {
            BenchPolicy::Uniform(p) => p.act(env),
            BenchPolicy::Random => (0..env.config().n_agents)
                .map(|agent| {
                    let mask = env.action_mask(agent);
                    let available = mask.iter().filter(|&&b| b).count() as f32;
                    let probs: Vec<f32> = mask
                        .iter()
                        .map(|&b| if b { 1.0 / available } else { 0.0 })
                        .collect();
                    categorical_sample(&probs, rng).and_then(Action::from_index)
                })
                .collect(),
            BenchPolicy::Greedy { spec, params, n_actions } => (0..env.config().n_agents)
                .map(|agent| {
                    greedy_action(spec, params, env, &obs[agent], agent, *n_actions)
                        .and_then(Action::from_index)
                })
                .collect(),
        }
    }
}

/// Reduced-action training variant: 9 actions (8 moves + idle), declarations
/// removed, environment unchanged. Agents trained this way necessarily time
/// out whenever the target is absent or sealed off.
pub fn odmtl_mode(mut cfg: crate::ppo::TrainConfig) -> crate::ppo::TrainConfig {
    cfg.odmtl = true;
    cfg
}

fn default_episodes() -> usize {
    300
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Paired episodes per policy (fixed-episode mode).
    pub episodes: usize,
    /// When set, each policy instead runs until this many environment steps
    /// have elapsed and completed episodes are averaged.
    pub step_budget: Option<u64>,
    /// Source strengths to benchmark (each gets its own paired block).
    pub strengths: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { episodes: default_episodes(), step_budget: None, strengths: vec![1e9] }
    }
}

/// One completed benchmark episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: String,
    pub episode: u64,
    pub strength: f64,
    pub scenario: Scenario,
    pub outcome: Outcome,
    pub length: usize,
    pub cost: usize,
    pub reward: f64,
}

/// Aggregates for one (policy, strength, scenario) bucket; `scenario: None`
/// covers all scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub policy: String,
    pub scenario: Option<Scenario>,
    pub strength: f64,
    pub n_agents: usize,
    pub episodes: usize,
    pub ep_length_mean: f64,
    pub ep_length_se: f64,
    pub ep_cost_mean: f64,
    pub ep_cost_se: f64,
    pub success_rate: f64,
    pub timeout_rate: f64,
    pub wrong_decl_rate: f64,
}

/// Analytic complexity entry for the hypothetical centralized joint model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralizedComplexityRow {
    pub n_agents: usize,
    pub params: u64,
    pub flops: u64,
    pub joint_actions: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub n_agents: usize,
    pub mode: String,
    pub rows: Vec<BenchmarkRow>,
    pub episode_records: Vec<EpisodeRecord>,
    /// Parameter/FLOP table for a centralized joint-action model, computed
    /// analytically (never trained), against the fixed per-agent model.
    pub centralized_complexity: Vec<CentralizedComplexityRow>,
    pub per_agent_params: u64,
    pub per_agent_flops: u64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(
    policy: &str,
    strength: f64,
    n_agents: usize,
    scenario: Option<Scenario>,
    records: &[EpisodeRecord],
) -> BenchmarkRow {
    let selected: Vec<&EpisodeRecord> = records
        .iter()
        .filter(|r| r.policy == policy && r.strength == strength)
        .filter(|r| scenario.map_or(true, |s| r.scenario == s))
        .collect();
    let lengths: Vec<f64> = selected.iter().map(|r| r.length as f64).collect();
    let costs: Vec<f64> = selected.iter().map(|r| r.cost as f64).collect();
    let (l_mean, l_se) = mean_se(&lengths);
    let (c_mean, c_se) = mean_se(&costs);
    let n = selected.len().max(1) as f64;
    let successes = selected
        .iter()
        .filter(|r| r.outcome == Outcome::correct_for(r.scenario))
        .count() as f64;
    let timeouts = selected.iter().filter(|r| r.outcome == Outcome::Timeout).count() as f64;
    let wrong = selected.iter().filter(|r| r.outcome == Outcome::WrongDeclaration).count() as f64;
    BenchmarkRow {
        policy: policy.to_string(),
        scenario,
        strength,
        n_agents,
        episodes: selected.len(),
        ep_length_mean: l_mean,
        ep_length_se: l_se,
        ep_cost_mean: c_mean,
        ep_cost_se: c_se,
        success_rate: successes / n,
        timeout_rate: timeouts / n,
        wrong_decl_rate: wrong / n,
    }
}

/// Runs every policy through the identical episode sequence (paired seeds:
/// episode `e` reseeds the environment identically for each policy) and
/// aggregates per scenario.
pub fn run_benchmark(
    policies: &mut [(String, BenchPolicy)],
    env_cfg: &EnvConfig,
    obs_cfg: &ObsConfig,
    embedder: &EmbeddingSource,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<BenchmarkReport> {
    if policies.is_empty() {
        return Err(Error::Config("no benchmark policies given".into()));
    }
    let mut records: Vec<EpisodeRecord> = Vec::new();
    for &strength in &cfg.strengths {
        let mut cfg_s = env_cfg.clone();
        cfg_s.strength_min = strength;
        cfg_s.strength_max = strength;
        for (p_idx, (name, policy)) in policies.iter_mut().enumerate() {
            let embedder = match embedder {
                EmbeddingSource::Zeros(n) => EmbeddingSource::Zeros(*n),
                EmbeddingSource::Encoder { spec, params } => {
                    EmbeddingSource::Encoder { spec: spec.clone(), params: params.clone() }
                }
            };
            let mut env = Env::new(cfg_s.clone(), obs_cfg.clone(), embedder)?;
            let mut steps_used = 0u64;
            let mut episode = 0u64;
            loop {
                match cfg.step_budget {
                    Some(budget) => {
                        if steps_used >= budget {
                            break;
                        }
                    }
                    None => {
                        if episode as usize >= cfg.episodes {
                            break;
                        }
                    }
                }
                // Identical episode setup across policies.
                env.reseed(derive_seed(seed, "bench-episode", episode));
                let mut obs = env.reset()?;
                let mut act_rng: ChaCha8Rng =
                    substream(seed, "bench-actions", (p_idx as u64) << 32 | episode);
                policy.begin_episode(&env);
                let mut length = 0usize;
                let mut cost = 0usize;
                let mut reward = 0.0f64;
                loop {
                    let joint = policy.act(&env, &obs, &mut act_rng)?;
                    let result = env.step(&joint)?;
                    length += 1;
                    steps_used += 1;
                    cost += result.info.moved;
                    reward += result.reward as f64;
                    if result.done {
                        records.push(EpisodeRecord {
                            policy: name.clone(),
                            episode,
                            strength,
                            scenario: result.info.scenario,
                            outcome: result.info.outcome.expect("done implies outcome"),
                            length,
                            cost,
                            reward,
                        });
                        break;
                    }
                    obs = result.observations;
                }
                episode += 1;
            }
        }
    }

    let mut rows = Vec::new();
    for &strength in &cfg.strengths {
        for (name, _) in policies.iter() {
            rows.push(aggregate(name, strength, env_cfg.n_agents, None, &records));
            for s in Scenario::ALL {
                rows.push(aggregate(name, strength, env_cfg.n_agents, Some(s), &records));
            }
        }
    }

    let base = ActorArch::default();
    let per_agent_spec = base.actor_spec()?;
    let centralized_complexity = (2..=5)
        .map(|n| {
            let spec = ddqn_centralized_spec(n, &base)?;
            Ok(CentralizedComplexityRow {
                n_agents: n,
                params: spec_param_count(&spec),
                flops: flops_estimate(&spec)?,
                joint_actions: (ACTION_COUNT as u64).pow(n as u32),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BenchmarkReport {
        seed,
        n_agents: env_cfg.n_agents,
        mode: match cfg.step_budget {
            Some(b) => format!("step-budget-{b}"),
            None => format!("episodes-{}", cfg.episodes),
        },
        rows,
        episode_records: records,
        centralized_complexity,
        per_agent_params: spec_param_count(&per_agent_spec),
        per_agent_flops: flops_estimate(&per_agent_spec)?,
    })
}

/// CSV rendering of the aggregate rows.
pub fn report_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from(
        "policy,scenario,strength,n_agents,episodes,ep_length_mean,ep_length_se,ep_cost_mean,ep_cost_se,success_rate,timeout_rate,wrong_decl_rate\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.policy,
            r.scenario.map_or("all", |s| s.label()),
            r.strength,
            r.n_agents,
            r.episodes,
            r.ep_length_mean,
            r.ep_length_se,
            r.ep_cost_mean,
            r.ep_cost_se,
            r.success_rate,
            r.timeout_rate,
            r.wrong_decl_rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_env_cfg() -> EnvConfig {
        EnvConfig {
            h: 16,
            w: 16,
            n_agents: 2,
            strength_min: 1e9,
            strength_max: 1e9,
            seed: 0,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let run = || {
            let mut policies = vec![
                ("uniform".to_string(), BenchPolicy::uniform()),
                ("random".to_string(), BenchPolicy::Random),
            ];
            let cfg = BenchConfig { episodes: 12, ..BenchConfig::default() };
            let report = run_benchmark(
                &mut policies,
                &desk_env_cfg(),
                &ObsConfig::default(),
                &EmbeddingSource::Zeros(128),
                &cfg,
                42,
            )
            .unwrap();
            serde_json::to_string(&report).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn uniform_never_declares_and_times_out_without_target() {
        let mut policies = vec![("uniform".to_string(), BenchPolicy::uniform())];
        let cfg = BenchConfig { episodes: 30, ..BenchConfig::default() };
        let report = run_benchmark(
            &mut policies,
            &desk_env_cfg(),
            &ObsConfig::default(),
            &EmbeddingSource::Zeros(128),
            &cfg,
            7,
        )
        .unwrap();
        for rec in &report.episode_records {
            assert_ne!(rec.outcome, Outcome::WrongDeclaration);
            if rec.scenario != Scenario::Reachable {
                assert_eq!(rec.outcome, Outcome::Timeout);
                assert_eq!(rec.length, 100);
            }
        }
    }

    #[test]
    fn paired_episodes_share_scenario_and_layout() {
        let mut policies = vec![
            ("uniform".to_string(), BenchPolicy::uniform()),
            ("random".to_string(), BenchPolicy::Random),
        ];
        let cfg = BenchConfig { episodes: 10, ..BenchConfig::default() };
        let report = run_benchmark(
            &mut policies,
            &desk_env_cfg(),
            &ObsConfig::default(),
            &EmbeddingSource::Zeros(128),
            &cfg,
            5,
        )
        .unwrap();
        for e in 0..10u64 {
            let per_ep: Vec<&EpisodeRecord> =
                report.episode_records.iter().filter(|r| r.episode == e).collect();
            assert_eq!(per_ep.len(), 2);
            assert_eq!(per_ep[0].scenario, per_ep[1].scenario, "episode {e} not paired");
        }
    }

    #[test]
    fn centralized_complexity_table_shows_exponential_growth() {
        let mut policies = vec![("random".to_string(), BenchPolicy::Random)];
        let cfg = BenchConfig { episodes: 1, ..BenchConfig::default() };
        let report = run_benchmark(
            &mut policies,
            &desk_env_cfg(),
            &ObsConfig::default(),
            &EmbeddingSource::Zeros(128),
            &cfg,
            1,
        )
        .unwrap();
        assert_eq!(report.centralized_complexity.len(), 4);
        let params: Vec<u64> = report.centralized_complexity.iter().map(|r| r.params).collect();
        assert!(params.windows(2).all(|w| w[0] < w[1]));
        // Per-agent model stays fixed while the joint model explodes.
        assert!(report.per_agent_params < params[0]);
        assert!(params[3] > 100 * report.per_agent_params);
    }
}
