//! Pre-planned uniform coverage: each agent sweeps its own vertical strip of
//! the grid in a boustrophedon (serpentine) order, detouring around
//! obstacles via shortest paths. Never declares anything, so episodes
//! without a reachable target always run into the step cap.

use crate::env::{Action, Cell, Env};
use crate::reward::bfs_path;
use crate::{Error, Result};

struct AgentPlan {
    /// Sweep targets in visiting order (strip cells, serpentine by column).
    targets: Vec<Cell>,
    next_target: usize,
    /// Remaining cells of the path to the current target, front first.
    path: std::collections::VecDeque<Cell>,
}

/// Deterministic boustrophedon sweep over a per-agent strip partition.
pub struct UniformSweepPolicy {
    plans: Vec<AgentPlan>,
}

impl UniformSweepPolicy {
    pub fn new() -> Self {
        Self { plans: Vec::new() }
    }

    /// Partitions columns into contiguous strips (one per agent) and lays
    /// out each strip's serpentine visiting order.
    pub fn begin_episode(&mut self, env: &Env) {
        let n = env.config().n_agents;
        let (h, w) = (env.config().h, env.config().w);
        let grid = env.grid();
        self.plans.clear();
        let base = w / n;
        let extra = w % n;
        let mut col = 0usize;
        for agent in 0..n {
            let width = base + usize::from(agent < extra);
            let cols = col..col + width;
            col += width;
            let mut targets = Vec::new();
            for (k, c) in cols.enumerate() {
                let rows: Box<dyn Iterator<Item = usize>> =
                    if k % 2 == 0 { Box::new(0..h) } else { Box::new((0..h).rev()) };
                for r in rows {
                    let cell = Cell::new(r, c);
                    if grid.is_free(cell) {
                        targets.push(cell);
                    }
                }
            }
            self.plans.push(AgentPlan {
                targets,
                next_target: 0,
                path: std::collections::VecDeque::new(),
            });
        }
    }

    /// Next joint action: each agent follows its sweep, idling once its
    /// strip is exhausted.
    pub fn act(&mut self, env: &Env) -> Result<Vec<Action>> {
        if self.plans.len() != env.config().n_agents {
            return Err(Error::Contract("begin_episode not called for this episode".into()));
        }
        let mut joint = Vec::with_capacity(self.plans.len());
        for (agent, plan) in self.plans.iter_mut().enumerate() {
            let pos = env.positions()[agent];
            // Drop a stale waypoint if we are already standing on it.
            while plan.path.front() == Some(&pos) {
                plan.path.pop_front();
            }
            if plan.path.is_empty() {
                // Plan a route to the next strip cell reachable from here.
                while plan.next_target < plan.targets.len() {
                    let target = plan.targets[plan.next_target];
                    plan.next_target += 1;
                    if target == pos {
                        continue;
                    }
                    if let Some(path) = bfs_path(env.grid(), pos, target) {
                        plan.path = path.into_iter().skip(1).collect();
                        break;
                    }
                }
            }
            let action = match plan.path.pop_front() {
                Some(next) => {
                    let dr = next.r as i64 - pos.r as i64;
                    let dc = next.c as i64 - pos.c as i64;
                    Action::from_delta(dr, dc).ok_or_else(|| {
                        Error::Internal(format!("non-adjacent path step {pos:?} -> {next:?}"))
                    })?
                }
                None => Action::Idle,
            };
            joint.push(action);
        }
        Ok(joint)
    }
}

impl Default for UniformSweepPolicy {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EmbeddingSource, EnvConfig, EpisodeFixture, Scenario};
    use crate::obs::ObsConfig;

    fn empty_env(h: usize, w: usize, n_agents: usize) -> Env {
        let cfg = EnvConfig {
            h,
            w,
            n_agents,
            max_steps: 400,
            strength_min: 1e9,
            strength_max: 1e9,
            ..EnvConfig::default()
        };
        let mut obs_cfg = ObsConfig::default();
        obs_cfg.window = 7.min(h.min(w) - 1);
        if obs_cfg.window % 2 == 0 {
            obs_cfg.window -= 1;
        }
        Env::new(cfg, obs_cfg, EmbeddingSource::Zeros(128)).unwrap()
    }

    #[test]
    fn single_agent_covers_empty_10x10_within_200_steps() {
        let mut env = empty_env(10, 10, 1);
        env.reset_fixed(EpisodeFixture {
            obstacles: vec![false; 100],
            scenario: Scenario::Nonexistent,
            target: None,
            positions: vec![Cell::new(0, 0)],
        })
        .unwrap();
        let mut policy = UniformSweepPolicy::new();
        policy.begin_episode(&env);
        let mut visited = std::collections::HashSet::new();
        visited.insert(env.positions()[0]);
        for _ in 0..200 {
            let joint = policy.act(&env).unwrap();
            if joint[0] == Action::Idle {
                break;
            }
            env.step(&joint).unwrap();
            visited.insert(env.positions()[0]);
        }
        assert_eq!(visited.len(), 100, "sweep must touch every cell");
    }

    #[test]
    fn coverage_visits_each_cell_at_most_twice_on_empty_grid() {
        let mut env = empty_env(10, 10, 2);
        env.reset_fixed(EpisodeFixture {
            obstacles: vec![false; 100],
            scenario: Scenario::Nonexistent,
            target: None,
            positions: vec![Cell::new(0, 0), Cell::new(0, 5)],
        })
        .unwrap();
        let mut policy = UniformSweepPolicy::new();
        policy.begin_episode(&env);
        let mut counts = std::collections::HashMap::new();
        for (a, &p) in env.positions().iter().enumerate() {
            *counts.entry((a, p)).or_insert(0usize) += 1;
        }
        for _ in 0..300 {
            let joint = policy.act(&env).unwrap();
            if joint.iter().all(|&a| a == Action::Idle) {
                break;
            }
            env.step(&joint).unwrap();
            for (a, &p) in env.positions().iter().enumerate() {
                *counts.entry((a, p)).or_insert(0) += 1;
            }
        }
        for ((agent, cell), count) in counts {
            assert!(count <= 2, "agent {agent} visited {cell:?} {count} times");
        }
    }

    #[test]
    fn sweep_detours_around_obstacles() {
        let mut obstacles = vec![false; 100];
        // A wall across most of row 5.
        for c in 0..8 {
            obstacles[5 * 10 + c] = true;
        }
        let mut env = empty_env(10, 10, 1);
        env.reset_fixed(EpisodeFixture {
            obstacles: obstacles.clone(),
            scenario: Scenario::Nonexistent,
            target: None,
            positions: vec![Cell::new(0, 0)],
        })
        .unwrap();
        let mut policy = UniformSweepPolicy::new();
        policy.begin_episode(&env);
        let free_cells = 100 - 8;
        let mut visited = std::collections::HashSet::new();
        visited.insert(env.positions()[0]);
        for _ in 0..390 {
            let joint = policy.act(&env).unwrap();
            if joint[0] == Action::Idle {
                break;
            }
            env.step(&joint).unwrap();
            visited.insert(env.positions()[0]);
        }
        assert_eq!(visited.len(), free_cells);
    }
}
