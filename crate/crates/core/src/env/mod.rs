//! Partially observable grid-world search environment.
//!
//! Each episode draws one of three scenarios with equal probability: the
//! target exists and is reachable, exists but is sealed off by obstacles, or
//! does not exist at all. Agents move in the 8-neighborhood, stay idle, or
//! declare nonexistence/unreachability; a strict majority of declarations
//! ends the episode. Detector readings are Poisson counts with inverse-square
//! mean and per-obstacle attenuation.

pub mod action;
pub mod grid;
pub mod layout;
pub mod physics;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use action::{Action, ACTION_COUNT};
pub use grid::{Cell, GridWorld};

use crate::nn::{forward, NetworkParams, NetworkSpec, Tensor};
use crate::obs::{assemble_all, ObsConfig, ReducedObservation, SharedMaps};
use crate::reward::{bfs_distance_field, team_reward, DistanceField, UNREACHABLE};
use crate::{Error, Result};

/// Penalty magnitude for an incorrect majority declaration.
pub const DECLARATION_PENALTY: f32 = 500.0;

const RESET_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Reachable,
    Unreachable,
    Nonexistent,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Reachable, Scenario::Unreachable, Scenario::Nonexistent];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Reachable => "reachable",
            Scenario::Unreachable => "unreachable",
            Scenario::Nonexistent => "nonexistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    WrongDeclaration,
    Timeout,
    DeclaredNonexistent,
    DeclaredUnreachable,
}

impl Outcome {
    /// The outcome a perfect team reaches in the given scenario.
    pub fn correct_for(scenario: Scenario) -> Outcome {
        match scenario {
            Scenario::Reachable => Outcome::Success,
            Scenario::Unreachable => Outcome::DeclaredUnreachable,
            Scenario::Nonexistent => Outcome::DeclaredNonexistent,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub h: usize,
    pub w: usize,
    pub cell_size_m: f64,
    pub n_agents: usize,
    pub strength_min: f64,
    pub strength_max: f64,
    pub mu: f64,
    pub scenario_probs: [f64; 3],
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            h: 100,
            w: 100,
            cell_size_m: 10.0,
            n_agents: 4,
            strength_min: 1e8,
            strength_max: 1e9,
            mu: 0.1,
            scenario_probs: [1.0 / 3.0; 3],
            max_steps: 100,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h < 4 || self.w < 4 {
            return Err(Error::Config("grid must be at least 4x4".into()));
        }
        if self.n_agents == 0 {
            return Err(Error::Config("need at least one agent".into()));
        }
        if self.n_agents * 4 > self.h * self.w {
            return Err(Error::Config("too many agents for the grid".into()));
        }
        if self.strength_min <= 0.0 || self.strength_max < self.strength_min {
            return Err(Error::Config("invalid strength range".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        let p_sum: f64 = self.scenario_probs.iter().sum();
        if self.scenario_probs.iter().any(|&p| p < 0.0) || p_sum <= 0.0 {
            return Err(Error::Config("scenario probabilities must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Where layout embeddings come from.
pub enum EmbeddingSource {
    /// Fixed all-zero embedding (tiny runs and tests that do not exercise
    /// the layout channel).
    Zeros(usize),
    /// A trained encoder network applied to the layout map.
    Encoder { spec: NetworkSpec, params: NetworkParams },
}

impl EmbeddingSource {
    pub fn embed_len(&self) -> usize {
        match self {
            EmbeddingSource::Zeros(n) => *n,
            EmbeddingSource::Encoder { spec, .. } => {
                spec.validate().map(|s| s.iter().product()).unwrap_or(0)
            }
        }
    }

    pub fn encode(&self, layout: &[f32], h: usize, w: usize) -> Result<Vec<f32>> {
        match self {
            EmbeddingSource::Zeros(n) => Ok(vec![0.0; *n]),
            EmbeddingSource::Encoder { spec, params } => {
                let input = Tensor::new(vec![1, h, w], layout.to_vec())?;
                let (out, _) = forward(spec, params, &input, None)?;
                Ok(out.into_data())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepInfo {
    pub scenario: Scenario,
    pub outcome: Option<Outcome>,
    /// Number of agents that took a movement action this step.
    pub moved: usize,
    /// Current min BFS distance from any agent to the target (`None` when no
    /// reachable target exists).
    pub min_distance: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observations: Vec<ReducedObservation>,
    pub reward: f32,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of an exported episode trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TraceEvent {
    Episode {
        episode: u64,
        scenario: Scenario,
        h: usize,
        w: usize,
        /// Row-major '0'/'1' obstacle string.
        obstacles: String,
        target: Option<Cell>,
        strength: Option<f64>,
        agents: Vec<Cell>,
    },
    Step {
        t: usize,
        actions: Vec<usize>,
        positions: Vec<Cell>,
        readings: Vec<u64>,
        reward: f32,
        done: bool,
        outcome: Option<Outcome>,
    },
}

/// Fully specified episode setup, bypassing randomization (fixtures, replay).
#[derive(Debug, Clone)]
pub struct EpisodeFixture {
    pub obstacles: Vec<bool>,
    pub scenario: Scenario,
    pub target: Option<(Cell, f64)>,
    pub positions: Vec<Cell>,
}

pub struct Env {
    cfg: EnvConfig,
    obs_cfg: ObsConfig,
    embedder: EmbeddingSource,
    rng: ChaCha8Rng,
    grid: GridWorld,
    scenario: Scenario,
    target: Option<(Cell, f64)>,
    positions: Vec<Cell>,
    maps: SharedMaps,
    dist_field: Option<DistanceField>,
    min_dist: u32,
    step_count: usize,
    done: bool,
    episode_index: u64,
    embedding: Vec<f32>,
    trace: Option<Vec<TraceEvent>>,
}

impl Env {
    pub fn new(cfg: EnvConfig, obs_cfg: ObsConfig, embedder: EmbeddingSource) -> Result<Self> {
        cfg.validate()?;
        obs_cfg.validate(cfg.h, cfg.w)?;
        if embedder.embed_len() != obs_cfg.embed_len {
            return Err(Error::Config(format!(
                "embedding source produces {} floats, observation config expects {}",
                embedder.embed_len(),
                obs_cfg.embed_len
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let grid = GridWorld::empty(cfg.h, cfg.w, cfg.cell_size_m, cfg.mu)?;
        let maps = SharedMaps::new(cfg.h, cfg.w, grid.obstacle_mask());
        Ok(Self {
            cfg,
            obs_cfg,
            embedder,
            rng,
            grid,
            scenario: Scenario::Nonexistent,
            target: None,
            positions: Vec::new(),
            maps,
            dist_field: None,
            min_dist: UNREACHABLE,
            step_count: 0,
            done: true,
            episode_index: 0,
            embedding: Vec::new(),
            trace: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn obs_config(&self) -> &ObsConfig {
        &self.obs_cfg
    }

    pub fn grid(&self) -> &GridWorld {
        &self.grid
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn target(&self) -> Option<(Cell, f64)> {
        self.target
    }

    pub fn positions(&self) -> &[Cell] {
        &self.positions
    }

    pub fn maps(&self) -> &SharedMaps {
        &self.maps
    }

    pub fn distance_field(&self) -> Option<&DistanceField> {
        self.dist_field.as_ref()
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn episode_index(&self) -> u64 {
        self.episode_index
    }

    /// Re-derives the RNG stream (paired benchmark episodes).
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Starts recording trace events; [`Env::take_trace`] drains them.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn draw_scenario(&mut self) -> Scenario {
        let total: f64 = self.cfg.scenario_probs.iter().sum();
        let u = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (i, &p) in self.cfg.scenario_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Scenario::ALL[i];
            }
        }
        Scenario::ALL[2]
    }

    fn draw_strength(&mut self) -> f64 {
        if self.cfg.strength_max > self.cfg.strength_min {
            self.rng.gen_range(self.cfg.strength_min..=self.cfg.strength_max)
        } else {
            self.cfg.strength_min
        }
    }

    /// Samples `n` distinct free cells satisfying `pred`, avoiding `avoid`.
    fn place_agents(
        rng: &mut ChaCha8Rng,
        grid: &GridWorld,
        n: usize,
        avoid: Option<Cell>,
        mut pred: impl FnMut(Cell) -> bool,
    ) -> Option<Vec<Cell>> {
        let mut cells = Vec::with_capacity(n);
        for _ in 0..50 * n.max(4) {
            let cell = Cell::new(rng.gen_range(0..grid.h), rng.gen_range(0..grid.w));
            if grid.is_free(cell) && Some(cell) != avoid && !cells.contains(&cell) && pred(cell) {
                cells.push(cell);
                if cells.len() == n {
                    return Some(cells);
                }
            }
        }
        None
    }

    /// Randomized episode start: scenario, layout density, obstacle layout,
    /// target and agent placement are all drawn fresh.
    pub fn reset(&mut self) -> Result<Vec<ReducedObservation>> {
        for _ in 0..RESET_ATTEMPTS {
            let scenario = self.draw_scenario();
            let density = self.rng.gen::<f64>();
            let mut mask = layout::gen_layout(self.cfg.h, self.cfg.w, density, &mut self.rng);

            let (target, positions) = match scenario {
                Scenario::Nonexistent => {
                    let grid =
                        GridWorld::new(self.cfg.h, self.cfg.w, self.cfg.cell_size_m, self.cfg.mu, mask.clone())?;
                    match Self::place_agents(&mut self.rng, &grid, self.cfg.n_agents, None, |_| true) {
                        Some(p) => (None, p),
                        None => continue,
                    }
                }
                Scenario::Reachable => {
                    let grid =
                        GridWorld::new(self.cfg.h, self.cfg.w, self.cfg.cell_size_m, self.cfg.mu, mask.clone())?;
                    let free: Vec<Cell> = grid.free_cells().collect();
                    if free.len() < self.cfg.n_agents + 1 {
                        continue;
                    }
                    let target = free[self.rng.gen_range(0..free.len())];
                    let field = bfs_distance_field(&grid, target)?;
                    let positions = match Self::place_agents(
                        &mut self.rng,
                        &grid,
                        self.cfg.n_agents,
                        Some(target),
                        |_| true,
                    ) {
                        Some(p) => p,
                        None => continue,
                    };
                    // The target counts as reachable when at least one agent
                    // has a finite path to it.
                    if !positions.iter().any(|&p| field.at(p) != UNREACHABLE) {
                        continue;
                    }
                    let strength = self.draw_strength();
                    (Some((target, strength)), positions)
                }
                Scenario::Unreachable => {
                    let interior = match layout::add_sealed_region(
                        &mut mask,
                        self.cfg.h,
                        self.cfg.w,
                        &mut self.rng,
                    ) {
                        Some(cells) => cells,
                        None => continue,
                    };
                    let grid =
                        GridWorld::new(self.cfg.h, self.cfg.w, self.cfg.cell_size_m, self.cfg.mu, mask.clone())?;
                    let target = interior[self.rng.gen_range(0..interior.len())];
                    let field = bfs_distance_field(&grid, target)?;
                    let positions = match Self::place_agents(
                        &mut self.rng,
                        &grid,
                        self.cfg.n_agents,
                        Some(target),
                        |c| field.at(c) == UNREACHABLE,
                    ) {
                        Some(p) => p,
                        None => continue,
                    };
                    let strength = self.draw_strength();
                    (Some((target, strength)), positions)
                }
            };

            return self.begin_episode(mask, scenario, target, positions);
        }
        Err(Error::Config(format!(
            "could not build a valid episode after {RESET_ATTEMPTS} attempts"
        )))
    }

    /// Deterministic episode setup from an explicit fixture.
    pub fn reset_fixed(&mut self, fixture: EpisodeFixture) -> Result<Vec<ReducedObservation>> {
        if fixture.positions.len() != self.cfg.n_agents {
            return Err(Error::Config(format!(
                "fixture places {} agents, config expects {}",
                fixture.positions.len(),
                self.cfg.n_agents
            )));
        }
        self.begin_episode(fixture.obstacles, fixture.scenario, fixture.target, fixture.positions)
    }

    fn begin_episode(
        &mut self,
        mask: Vec<bool>,
        scenario: Scenario,
        target: Option<(Cell, f64)>,
        positions: Vec<Cell>,
    ) -> Result<Vec<ReducedObservation>> {
        self.grid = GridWorld::new(self.cfg.h, self.cfg.w, self.cfg.cell_size_m, self.cfg.mu, mask)?;
        for &p in &positions {
            if self.grid.is_obstacle(p) {
                return Err(Error::Config(format!("agent start {p:?} is an obstacle cell")));
            }
        }
        // In the reachable scenario the distance field feeds the shaped
        // reward; it is static per episode, so compute it once here.
        self.dist_field = match (scenario, target) {
            (Scenario::Reachable, Some((cell, _))) | (Scenario::Unreachable, Some((cell, _))) => {
                Some(bfs_distance_field(&self.grid, cell)?)
            }
            _ => None,
        };
        self.scenario = scenario;
        self.target = target;
        self.positions = positions;
        self.maps = SharedMaps::new(self.cfg.h, self.cfg.w, self.grid.obstacle_mask());
        self.embedding = self.embedder.encode(&self.maps.layout, self.cfg.h, self.cfg.w)?;
        self.step_count = 0;
        self.done = false;
        self.episode_index += 1;

        let readings = self.sample_readings();
        let positions = self.positions.clone();
        self.maps.update(&positions, &readings);
        self.min_dist = self.current_min_distance();

        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent::Episode {
                episode: self.episode_index,
                scenario,
                h: self.cfg.h,
                w: self.cfg.w,
                obstacles: self
                    .grid
                    .obstacle_mask()
                    .iter()
                    .map(|&o| if o { '1' } else { '0' })
                    .collect(),
                target: self.target.map(|(c, _)| c),
                strength: self.target.map(|(_, s)| s),
                agents: self.positions.clone(),
            });
        }
        self.assemble()
    }

    fn sample_readings(&mut self) -> Vec<u64> {
        let source = self.target;
        self.positions
            .iter()
            .map(|&p| physics::sample_cpm(&self.grid, p, source, &mut self.rng))
            .collect()
    }

    fn current_min_distance(&self) -> u32 {
        match &self.dist_field {
            Some(field) if self.scenario == Scenario::Reachable => self
                .positions
                .iter()
                .map(|&p| field.at(p))
                .min()
                .unwrap_or(UNREACHABLE),
            _ => UNREACHABLE,
        }
    }

    fn assemble(&self) -> Result<Vec<ReducedObservation>> {
        assemble_all(&self.maps, &self.positions, &self.obs_cfg, &self.embedding)
    }

    /// Current observations without advancing (bootstrap values at horizon
    /// cuts).
    pub fn current_obs(&self) -> Result<Vec<ReducedObservation>> {
        if self.done {
            return Err(Error::Contract("episode finished; reset first".into()));
        }
        self.assemble()
    }

    /// Availability of each of the 11 actions for `agent`: moves are masked
    /// when they leave the grid or enter an obstacle; idle and both
    /// declarations are always available.
    pub fn action_mask(&self, agent: usize) -> [bool; ACTION_COUNT] {
        let mut mask = [true; ACTION_COUNT];
        let pos = self.positions[agent];
        for d in 1..=action::MOVE_DIRECTIONS {
            let (dr, dc) = Action::move_delta(d);
            mask[Action::Move(d).index()] = self.grid.step_from(pos, dr, dc).is_some();
        }
        mask
    }

    /// Advances one step with a joint action (one entry per agent).
    pub fn step(&mut self, joint: &[Action]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract("episode finished; reset first".into()));
        }
        if joint.len() != self.cfg.n_agents {
            return Err(Error::Contract(format!(
                "joint action has {} entries, env has {} agents",
                joint.len(),
                self.cfg.n_agents
            )));
        }
        for (i, &a) in joint.iter().enumerate() {
            let mask = self.action_mask(i);
            if !mask[a.index()] {
                return Err(Error::Contract(format!(
                    "agent {i} submitted masked action {a:?} at {:?}",
                    self.positions[i]
                )));
            }
        }

        let prev_min = self.min_dist;
        let mut moved = 0usize;
        for (i, &a) in joint.iter().enumerate() {
            if let Action::Move(d) = a {
                let (dr, dc) = Action::move_delta(d);
                // Unmasked by the check above, so the destination is valid.
                self.positions[i] = self
                    .grid
                    .step_from(self.positions[i], dr, dc)
                    .expect("unmasked move has a valid destination");
                moved += 1;
            }
        }
        self.step_count += 1;

        let readings = self.sample_readings();
        let positions = self.positions.clone();
        self.maps.update(&positions, &readings);

        let mut outcome = None;
        let on_target = matches!((self.scenario, self.target), (Scenario::Reachable, Some((t, _))) if self.positions.contains(&t));
        if on_target {
            outcome = Some(Outcome::Success);
        } else {
            let n = self.cfg.n_agents;
            let nonexistent = joint.iter().filter(|a| matches!(a, Action::DeclareNonexistent)).count();
            let unreachable = joint.iter().filter(|a| matches!(a, Action::DeclareUnreachable)).count();
            let majority = if 2 * nonexistent > n {
                Some(Scenario::Nonexistent)
            } else if 2 * unreachable > n {
                Some(Scenario::Unreachable)
            } else {
                None
            };
            if let Some(declared) = majority {
                outcome = Some(if declared == self.scenario {
                    match declared {
                        Scenario::Nonexistent => Outcome::DeclaredNonexistent,
                        Scenario::Unreachable => Outcome::DeclaredUnreachable,
                        Scenario::Reachable => unreachable!(),
                    }
                } else {
                    Outcome::WrongDeclaration
                });
            }
        }
        if outcome.is_none() && self.step_count >= self.cfg.max_steps {
            outcome = Some(Outcome::Timeout);
        }
        self.done = outcome.is_some();

        let min_now = self.current_min_distance();
        let reward = team_reward(
            outcome == Some(Outcome::WrongDeclaration),
            moved,
            min_now,
            prev_min,
            DECLARATION_PENALTY,
        );
        self.min_dist = min_now;

        let info = StepInfo {
            scenario: self.scenario,
            outcome,
            moved,
            min_distance: (min_now != UNREACHABLE).then_some(min_now),
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent::Step {
                t: self.step_count,
                actions: joint.iter().map(|a| a.index()).collect(),
                positions: self.positions.clone(),
                readings,
                reward,
                done: self.done,
                outcome,
            });
        }
        Ok(StepResult { observations: self.assemble()?, reward, done: self.done, info })
    }
}
