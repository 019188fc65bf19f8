//! Observation maps and their reduction to the policy input.
//!
//! Agents share five full-resolution maps (own location, teammate
//! distribution, visit counts, latest readings, obstacle layout). Each step
//! these are normalized to `[0, 1]` and reduced per agent to `n x n`
//! channels: agent-centered local windows plus bilinear global downsamples,
//! with the layout's global view carried by a learned embedding instead of a
//! downsample.

use serde::{Deserialize, Serialize};

use crate::env::grid::Cell;
use crate::{Error, Result};

/// The five tracked observation maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    Location,
    TeamDistribution,
    VisitHistory,
    ReadingsHistory,
    EnvironmentLayout,
}

/// Which maps are reduced as local windows and which as global downsamples.
/// The layout never appears in `global` — its global summary is the
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapAssignment {
    pub local: Vec<MapKind>,
    pub global: Vec<MapKind>,
}

impl Default for MapAssignment {
    fn default() -> Self {
        Self {
            local: vec![
                MapKind::Location,
                MapKind::TeamDistribution,
                MapKind::VisitHistory,
                MapKind::ReadingsHistory,
                MapKind::EnvironmentLayout,
            ],
            global: vec![
                MapKind::Location,
                MapKind::TeamDistribution,
                MapKind::VisitHistory,
                MapKind::ReadingsHistory,
            ],
        }
    }
}

impl MapAssignment {
    pub fn n_maps(&self) -> usize {
        self.local.len() + self.global.len()
    }
}

/// Window size plus the local/global channel assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsConfig {
    pub window: usize,
    pub embed_len: usize,
    #[serde(default)]
    pub assignment: MapAssignment,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self { window: 7, embed_len: 128, assignment: MapAssignment::default() }
    }
}

impl ObsConfig {
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.window % 2 == 0 {
            return Err(Error::Config(format!("window {} must be odd", self.window)));
        }
        if self.window <= 1 || self.window >= h.min(w) {
            return Err(Error::Config(format!(
                "window {} must satisfy 1 < n < min(h, w) = {}",
                self.window,
                h.min(w)
            )));
        }
        if self.assignment.global.contains(&MapKind::EnvironmentLayout) {
            return Err(Error::Config(
                "layout global view is the embedding, not a downsample".into(),
            ));
        }
        Ok(())
    }

    pub fn n_maps(&self) -> usize {
        self.assignment.n_maps()
    }

    /// Flattened map input size fed to the policy (embedding excluded).
    pub fn input_size(&self) -> usize {
        self.n_maps() * self.window * self.window
    }
}

/// Episode-lifetime accumulators shared by the whole team.
#[derive(Debug, Clone)]
pub struct SharedMaps {
    pub h: usize,
    pub w: usize,
    pub visit: Vec<f32>,
    pub readings: Vec<f32>,
    pub layout: Vec<f32>,
    /// Largest raw reading seen this episode (normalization scale).
    pub r_max: f32,
}

impl SharedMaps {
    pub fn new(h: usize, w: usize, obstacle_mask: &[bool]) -> Self {
        Self {
            h,
            w,
            visit: vec![0.0; h * w],
            readings: vec![0.0; h * w],
            layout: obstacle_mask.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect(),
            r_max: 0.0,
        }
    }

    /// Per-step accumulation after movement: increment the visit count at
    /// every agent's cell and overwrite that cell's reading with the latest
    /// sample.
    pub fn update(&mut self, positions: &[Cell], readings: &[u64]) {
        debug_assert_eq!(positions.len(), readings.len());
        for (pos, &cpm) in positions.iter().zip(readings) {
            let idx = pos.r * self.w + pos.c;
            self.visit[idx] += 1.0;
            let r = cpm as f32;
            self.readings[idx] = r;
            if r > self.r_max {
                self.r_max = r;
            }
        }
    }

    fn normalized_visit(&self) -> Vec<f32> {
        let max = self.visit.iter().cloned().fold(0.0f32, f32::max);
        if max == 0.0 {
            return self.visit.clone();
        }
        self.visit.iter().map(|v| v / max).collect()
    }

    /// Log scaling tames the huge dynamic range of inverse-square counts:
    /// `ln(1 + r) / ln(1 + r_max)`, all-zero when nothing was read yet.
    fn normalized_readings(&self) -> Vec<f32> {
        if self.r_max <= 0.0 {
            return vec![0.0; self.readings.len()];
        }
        let denom = (1.0 + self.r_max).ln();
        self.readings.iter().map(|r| (1.0 + r).ln() / denom).collect()
    }
}

/// One agent's policy input: stacked `n x n` maps plus the layout embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedObservation {
    pub n: usize,
    pub n_maps: usize,
    /// Channel-major `n_maps * n * n` buffer.
    pub maps: Vec<f32>,
    pub embedding: Vec<f32>,
}

impl ReducedObservation {
    pub fn channel(&self, i: usize) -> &[f32] {
        let sz = self.n * self.n;
        &self.maps[i * sz..(i + 1) * sz]
    }
}

/// `n x n` copy of `map` centered at `center`. Out-of-grid cells take
/// `pad_value` (1 for the layout channel — the boundary behaves as a wall —
/// and 0 everywhere else).
pub fn local_window(map: &[f32], h: usize, w: usize, center: Cell, n: usize, pad_value: f32) -> Result<Vec<f32>> {
    if n % 2 == 0 {
        return Err(Error::Config(format!("window size {n} must be odd")));
    }
    let half = (n / 2) as i64;
    let mut out = vec![pad_value; n * n];
    for wr in 0..n {
        let r = center.r as i64 + wr as i64 - half;
        if r < 0 || r >= h as i64 {
            continue;
        }
        for wc in 0..n {
            let c = center.c as i64 + wc as i64 - half;
            if c < 0 || c >= w as i64 {
                continue;
            }
            out[wr * n + wc] = map[r as usize * w + c as usize];
        }
    }
    Ok(out)
}

/// Corner-aligned bilinear downsample of an `h x w` map to `n x n`.
pub fn global_downsample(map: &[f32], h: usize, w: usize, n: usize) -> Result<Vec<f32>> {
    if h < n || w < n || n == 0 {
        return Err(Error::Config(format!("cannot downsample {h}x{w} to {n}x{n}")));
    }
    let src_pos = |out_i: usize, out_n: usize, in_n: usize| -> f64 {
        if out_n == 1 {
            (in_n - 1) as f64 / 2.0
        } else {
            out_i as f64 * (in_n - 1) as f64 / (out_n - 1) as f64
        }
    };
    let mut out = vec![0.0f32; n * n];
    for oy in 0..n {
        let sy = src_pos(oy, n, h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = (sy - y0 as f64) as f32;
        for ox in 0..n {
            let sx = src_pos(ox, n, w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = (sx - x0 as f64) as f32;
            let top = map[y0 * w + x0] * (1.0 - tx) + map[y0 * w + x1] * tx;
            let bottom = map[y1 * w + x0] * (1.0 - tx) + map[y1 * w + x1] * tx;
            out[oy * n + ox] = top * (1.0 - ty) + bottom * ty;
        }
    }
    Ok(out)
}

fn location_map(h: usize, w: usize, pos: Cell) -> Vec<f32> {
    let mut map = vec![0.0f32; h * w];
    map[pos.r * w + pos.c] = 1.0;
    map
}

fn team_map(h: usize, w: usize, positions: &[Cell], exclude: usize) -> Vec<f32> {
    let mut map = vec![0.0f32; h * w];
    for (i, pos) in positions.iter().enumerate() {
        if i != exclude {
            map[pos.r * w + pos.c] = 1.0;
        }
    }
    map
}

/// Builds every agent's [`ReducedObservation`] for the current step. The
/// shared channels (visit, readings, layout) are normalized once.
pub fn assemble_all(
    maps: &SharedMaps,
    positions: &[Cell],
    cfg: &ObsConfig,
    embedding: &[f32],
) -> Result<Vec<ReducedObservation>> {
    cfg.validate(maps.h, maps.w)?;
    if embedding.len() != cfg.embed_len {
        return Err(Error::Config(format!(
            "embedding length {} does not match config {}",
            embedding.len(),
            cfg.embed_len
        )));
    }
    let visit = maps.normalized_visit();
    let readings = maps.normalized_readings();
    let (h, w, n) = (maps.h, maps.w, cfg.window);

    let mut out = Vec::with_capacity(positions.len());
    for agent in 0..positions.len() {
        let center = positions[agent];
        let loc = location_map(h, w, center);
        let team = team_map(h, w, positions, agent);
        let select = |kind: MapKind| -> (&[f32], f32) {
            match kind {
                MapKind::Location => (loc.as_slice(), 0.0),
                MapKind::TeamDistribution => (team.as_slice(), 0.0),
                MapKind::VisitHistory => (visit.as_slice(), 0.0),
                MapKind::ReadingsHistory => (readings.as_slice(), 0.0),
                MapKind::EnvironmentLayout => (maps.layout.as_slice(), 1.0),
            }
        };
        let mut data = Vec::with_capacity(cfg.input_size());
        for &kind in &cfg.assignment.local {
            let (map, pad) = select(kind);
            data.extend(local_window(map, h, w, center, n, pad)?);
        }
        for &kind in &cfg.assignment.global {
            let (map, _) = select(kind);
            data.extend(global_downsample(map, h, w, n)?);
        }
        out.push(ReducedObservation {
            n,
            n_maps: cfg.n_maps(),
            maps: data,
            embedding: embedding.to_vec(),
        });
    }
    Ok(out)
}

/// Single-agent variant of [`assemble_all`].
pub fn assemble_reduced(
    maps: &SharedMaps,
    positions: &[Cell],
    agent: usize,
    cfg: &ObsConfig,
    embedding: &[f32],
) -> Result<ReducedObservation> {
    let mut all = assemble_all(maps, positions, cfg, embedding)?;
    if agent >= all.len() {
        return Err(Error::Config(format!("agent {agent} out of range")));
    }
    Ok(all.swap_remove(agent))
}
