//! Grid geometry: cells, obstacle mask, 8-neighborhood movement.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row/column cell coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub r: usize,
    pub c: usize,
}

impl Cell {
    pub fn new(r: usize, c: usize) -> Self {
        Self { r, c }
    }
}

/// The searched area as an `h x w` grid with an obstacle mask.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub h: usize,
    pub w: usize,
    /// Meters per cell side.
    pub cell_size_m: f64,
    /// Per-obstacle attenuation factor.
    pub mu: f64,
    obstacles: Vec<bool>,
}

impl GridWorld {
    pub fn new(h: usize, w: usize, cell_size_m: f64, mu: f64, obstacles: Vec<bool>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Config("grid dims must be positive".into()));
        }
        if obstacles.len() != h * w {
            return Err(Error::Config(format!(
                "obstacle mask has {} cells, grid needs {}",
                obstacles.len(),
                h * w
            )));
        }
        if cell_size_m <= 0.0 {
            return Err(Error::Config("cell size must be positive".into()));
        }
        Ok(Self { h, w, cell_size_m, mu, obstacles })
    }

    pub fn empty(h: usize, w: usize, cell_size_m: f64, mu: f64) -> Result<Self> {
        Self::new(h, w, cell_size_m, mu, vec![false; h * w])
    }

    #[inline]
    pub fn idx(&self, cell: Cell) -> usize {
        cell.r * self.w + cell.c
    }

    #[inline]
    pub fn in_bounds(&self, r: i64, c: i64) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.h && (c as usize) < self.w
    }

    #[inline]
    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacles[self.idx(cell)]
    }

    #[inline]
    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_obstacle(cell)
    }

    pub fn obstacle_mask(&self) -> &[bool] {
        &self.obstacles
    }

    /// Destination of a unit move, or `None` if it leaves the grid or hits an
    /// obstacle.
    pub fn step_from(&self, cell: Cell, dr: i64, dc: i64) -> Option<Cell> {
        let r = cell.r as i64 + dr;
        let c = cell.c as i64 + dc;
        if !self.in_bounds(r, c) {
            return None;
        }
        let dest = Cell::new(r as usize, c as usize);
        if self.is_obstacle(dest) {
            return None;
        }
        Some(dest)
    }

    /// Euclidean center-to-center distance in meters.
    pub fn distance_m(&self, a: Cell, b: Cell) -> f64 {
        let dr = a.r as f64 - b.r as f64;
        let dc = a.c as f64 - b.c as f64;
        self.cell_size_m * (dr * dr + dc * dc).sqrt()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.h).flat_map(move |r| {
            (0..self.w).filter_map(move |c| {
                let cell = Cell::new(r, c);
                self.is_free(cell).then_some(cell)
            })
        })
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| o).count()
    }
}
