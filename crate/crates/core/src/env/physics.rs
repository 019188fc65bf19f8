//! Radiation count physics: inverse-square mean with per-obstacle
//! attenuation, Poisson-sampled detector readings.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::grid::{Cell, GridWorld};

/// Number of obstacle cells traversed by the discrete line from `a` to `b`,
/// endpoints excluded (Bresenham walk).
pub fn line_obstacle_count(grid: &GridWorld, a: Cell, b: Cell) -> usize {
    let (mut x0, mut y0) = (a.c as i64, a.r as i64);
    let (x1, y1) = (b.c as i64, b.r as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut hits = 0usize;
    loop {
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let cell = Cell::new(y0 as usize, x0 as usize);
        if grid.is_obstacle(cell) {
            hits += 1;
        }
    }
    hits
}

/// Expected counts per minute at `detector` for a source of strength `s` at
/// `source`: `s / max(d^2, cell^2) * exp(-mu * k)` with `d` in meters and `k`
/// the number of intervening obstacle cells. The distance is floored at one
/// cell size so the mean stays finite on the source cell.
pub fn cpm_mean(grid: &GridWorld, detector: Cell, source: Cell, s: f64) -> f64 {
    let d = grid.distance_m(detector, source);
    let d2 = (d * d).max(grid.cell_size_m * grid.cell_size_m);
    let k = line_obstacle_count(grid, detector, source);
    s / d2 * (-grid.mu * k as f64).exp()
}

/// Poisson-sampled reading; `source = None` (no target) reads zero.
pub fn sample_cpm<R: Rng>(
    grid: &GridWorld,
    detector: Cell,
    source: Option<(Cell, f64)>,
    rng: &mut R,
) -> u64 {
    let Some((src, s)) = source else {
        return 0;
    };
    let mean = cpm_mean(grid, detector, src, s);
    if mean <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(mean).expect("positive poisson mean");
    poisson.sample(rng) as u64
}
