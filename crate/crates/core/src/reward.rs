//! BFS shortest-path distances on the obstacle grid and the shaped team
//! reward. Training-time feedback only — agents never observe any of this.

use std::collections::VecDeque;

use crate::env::grid::{Cell, GridWorld};
use crate::{Error, Result};

/// Marker for cells with no path to the target.
pub const UNREACHABLE: u32 = u32::MAX;

/// Per-cell hop distance from the target under 8-connected unit-cost moves.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub h: usize,
    pub w: usize,
    d: Vec<u32>,
}

impl DistanceField {
    #[inline]
    pub fn at(&self, cell: Cell) -> u32 {
        self.d[cell.r * self.w + cell.c]
    }

    pub fn values(&self) -> &[u32] {
        &self.d
    }
}

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Unit-cost BFS over free cells from `target`; obstacle cells and
/// disconnected regions read [`UNREACHABLE`].
pub fn bfs_distance_field(grid: &GridWorld, target: Cell) -> Result<DistanceField> {
    if target.r >= grid.h || target.c >= grid.w {
        return Err(Error::Config("target outside grid".into()));
    }
    if grid.is_obstacle(target) {
        return Err(Error::Config("target placed on an obstacle cell".into()));
    }
    let mut d = vec![UNREACHABLE; grid.h * grid.w];
    d[grid.idx(target)] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(target);
    while let Some(cell) = queue.pop_front() {
        let dist = d[grid.idx(cell)];
        for (dr, dc) in NEIGHBORS {
            if let Some(next) = grid.step_from(cell, dr, dc) {
                let idx = grid.idx(next);
                if d[idx] == UNREACHABLE {
                    d[idx] = dist + 1;
                    queue.push_back(next);
                }
            }
        }
    }
    Ok(DistanceField { h: grid.h, w: grid.w, d })
}

/// Shortest 8-connected path from `from` to `to` over free cells, inclusive
/// of both endpoints. `None` when disconnected.
pub fn bfs_path(grid: &GridWorld, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    if grid.is_obstacle(from) || grid.is_obstacle(to) {
        return None;
    }
    if from == to {
        return Some(vec![from]);
    }
    let mut prev: Vec<Option<Cell>> = vec![None; grid.h * grid.w];
    let mut seen = vec![false; grid.h * grid.w];
    seen[grid.idx(from)] = true;
    let mut queue = VecDeque::new();
    queue.push_back(from);
    while let Some(cell) = queue.pop_front() {
        for (dr, dc) in NEIGHBORS {
            if let Some(next) = grid.step_from(cell, dr, dc) {
                let idx = grid.idx(next);
                if !seen[idx] {
                    seen[idx] = true;
                    prev[idx] = Some(cell);
                    if next == to {
                        let mut path = vec![next];
                        let mut cur = cell;
                        loop {
                            path.push(cur);
                            match prev[grid.idx(cur)] {
                                Some(p) => cur = p,
                                None => break,
                            }
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(next);
                }
            }
        }
    }
    None
}

/// Shaped team reward delivered identically to every agent.
///
/// `-q` when a majority declaration this step was incorrect; otherwise
/// `-v + 1` when the team's nearest agent got closer to the target
/// (`min_d < prev_min_d`), else `-v - 1`. `v` is the number of agents that
/// took a movement action. With no reachable target both distances stay
/// [`UNREACHABLE`], so the third branch applies.
pub fn team_reward(incorrect_majority_flags: bool, v: usize, min_d: u32, prev_min_d: u32, q: f32) -> f32 {
    if incorrect_majority_flags {
        -q
    } else if min_d < prev_min_d {
        -(v as f32) + 1.0
    } else {
        -(v as f32) - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: unit-cost Dijkstra with a binary heap.
    fn dijkstra_field(grid: &GridWorld, target: Cell) -> Vec<u32> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let mut d = vec![UNREACHABLE; grid.h * grid.w];
        let mut heap = BinaryHeap::new();
        d[grid.idx(target)] = 0;
        heap.push(Reverse((0u32, target.r, target.c)));
        while let Some(Reverse((dist, r, c))) = heap.pop() {
            let cell = Cell::new(r, c);
            if dist > d[grid.idx(cell)] {
                continue;
            }
            for (dr, dc) in NEIGHBORS {
                if let Some(next) = grid.step_from(cell, dr, dc) {
                    let alt = dist + 1;
                    if alt < d[grid.idx(next)] {
                        d[grid.idx(next)] = alt;
                        heap.push(Reverse((alt, next.r, next.c)));
                    }
                }
            }
        }
        d
    }

    #[test]
    fn empty_grid_distance_is_chebyshev() {
        let grid = GridWorld::empty(9, 9, 10.0, 0.1).unwrap();
        let target = Cell::new(4, 4);
        let field = bfs_distance_field(&grid, target).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let cheb = (r as i64 - 4).abs().max((c as i64 - 4).abs()) as u32;
                assert_eq!(field.at(Cell::new(r, c)), cheb);
            }
        }
    }

    #[test]
    fn walled_target_leaves_everything_unreachable() {
        let mut mask = vec![false; 25];
        for (r, c) in [(1, 1), (1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2), (3, 3)] {
            mask[r * 5 + c] = true;
        }
        let grid = GridWorld::new(5, 5, 10.0, 0.1, mask).unwrap();
        let field = bfs_distance_field(&grid, Cell::new(2, 2)).unwrap();
        for cell in grid.free_cells() {
            if cell != Cell::new(2, 2) {
                assert_eq!(field.at(cell), UNREACHABLE, "{cell:?} should be cut off");
            }
        }
    }

    #[test]
    fn target_on_obstacle_is_config_error() {
        let mut mask = vec![false; 25];
        mask[12] = true;
        let grid = GridWorld::new(5, 5, 10.0, 0.1, mask).unwrap();
        assert!(bfs_distance_field(&grid, Cell::new(2, 2)).is_err());
    }

    #[test]
    fn matches_dijkstra_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let mut mask = vec![false; 400];
            for cell in mask.iter_mut() {
                *cell = rng.gen::<f64>() < 0.25;
            }
            let grid = GridWorld::new(20, 20, 10.0, 0.1, mask).unwrap();
            let target = loop {
                let cell = Cell::new(rng.gen_range(0..20), rng.gen_range(0..20));
                if grid.is_free(cell) {
                    break cell;
                }
            };
            let field = bfs_distance_field(&grid, target).unwrap();
            assert_eq!(field.values(), dijkstra_field(&grid, target).as_slice());
        }
    }

    #[test]
    fn neighbor_distances_differ_by_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mask = vec![false; 400];
        for cell in mask.iter_mut() {
            *cell = rng.gen::<f64>() < 0.2;
        }
        let grid = GridWorld::new(20, 20, 10.0, 0.1, mask).unwrap();
        let target = grid.free_cells().next().unwrap();
        let field = bfs_distance_field(&grid, target).unwrap();
        for cell in grid.free_cells() {
            let d = field.at(cell);
            if d == UNREACHABLE {
                continue;
            }
            for (dr, dc) in NEIGHBORS {
                if let Some(next) = grid.step_from(cell, dr, dc) {
                    let nd = field.at(next);
                    if nd != UNREACHABLE {
                        assert!(nd + 1 >= d && d + 1 >= nd);
                    }
                }
            }
        }
    }

    #[test]
    fn reward_branches_follow_the_shaping_rule() {
        // Wrong majority declaration dominates everything.
        assert_eq!(team_reward(true, 3, 5, 9, 500.0), -500.0);
        // Nearest agent moved closer: -v + 1.
        assert_eq!(team_reward(false, 3, 4, 5, 500.0), -2.0);
        // No improvement: -v - 1.
        assert_eq!(team_reward(false, 0, 5, 5, 500.0), -1.0);
        // Unreachable/nonexistent: both infinite, third branch.
        assert_eq!(team_reward(false, 2, UNREACHABLE, UNREACHABLE, 500.0), -3.0);
    }

    #[test]
    fn reward_codomain_is_exactly_the_table() {
        let q = 500.0f32;
        for v in 0..=5usize {
            for (d, p) in [(3u32, 5u32), (5, 5), (7, 5), (UNREACHABLE, UNREACHABLE)] {
                for flags in [false, true] {
                    let r = team_reward(flags, v, d, p, q);
                    let legal = r == -q || r == -(v as f32) + 1.0 || r == -(v as f32) - 1.0;
                    assert!(legal, "reward {r} outside codomain");
                }
            }
        }
    }

    #[test]
    fn path_is_shortest_and_connected() {
        let grid = GridWorld::empty(10, 10, 10.0, 0.1).unwrap();
        let path = bfs_path(&grid, Cell::new(0, 0), Cell::new(9, 9)).unwrap();
        assert_eq!(path.len(), 10); // Chebyshev distance 9 => 10 cells
        for pair in path.windows(2) {
            let dr = (pair[1].r as i64 - pair[0].r as i64).abs();
            let dc = (pair[1].c as i64 - pair[0].c as i64).abs();
            assert!(dr.max(dc) == 1);
        }
    }
}
