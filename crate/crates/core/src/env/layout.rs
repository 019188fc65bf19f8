//! Random obstacle layout generation: axis-aligned wall segments and
//! rectangular blocks with door gaps, plus sealed regions for unreachable
//! targets. Obstacle density is sampled per episode.

use rand::Rng;

use super::grid::Cell;

/// Caps the obstacle fraction so layouts stay traversable.
const MAX_OBSTACLE_FRAC: f64 = 0.35;

/// Generates an `h x w` obstacle mask. `density` in `[0, 1]` scales how many
/// structures are drawn; density 0 yields an all-free map.
pub fn gen_layout<R: Rng>(h: usize, w: usize, density: f64, rng: &mut R) -> Vec<bool> {
    let mut mask = vec![false; h * w];
    let max_walls = ((h + w) as f64 / 8.0).ceil() as usize;
    let max_rects = (h.min(w) as f64 / 8.0).ceil() as usize;
    let n_walls = (density * max_walls as f64).round() as usize;
    let n_rects = (density * max_rects as f64).round() as usize;
    let budget = (MAX_OBSTACLE_FRAC * (h * w) as f64) as usize;

    for _ in 0..n_walls {
        if count(&mask) >= budget {
            break;
        }
        add_wall(&mut mask, h, w, rng);
    }
    for _ in 0..n_rects {
        if count(&mask) >= budget {
            break;
        }
        add_rect(&mut mask, h, w, rng);
    }
    mask
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&o| o).count()
}

fn add_wall<R: Rng>(mask: &mut [bool], h: usize, w: usize, rng: &mut R) {
    let horizontal = rng.gen::<bool>();
    let (span, lanes) = if horizontal { (w, h) } else { (h, w) };
    if span < 3 || lanes == 0 {
        return;
    }
    let len = rng.gen_range(3..=(span / 2).max(3).min(span));
    let lane = rng.gen_range(0..lanes);
    let start = rng.gen_range(0..=span - len);
    // Most walls get a 1-2 cell door gap somewhere along their length.
    let door = if rng.gen::<f64>() < 0.7 {
        let door_w = rng.gen_range(1..=2.min(len));
        let door_at = rng.gen_range(0..=len - door_w);
        Some((door_at, door_w))
    } else {
        None
    };
    for k in 0..len {
        if let Some((at, dw)) = door {
            if k >= at && k < at + dw {
                continue;
            }
        }
        let (r, c) = if horizontal { (lane, start + k) } else { (start + k, lane) };
        mask[r * w + c] = true;
    }
}

fn add_rect<R: Rng>(mask: &mut [bool], h: usize, w: usize, rng: &mut R) {
    let max_side = (h.min(w) / 5).max(2);
    let rh = rng.gen_range(2..=max_side);
    let rw = rng.gen_range(2..=max_side);
    if rh >= h || rw >= w {
        return;
    }
    let r0 = rng.gen_range(0..h - rh);
    let c0 = rng.gen_range(0..w - rw);
    for r in r0..r0 + rh {
        for c in c0..c0 + rw {
            mask[r * w + c] = true;
        }
    }
}

/// Stamps a closed one-cell-thick rectangular ring onto `mask` and returns
/// the interior cells (cleared free). Every interior cell is disconnected
/// from the outside under 8-way movement, since all of its neighbors are
/// ring cells.
pub fn add_sealed_region<R: Rng>(
    mask: &mut [bool],
    h: usize,
    w: usize,
    rng: &mut R,
) -> Option<Vec<Cell>> {
    if h < 4 || w < 4 {
        return None;
    }
    let max_inner = (h.min(w) / 4).clamp(1, 3);
    let ih = rng.gen_range(1..=max_inner);
    let iw = rng.gen_range(1..=max_inner);
    // Ring occupies [r0-1, r0+ih] x [c0-1, c0+iw]; keep it fully in-grid.
    let r0 = rng.gen_range(1..h - ih);
    let c0 = rng.gen_range(1..w - iw);
    for r in r0 - 1..=r0 + ih {
        for c in c0 - 1..=c0 + iw {
            let inside = r >= r0 && r < r0 + ih && c >= c0 && c < c0 + iw;
            mask[r * w + c] = !inside;
        }
    }
    let interior = (r0..r0 + ih)
        .flat_map(|r| (c0..c0 + iw).map(move |c| Cell::new(r, c)))
        .collect();
    Some(interior)
}
