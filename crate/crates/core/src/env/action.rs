//! The 11-way discrete action space: 8 move directions, idle, and the two
//! declaration actions.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ACTION_COUNT: usize = 11;
pub const MOVE_DIRECTIONS: u8 = 8;

/// One agent action per step.
///
/// `Move(d)` with `d` in `1..=8` moves one cell along the angle
/// `2*pi*d/8` (counterclockwise from east, grid rows growing downward), so
/// d = 2 is north, d = 4 west, d = 6 south, d = 8 east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Move(u8),
    Idle,
    DeclareNonexistent,
    DeclareUnreachable,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Move(d) => {
                debug_assert!((1..=MOVE_DIRECTIONS).contains(&d));
                (d - 1) as usize
            }
            Action::Idle => 8,
            Action::DeclareNonexistent => 9,
            Action::DeclareUnreachable => 10,
        }
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        match idx {
            0..=7 => Ok(Action::Move(idx as u8 + 1)),
            8 => Ok(Action::Idle),
            9 => Ok(Action::DeclareNonexistent),
            10 => Ok(Action::DeclareUnreachable),
            _ => Err(Error::Contract(format!("action index {idx} out of range"))),
        }
    }

    pub fn is_move(self) -> bool {
        matches!(self, Action::Move(_))
    }

    /// (row delta, col delta) for a move direction per the 8-way angle table.
    pub fn move_delta(d: u8) -> (i64, i64) {
        match d {
            1 => (-1, 1),  // 45 deg, north-east
            2 => (-1, 0),  // 90 deg, north
            3 => (-1, -1), // 135 deg, north-west
            4 => (0, -1),  // 180 deg, west
            5 => (1, -1),  // 225 deg, south-west
            6 => (1, 0),   // 270 deg, south
            7 => (1, 1),   // 315 deg, south-east
            8 => (0, 1),   // 360 deg, east
            _ => unreachable!("direction {d} outside 1..=8"),
        }
    }

    /// Move action whose delta equals `(dr, dc)`, if any.
    pub fn from_delta(dr: i64, dc: i64) -> Option<Action> {
        (1..=MOVE_DIRECTIONS).find_map(|d| {
            if Action::move_delta(d) == (dr, dc) {
                Some(Action::Move(d))
            } else {
                None
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trips() {
        for idx in 0..ACTION_COUNT {
            let a = Action::from_index(idx).unwrap();
            assert_eq!(a.index(), idx);
        }
        assert!(Action::from_index(11).is_err());
    }

    #[test]
    fn deltas_match_eight_way_angles() {
        // Directions step around the compass; all 8 deltas distinct and unit
        // in Chebyshev norm.
        let mut seen = std::collections::HashSet::new();
        for d in 1..=8 {
            let (dr, dc) = Action::move_delta(d);
            assert_eq!(dr.abs().max(dc.abs()), 1);
            assert!(seen.insert((dr, dc)));
        }
        // Spot-check the cardinal points of theta = 2*pi*d/8.
        assert_eq!(Action::move_delta(2), (-1, 0));
        assert_eq!(Action::move_delta(4), (0, -1));
        assert_eq!(Action::move_delta(6), (1, 0));
        assert_eq!(Action::move_delta(8), (0, 1));
    }

    #[test]
    fn delta_lookup_inverts_move_delta() {
        for d in 1..=8 {
            let (dr, dc) = Action::move_delta(d);
            assert_eq!(Action::from_delta(dr, dc), Some(Action::Move(d)));
        }
        assert_eq!(Action::from_delta(0, 0), None);
        assert_eq!(Action::from_delta(2, 0), None);
    }
}
