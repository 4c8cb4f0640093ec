//! The stochastic 5x5 GridWorld testbed.
//!
//! Each cell's reward is zero with probability 1/2 and a standard-normal draw
//! otherwise. An action moves in its direction with probability 1/2; with
//! probability 1/2 the move is redrawn from the cell's disturbance
//! distribution. Moves off the grid leave the agent in place. Episodes last
//! 10 steps and start in cell (3, 3).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::rng;

pub const WIDTH: usize = 5;
pub const HEIGHT: usize = 5;
pub const HORIZON: usize = 10;
pub const NUM_ACTIONS: usize = 4;
/// 1-based (row, column) of the start cell.
pub const START_CELL: (usize, usize) = (3, 3);

/// Move directions, in action-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; NUM_ACTIONS] = [Move::Up, Move::Down, Move::Left, Move::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    /// Row-major reward per cell.
    pub reward_map: Vec<f64>,
    /// Row-major, one distribution over the four moves per cell.
    pub disturbance: Vec<[f64; NUM_ACTIONS]>,
    /// 1-based (row, column).
    pub start_cell: (usize, usize),
    pub seed: u64,
}

/// Row-major index of a 1-based (row, column) cell.
pub fn cell_index(row: usize, col: usize) -> usize {
    (row - 1) * WIDTH + (col - 1)
}

impl GridWorldSpec {
    pub fn generate(seed: u64) -> Self {
        let mut r = rng::stream(rng::derive_label(seed, "gridworld"));
        let cells = WIDTH * HEIGHT;
        let reward_map = (0..cells)
            .map(|_| if r.random_bool(0.5) { 0.0 } else { r.sample(StandardNormal) })
            .collect();
        let disturbance = (0..cells)
            .map(|_| {
                let mut w = [0.0; NUM_ACTIONS];
                for x in w.iter_mut() {
                    // Strictly positive weights.
                    *x = 1.0 - r.random::<f64>();
                }
                let z: f64 = w.iter().sum();
                w.map(|x| x / z)
            })
            .collect();
        Self { width: WIDTH, height: HEIGHT, reward_map, disturbance, start_cell: START_CELL, seed }
    }

    fn neighbor(&self, cell: usize, mv: Move) -> usize {
        let (row, col) = ((cell / self.width) as isize, (cell % self.width) as isize);
        let (dr, dc) = mv.delta();
        let (nr, nc) = (row + dr, col + dc);
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            cell
        } else {
            nr as usize * self.width + nc as usize
        }
    }

    pub fn to_mdp(&self) -> Result<TabularMdp> {
        let cells = self.width * self.height;
        let mut transition = vec![0.0; cells * NUM_ACTIONS * cells];
        for s in 0..cells {
            for (a, _) in Move::ALL.iter().enumerate() {
                let row = &mut transition[(s * NUM_ACTIONS + a) * cells..(s * NUM_ACTIONS + a + 1) * cells];
                for (b, &mv) in Move::ALL.iter().enumerate() {
                    let p = 0.5 * self.disturbance[s][b] + if a == b { 0.5 } else { 0.0 };
                    row[self.neighbor(s, mv)] += p;
                }
            }
        }
        let mut initial = vec![0.0; cells];
        initial[(self.start_cell.0 - 1) * self.width + (self.start_cell.1 - 1)] = 1.0;
        Ok(TabularMdp::new(cells, NUM_ACTIONS, HORIZON, transition, self.reward_map.clone(), initial)?
            .with_generator_seed(self.seed))
    }
}

/// The GridWorld MDP for `seed`; a pure function of the seed.
pub fn make_gridworld(seed: u64) -> Result<TabularMdp> {
    GridWorldSpec::generate(seed).to_mdp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{sample_trajectory, PolicyParams};

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(make_gridworld(0).unwrap(), make_gridworld(0).unwrap());
        assert_ne!(make_gridworld(0).unwrap(), make_gridworld(1).unwrap());
    }

    #[test]
    fn shape() {
        let m = make_gridworld(3).unwrap();
        assert_eq!((m.num_states(), m.num_actions(), m.horizon()), (25, 4, 10));
        assert_eq!(m.initial_dist()[cell_index(3, 3)], 1.0);
    }

    #[test]
    fn trajectories_start_in_center() {
        let m = make_gridworld(5).unwrap();
        let p = PolicyParams::uniform(&m);
        let mut r = rng::stream(1);
        for _ in 0..50 {
            assert_eq!(sample_trajectory(&m, &p, &mut r).unwrap().steps[0].0, cell_index(3, 3));
        }
    }

    #[test]
    fn corner_moves_stay_in_place() {
        let spec = GridWorldSpec::generate(2);
        let corner = cell_index(1, 1);
        assert_eq!(spec.neighbor(corner, Move::Up), corner);
        assert_eq!(spec.neighbor(corner, Move::Left), corner);
        assert_eq!(spec.neighbor(corner, Move::Right), cell_index(1, 2));
        assert_eq!(spec.neighbor(corner, Move::Down), cell_index(2, 1));
    }

    #[test]
    fn intended_move_gets_at_least_half() {
        let spec = GridWorldSpec::generate(4);
        let m = spec.to_mdp().unwrap();
        let s = cell_index(3, 3);
        let up = m.transition_row(s, 0)[cell_index(2, 3)];
        assert!((up - (0.5 + 0.5 * spec.disturbance[s][0])).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_fraction_is_one_half() {
        let seeds = 10_000;
        let mut zeros = 0usize;
        for seed in 0..seeds {
            zeros += GridWorldSpec::generate(seed).reward_map.iter().filter(|r| **r == 0.0).count();
        }
        let frac = zeros as f64 / (seeds as f64 * 25.0);
        assert!((frac - 0.5).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn spec_serializes() {
        let spec = GridWorldSpec::generate(8);
        let text = serde_json::to_string(&spec).unwrap();
        let back: GridWorldSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
