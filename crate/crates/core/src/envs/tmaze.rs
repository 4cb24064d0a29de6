//! The T-Maze family: a corridor of length `L` whose treasure side (Up or
//! Down) is only revealed by the very first observation.
//!
//! Canonical orderings, fixed for input encodings:
//! actions `Right, Up, Left, Down`; observations `Up, Down, Corridor, Junction`.
//!
//! Cells are `(0,0) ... (L,0)` plus the two terminal arms `(L,1)` and `(L,-1)`.

use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::pomdp::{check_action, ActionDistribution, DiscretePomdp, Pomdp};

pub const RIGHT: usize = 0;
pub const UP: usize = 1;
pub const LEFT: usize = 2;
pub const DOWN: usize = 3;

const MOVES: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

pub const TREASURE_REWARD: f64 = 4.0;
pub const BOUNCE_REWARD: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TMazeParams {
    pub length: usize,
    pub stochasticity: f64,
    pub discount: f64,
}

impl TMazeParams {
    pub fn deterministic(length: usize) -> Self {
        Self {
            length,
            stochasticity: 0.0,
            discount: 0.98,
        }
    }

    pub fn stochastic(length: usize, stochasticity: f64) -> Self {
        Self {
            length,
            stochasticity,
            discount: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TMazeState {
    pub layout: Layout,
    pub x: i32,
    pub y: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Up = 0,
    Down = 1,
    Corridor = 2,
    Junction = 3,
}

/// The observed symbol plus the end-of-episode signal.
///
/// `Junction` is emitted both at `(L,0)` and on the terminal arms, so the
/// terminal flag is carried alongside the symbol; it is not part of the
/// network encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TMazeObs {
    pub symbol: Symbol,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct TMaze {
    params: TMazeParams,
}

impl TMaze {
    pub fn new(params: TMazeParams) -> Result<Self> {
        if params.length == 0 {
            return Err(Error::InvalidConfig {
                field: "length",
                reason: "corridor length must be at least 1",
            });
        }
        if !(0.0..=1.0).contains(&params.stochasticity) {
            return Err(Error::InvalidConfig {
                field: "stochasticity",
                reason: "must lie in [0, 1]",
            });
        }
        if !(0.0..1.0).contains(&params.discount) {
            return Err(Error::InvalidConfig {
                field: "discount",
                reason: "must lie in [0, 1)",
            });
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &TMazeParams {
        &self.params
    }

    pub fn length(&self) -> i32 {
        self.params.length as i32
    }

    pub fn initial_state(&self, layout: Layout) -> TMazeState {
        TMazeState { layout, x: 0, y: 0 }
    }

    fn in_maze(&self, x: i32, y: i32) -> bool {
        let l = self.length();
        (y == 0 && (0..=l).contains(&x)) || (x == l && (y == 1 || y == -1))
    }

    /// The deterministic move `f(s, a)`: bounces keep the position.
    pub fn apply_move(&self, state: &TMazeState, action: usize) -> TMazeState {
        if self.is_terminal(state) {
            return *state;
        }
        let (dx, dy) = MOVES[action];
        let (x, y) = (state.x + dx, state.y + dy);
        if self.in_maze(x, y) {
            TMazeState { x, y, ..*state }
        } else {
            *state
        }
    }

    pub fn observe(&self, state: &TMazeState) -> TMazeObs {
        let symbol = if state.x == 0 {
            match state.layout {
                Layout::Up => Symbol::Up,
                Layout::Down => Symbol::Down,
            }
        } else if state.x < self.length() {
            Symbol::Corridor
        } else {
            Symbol::Junction
        };
        TMazeObs {
            symbol,
            terminal: self.is_terminal(state),
        }
    }

    /// Number of non-terminal states, `2 (L + 1)`.
    pub fn num_non_terminal_states(&self) -> usize {
        2 * (self.params.length + 1)
    }
}

impl Pomdp for TMaze {
    type State = TMazeState;
    type Observation = TMazeObs;

    fn num_actions(&self) -> usize {
        4
    }

    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn observation_width(&self) -> usize {
        4
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> TMazeState {
        let layout = if rng.random::<f64>() < 0.5 {
            Layout::Up
        } else {
            Layout::Down
        };
        self.initial_state(layout)
    }

    fn sample_transition(&self, state: &TMazeState, action: usize, rng: &mut dyn RngCore) -> TMazeState {
        if self.is_terminal(state) {
            return *state;
        }
        let slip = rng.random::<f64>() < self.params.stochasticity;
        let taken = if slip { rng.random_range(0..4) } else { action };
        self.apply_move(state, taken)
    }

    fn reward(&self, state: &TMazeState, _action: usize, next: &TMazeState) -> f64 {
        if self.is_terminal(state) {
            0.0
        } else if self.is_terminal(next) {
            let treasure_side = match next.layout {
                Layout::Up => 1,
                Layout::Down => -1,
            };
            if next.y == treasure_side {
                TREASURE_REWARD
            } else {
                BOUNCE_REWARD
            }
        } else if state == next {
            BOUNCE_REWARD
        } else {
            0.0
        }
    }

    fn sample_observation(&self, state: &TMazeState, _rng: &mut dyn RngCore) -> TMazeObs {
        self.observe(state)
    }

    fn observation_likelihood(&self, obs: &TMazeObs, state: &TMazeState) -> f64 {
        if self.observe(state) == *obs {
            1.0
        } else {
            0.0
        }
    }

    fn is_terminal(&self, state: &TMazeState) -> bool {
        state.y != 0
    }

    fn is_terminal_observation(&self, obs: &TMazeObs) -> bool {
        obs.terminal
    }

    fn encode_observation(&self, obs: &TMazeObs, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[obs.symbol as usize] = 1.0;
    }

    fn exploration_policy(&self) -> ActionDistribution {
        tmaze_exploration_policy()
    }

    fn default_horizon(&self) -> Result<usize> {
        let e = tmaze_exploration_policy();
        tmaze_horizon(
            self.params.length,
            self.params.stochasticity,
            e.prob(RIGHT),
            e.prob(LEFT),
        )
    }

    fn step(&self, state: &TMazeState, action: usize, rng: &mut dyn RngCore) -> Result<(TMazeState, f64, TMazeObs)> {
        check_action(action, 4)?;
        let next = self.sample_transition(state, action, rng);
        Ok((next, self.reward(state, action, &next), self.observe(&next)))
    }
}

impl DiscretePomdp for TMaze {
    fn num_states(&self) -> usize {
        2 * (self.params.length + 3)
    }

    fn state_index(&self, state: &TMazeState) -> usize {
        let per_layout = self.params.length + 3;
        let cell = match state.y {
            0 => state.x as usize,
            1 => self.params.length + 1,
            _ => self.params.length + 2,
        };
        let layout = match state.layout {
            Layout::Up => 0,
            Layout::Down => 1,
        };
        layout * per_layout + cell
    }

    fn state_from_index(&self, index: usize) -> TMazeState {
        let per_layout = self.params.length + 3;
        let layout = if index / per_layout == 0 {
            Layout::Up
        } else {
            Layout::Down
        };
        let cell = index % per_layout;
        let l = self.length();
        let (x, y) = match cell {
            c if c <= self.params.length => (c as i32, 0),
            c if c == self.params.length + 1 => (l, 1),
            _ => (l, -1),
        };
        TMazeState { layout, x, y }
    }

    fn initial_probability(&self, index: usize) -> f64 {
        let s = self.state_from_index(index);
        if s.x == 0 && s.y == 0 {
            0.5
        } else {
            0.0
        }
    }

    fn transition_probabilities(&self, index: usize, action: usize, out: &mut Vec<(usize, f64)>) {
        let s = self.state_from_index(index);
        if self.is_terminal(&s) {
            out.push((index, 1.0));
            return;
        }
        let lambda = self.params.stochasticity;
        out.push((self.state_index(&self.apply_move(&s, action)), 1.0 - lambda));
        if lambda > 0.0 {
            for a in 0..4 {
                out.push((self.state_index(&self.apply_move(&s, a)), lambda / 4.0));
            }
        }
    }
}

/// Right with probability 1/2, every other move with 1/6.
pub fn tmaze_exploration_policy() -> ActionDistribution {
    ActionDistribution::new(alloc::vec![0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]).expect("valid distribution")
}

/// `ceil(L / ((1 - lambda)(r - l)))`: the number of steps after which the
/// expected exploratory displacement reaches the junction.
pub fn tmaze_horizon(length: usize, stochasticity: f64, right: f64, left: f64) -> Result<usize> {
    let drift = (1.0 - stochasticity) * (right - left);
    if !(drift > 0.0) {
        return Err(Error::UndefinedHorizon);
    }
    let ratio = length as f64 / drift;
    // absorb representation error such as 50 / (1/2 - 1/6) = 150.00000000000003
    let h = math::ceil(ratio - 1e-9 * ratio.max(1.0));
    Ok((h as usize).max(1))
}
