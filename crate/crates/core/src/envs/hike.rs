//! Mountain Hike: a noisy walk on `[-1, 1]^2` towards the summit at
//! `(0.8, 0.8)`, observed only through a noisy altimeter.
//!
//! Actions `Forward, Left, Backward, Right` are the displacements
//! `(0, 0.1), (-0.1, 0), (0, -0.1), (0.1, 0)` expressed in the agent's frame and
//! rotated by its orientation `c` (`0°, 90°, 180°, 270°` = East, North, West,
//! South). The varying variant draws `c` uniformly at reset.
//!
//! # Altitude surface
//!
//! With `d(x) = |x - (0.8, 0.8)|^2`:
//!
//! ```text
//! h(x) = -( 0.5 d(x) + (1 - exp(-d(x) / 0.02)) (1.2 g1(x) + 0.8 g2(x)) )
//! g1(x) = exp(-u^2 / (2 * 0.15^2) - v^2 / (2 * 0.45^2)),
//!         u = (x1 + x2) / sqrt 2 + 0.1 sqrt 2,  v = (x2 - x1) / sqrt 2
//! g2(x) = exp(-(x1 - 0.55)^2 / (2 * 0.12^2) - (x2 - 0.05)^2 / (2 * 0.35^2))
//! ```
//!
//! `g1` is a trench centred at `(-0.1, -0.1)` lying across the diagonal and
//! `g2` a second pit east of it, so the best path bends around the trench
//! instead of following the straight line. The factor `1 - exp(-d / 0.02)`
//! vanishes at the summit, which makes `h <= 0` with `h = 0` exactly at
//! `(0.8, 0.8)`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, sq, sqrt};
use crate::pomdp::Pomdp;

pub const FORWARD: usize = 0;
pub const LEFT: usize = 1;
pub const BACKWARD: usize = 2;
pub const RIGHT: usize = 3;

const MOVES: [[f64; 2]; 4] = [[0.0, 0.1], [-0.1, 0.0], [0.0, -0.1], [0.1, 0.0]];

pub const SUMMIT: [f64; 2] = [0.8, 0.8];
pub const START: [f64; 2] = [-0.8, -0.8];
pub const SUMMIT_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HikeParams {
    pub observation_std: f64,
    pub transition_std: f64,
    pub discount: f64,
    pub varying_orientation: bool,
    pub horizon: usize,
}

impl HikeParams {
    pub fn fixed() -> Self {
        Self {
            observation_std: 0.1,
            transition_std: 0.05,
            discount: 0.99,
            varying_orientation: false,
            horizon: 80,
        }
    }

    pub fn varying() -> Self {
        Self {
            varying_orientation: true,
            horizon: 160,
            ..Self::fixed()
        }
    }
}

/// Orientation as a quarter-turn count: 0 = East, 1 = North, 2 = West, 3 = South.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HikeState {
    pub pos: [f64; 2],
    pub orientation: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HikeObs {
    pub altitude: f64,
    pub terminal: bool,
}

/// `R(c)` for `c` a multiple of 90°, as exact integer entries.
pub fn rotation(orientation: u8) -> [[f64; 2]; 2] {
    match orientation % 4 {
        0 => [[1.0, 0.0], [0.0, 1.0]],
        1 => [[0.0, -1.0], [1.0, 0.0]],
        2 => [[-1.0, 0.0], [0.0, -1.0]],
        _ => [[0.0, 1.0], [-1.0, 0.0]],
    }
}

pub fn rotate(orientation: u8, v: [f64; 2]) -> [f64; 2] {
    let r = rotation(orientation);
    [r[0][0] * v[0] + r[0][1] * v[1], r[1][0] * v[0] + r[1][1] * v[1]]
}

/// Closest point of `[-1, 1]^2`.
pub fn clamp_to_box(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)]
}

pub fn altitude(p: [f64; 2]) -> f64 {
    let d = sq(p[0] - SUMMIT[0]) + sq(p[1] - SUMMIT[1]);
    let sqrt2 = sqrt(2.0);
    let u = (p[0] + p[1]) / sqrt2 + 0.1 * sqrt2;
    let v = (p[1] - p[0]) / sqrt2;
    let g1 = exp(-u * u / (2.0 * 0.15 * 0.15) - v * v / (2.0 * 0.45 * 0.45));
    let g2 = exp(-sq(p[0] - 0.55) / (2.0 * 0.12 * 0.12) - sq(p[1] - 0.05) / (2.0 * 0.35 * 0.35));
    let gate = 1.0 - exp(-d / 0.02);
    -(0.5 * d + gate * (1.2 * g1 + 0.8 * g2))
}

fn gaussian_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    exp(-0.5 * z * z) / (std * sqrt(2.0 * core::f64::consts::PI))
}

#[derive(Debug, Clone)]
pub struct MountainHike {
    params: HikeParams,
}

impl MountainHike {
    pub fn new(params: HikeParams) -> Result<Self> {
        if !(params.observation_std > 0.0) || !(params.transition_std >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "observation_std",
                reason: "standard deviations must be positive",
            });
        }
        if !(0.0..1.0).contains(&params.discount) {
            return Err(Error::InvalidConfig {
                field: "discount",
                reason: "must lie in [0, 1)",
            });
        }
        if params.horizon == 0 {
            return Err(Error::InvalidConfig {
                field: "horizon",
                reason: "must be at least one",
            });
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &HikeParams {
        &self.params
    }

    pub fn initial(&self, rng: &mut dyn RngCore) -> HikeState {
        let orientation = if self.params.varying_orientation {
            rng.random_range(0..4u8)
        } else {
            1
        };
        HikeState {
            pos: START,
            orientation,
        }
    }

    /// Noise-free displacement `clamp(x + R(c) a)`.
    pub fn mean_move(&self, state: &HikeState, action: usize) -> [f64; 2] {
        let d = rotate(state.orientation, MOVES[action]);
        clamp_to_box([state.pos[0] + d[0], state.pos[1] + d[1]])
    }
}

impl Pomdp for MountainHike {
    type State = HikeState;
    type Observation = HikeObs;

    fn num_actions(&self) -> usize {
        4
    }

    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn observation_width(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> HikeState {
        self.initial(rng)
    }

    fn sample_transition(&self, state: &HikeState, action: usize, rng: &mut dyn RngCore) -> HikeState {
        if self.is_terminal(state) {
            return *state;
        }
        let d = rotate(state.orientation, MOVES[action]);
        let n0: f64 = StandardNormal.sample(rng);
        let n1: f64 = StandardNormal.sample(rng);
        let sigma = self.params.transition_std;
        HikeState {
            pos: clamp_to_box([state.pos[0] + d[0] + sigma * n0, state.pos[1] + d[1] + sigma * n1]),
            orientation: state.orientation,
        }
    }

    fn reward(&self, state: &HikeState, _action: usize, next: &HikeState) -> f64 {
        if self.is_terminal(state) {
            0.0
        } else {
            altitude(next.pos)
        }
    }

    fn sample_observation(&self, state: &HikeState, rng: &mut dyn RngCore) -> HikeObs {
        let n: f64 = StandardNormal.sample(rng);
        HikeObs {
            altitude: altitude(state.pos) + self.params.observation_std * n,
            terminal: self.is_terminal(state),
        }
    }

    fn observation_likelihood(&self, obs: &HikeObs, state: &HikeState) -> f64 {
        if obs.terminal != self.is_terminal(state) {
            return 0.0;
        }
        gaussian_pdf(obs.altitude, altitude(state.pos), self.params.observation_std)
    }

    fn is_terminal(&self, state: &HikeState) -> bool {
        let d = sq(state.pos[0] - SUMMIT[0]) + sq(state.pos[1] - SUMMIT[1]);
        d < SUMMIT_RADIUS * SUMMIT_RADIUS
    }

    fn is_terminal_observation(&self, obs: &HikeObs) -> bool {
        obs.terminal
    }

    fn encode_observation(&self, obs: &HikeObs, out: &mut [f64]) {
        out[0] = obs.altitude;
    }

    fn default_horizon(&self) -> Result<usize> {
        Ok(self.params.horizon)
    }
}
