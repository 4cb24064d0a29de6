//! Small fully observable decision processes with closed-form values, used as
//! learning oracles.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::pomdp::{DiscretePomdp, Pomdp};

/// A chain `0 - 1 - ... - (n-1)` where the observation is the state.
///
/// Actions: `0` moves left, `1` moves right (walls bounce). Landing in the
/// last state pays 1. No state is terminal.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    states: usize,
    discount: f64,
    horizon: usize,
}

impl ChainMdp {
    pub fn new(states: usize, discount: f64, horizon: usize) -> Result<Self> {
        if states < 2 {
            return Err(Error::InvalidConfig {
                field: "states",
                reason: "a chain needs at least two states",
            });
        }
        Ok(Self {
            states,
            discount,
            horizon,
        })
    }

    pub fn next_state(&self, s: usize, action: usize) -> usize {
        match action {
            0 => s.saturating_sub(1),
            _ => (s + 1).min(self.states - 1),
        }
    }

    pub fn num_chain_states(&self) -> usize {
        self.states
    }
}

impl Pomdp for ChainMdp {
    type State = usize;
    type Observation = usize;

    fn num_actions(&self) -> usize {
        2
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn observation_width(&self) -> usize {
        self.states
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize {
        rng.random_range(0..self.states)
    }

    fn sample_transition(&self, s: &usize, action: usize, _rng: &mut dyn RngCore) -> usize {
        self.next_state(*s, action)
    }

    fn reward(&self, _s: &usize, _a: usize, next: &usize) -> f64 {
        if *next == self.states - 1 {
            1.0
        } else {
            0.0
        }
    }

    fn sample_observation(&self, s: &usize, _rng: &mut dyn RngCore) -> usize {
        *s
    }

    fn observation_likelihood(&self, obs: &usize, s: &usize) -> f64 {
        if obs == s {
            1.0
        } else {
            0.0
        }
    }

    fn is_terminal(&self, _: &usize) -> bool {
        false
    }

    fn is_terminal_observation(&self, _: &usize) -> bool {
        false
    }

    fn encode_observation(&self, obs: &usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[*obs] = 1.0;
    }

    fn default_horizon(&self) -> Result<usize> {
        Ok(self.horizon)
    }
}

impl DiscretePomdp for ChainMdp {
    fn num_states(&self) -> usize {
        self.states
    }

    fn state_index(&self, s: &usize) -> usize {
        *s
    }

    fn state_from_index(&self, index: usize) -> usize {
        index
    }

    fn initial_probability(&self, _index: usize) -> f64 {
        1.0 / self.states as f64
    }

    fn transition_probabilities(&self, index: usize, action: usize, out: &mut Vec<(usize, f64)>) {
        out.push((self.next_state(index, action), 1.0));
    }
}

/// One state, one action, constant reward: every Q-value equals `r / (1 - gamma)`.
#[derive(Debug, Clone)]
pub struct SingleStateMdp {
    reward: f64,
    discount: f64,
    horizon: usize,
}

impl SingleStateMdp {
    pub fn new(reward: f64, discount: f64, horizon: usize) -> Self {
        Self {
            reward,
            discount,
            horizon,
        }
    }
}

impl Pomdp for SingleStateMdp {
    type State = ();
    type Observation = ();

    fn num_actions(&self) -> usize {
        1
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn observation_width(&self) -> usize {
        1
    }

    fn sample_initial(&self, _rng: &mut dyn RngCore) {}

    fn sample_transition(&self, _s: &(), _a: usize, _rng: &mut dyn RngCore) {}

    fn reward(&self, _s: &(), _a: usize, _n: &()) -> f64 {
        self.reward
    }

    fn sample_observation(&self, _s: &(), _rng: &mut dyn RngCore) {}

    fn observation_likelihood(&self, _o: &(), _s: &()) -> f64 {
        1.0
    }

    fn is_terminal(&self, _: &()) -> bool {
        false
    }

    fn is_terminal_observation(&self, _: &()) -> bool {
        false
    }

    fn encode_observation(&self, _obs: &(), out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn default_horizon(&self) -> Result<usize> {
        Ok(self.horizon)
    }
}

impl DiscretePomdp for SingleStateMdp {
    fn num_states(&self) -> usize {
        1
    }

    fn state_index(&self, _: &()) -> usize {
        0
    }

    fn state_from_index(&self, _: usize) {}

    fn initial_probability(&self, _: usize) -> f64 {
        1.0
    }

    fn transition_probabilities(&self, _: usize, _: usize, out: &mut Vec<(usize, f64)>) {
        out.push((0, 1.0));
    }
}
