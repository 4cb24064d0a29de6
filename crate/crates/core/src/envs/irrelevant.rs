//! Augmentation of a POMDP with `d` action-independent Gaussian random-walk
//! coordinates that are observed with unit noise and never affect rewards.
//!
//! `s^I_0 ~ N(0, I)`, `s^I_{t+1} ~ N(s^I_t, I)`, `o^I_t ~ N(s^I_t, I)`.

use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{exp, pow};
use crate::pomdp::{ActionDistribution, DiscretePomdp, HistoryBuf, Pomdp};

/// The irrelevant process on its own, as a single-action POMDP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianWalk {
    dim: usize,
}

impl GaussianWalk {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig {
                field: "irrelevant_dims",
                reason: "must be at least one",
            });
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn noise(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.dim).map(|_| StandardNormal.sample(rng)).collect()
    }
}

impl Pomdp for GaussianWalk {
    type State = Vec<f64>;
    type Observation = Vec<f64>;

    fn num_actions(&self) -> usize {
        1
    }

    fn discount(&self) -> f64 {
        0.0
    }

    fn observation_width(&self) -> usize {
        self.dim
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.noise(rng)
    }

    fn sample_transition(&self, state: &Vec<f64>, _action: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let n = self.noise(rng);
        state.iter().zip(n).map(|(s, e)| s + e).collect()
    }

    fn reward(&self, _: &Vec<f64>, _: usize, _: &Vec<f64>) -> f64 {
        0.0
    }

    fn sample_observation(&self, state: &Vec<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        let n = self.noise(rng);
        state.iter().zip(n).map(|(s, e)| s + e).collect()
    }

    fn observation_likelihood(&self, obs: &Vec<f64>, state: &Vec<f64>) -> f64 {
        let sq: f64 = obs.iter().zip(state).map(|(o, s)| (o - s) * (o - s)).sum();
        exp(-0.5 * sq) / pow(2.0 * core::f64::consts::PI, 0.5 * self.dim as f64)
    }

    fn is_terminal(&self, _: &Vec<f64>) -> bool {
        false
    }

    fn is_terminal_observation(&self, _: &Vec<f64>) -> bool {
        false
    }

    fn encode_observation(&self, obs: &Vec<f64>, out: &mut [f64]) {
        out.copy_from_slice(obs);
    }

    fn default_horizon(&self) -> Result<usize> {
        Err(Error::UndefinedHorizon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState<S> {
    pub inner: S,
    pub irrelevant: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedObs<O> {
    pub inner: O,
    pub irrelevant: Vec<f64>,
}

/// Product of an inner POMDP and a [`GaussianWalk`].
///
/// The inner process is sampled first at every call, so for a deterministic
/// inner POMDP its trajectory does not depend on the walk.
#[derive(Debug, Clone)]
pub struct Augmented<P> {
    inner: P,
    walk: GaussianWalk,
}

/// Adds `dims` irrelevant random-walk coordinates to `inner`.
pub fn augment_irrelevant<P: Pomdp>(inner: P, dims: usize) -> Result<Augmented<P>> {
    Ok(Augmented {
        inner,
        walk: GaussianWalk::new(dims)?,
    })
}

impl<P: Pomdp> Augmented<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn walk(&self) -> &GaussianWalk {
        &self.walk
    }

    /// The inner POMDP's view of an augmented history.
    pub fn relevant_history(&self, history: &HistoryBuf<AugmentedObs<P::Observation>>) -> HistoryBuf<P::Observation> {
        history.map(|o| o.inner.clone())
    }

    /// The irrelevant observation sequence `o^I_0 .. o^I_t`.
    pub fn irrelevant_observations<'a>(
        &self,
        history: &'a HistoryBuf<AugmentedObs<P::Observation>>,
    ) -> impl Iterator<Item = &'a [f64]> + 'a {
        history.observations().iter().map(|o| o.irrelevant.as_slice())
    }
}

impl<P: Pomdp> Pomdp for Augmented<P> {
    type State = AugmentedState<P::State>;
    type Observation = AugmentedObs<P::Observation>;

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    fn observation_width(&self) -> usize {
        self.inner.observation_width() + self.walk.dim
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Self::State {
        let inner = self.inner.sample_initial(rng);
        AugmentedState {
            inner,
            irrelevant: self.walk.sample_initial(rng),
        }
    }

    fn sample_transition(&self, state: &Self::State, action: usize, rng: &mut dyn RngCore) -> Self::State {
        let inner = self.inner.sample_transition(&state.inner, action, rng);
        AugmentedState {
            inner,
            irrelevant: self.walk.sample_transition(&state.irrelevant, 0, rng),
        }
    }

    fn reward(&self, state: &Self::State, action: usize, next: &Self::State) -> f64 {
        self.inner.reward(&state.inner, action, &next.inner)
    }

    fn sample_observation(&self, state: &Self::State, rng: &mut dyn RngCore) -> Self::Observation {
        let inner = self.inner.sample_observation(&state.inner, rng);
        AugmentedObs {
            inner,
            irrelevant: self.walk.sample_observation(&state.irrelevant, rng),
        }
    }

    fn observation_likelihood(&self, obs: &Self::Observation, state: &Self::State) -> f64 {
        self.inner.observation_likelihood(&obs.inner, &state.inner)
            * self.walk.observation_likelihood(&obs.irrelevant, &state.irrelevant)
    }

    fn is_terminal(&self, state: &Self::State) -> bool {
        self.inner.is_terminal(&state.inner)
    }

    fn is_terminal_observation(&self, obs: &Self::Observation) -> bool {
        self.inner.is_terminal_observation(&obs.inner)
    }

    fn encode_observation(&self, obs: &Self::Observation, out: &mut [f64]) {
        let w = self.inner.observation_width();
        self.inner.encode_observation(&obs.inner, &mut out[..w]);
        out[w..].copy_from_slice(&obs.irrelevant);
    }

    fn exploration_policy(&self) -> ActionDistribution {
        self.inner.exploration_policy()
    }

    fn default_horizon(&self) -> Result<usize> {
        self.inner.default_horizon()
    }
}

/// Marker so generic code can ask whether the relevant part is discrete.
pub trait HasDiscreteInner {
    type Inner: DiscretePomdp;
    fn discrete_inner(&self) -> &Self::Inner;
}

impl<P: DiscretePomdp> HasDiscreteInner for Augmented<P> {
    type Inner = P;
    fn discrete_inner(&self) -> &P {
        &self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::tmaze::{TMaze, TMazeParams, RIGHT};
    use crate::math::sqrt;
    use crate::pomdp::{empirical_return, rollout};
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn walk_variance_grows_linearly() {
        let walk = GaussianWalk::new(1).unwrap();
        let mut rng = seeded(21);
        let n = 20_000;
        let steps = 6;
        let mut sums = vec![0.0; steps];
        let mut sq = vec![0.0; steps];
        for _ in 0..n {
            let mut s = walk.sample_initial(&mut rng);
            for t in 0..steps {
                sums[t] += s[0];
                sq[t] += s[0] * s[0];
                s = walk.sample_transition(&s, 0, &mut rng);
            }
        }
        for t in 0..steps {
            let m = sums[t] / n as f64;
            let var = sq[t] / n as f64 - m * m;
            let expected = 1.0 + t as f64;
            // 4 standard errors of a sample variance
            let tol = 4.0 * expected * sqrt(2.0 / n as f64);
            assert!((var - expected).abs() < tol, "t={t} var={var}");
        }
    }

    #[test]
    fn irrelevant_observations_are_unbiased() {
        let walk = GaussianWalk::new(2).unwrap();
        let mut rng = seeded(22);
        let s = vec![0.7, -1.3];
        let n = 50_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let o = walk.sample_observation(&s, &mut rng);
            acc[0] += o[0];
            acc[1] += o[1];
        }
        assert!((acc[0] / n as f64 - 0.7).abs() < 0.02);
        assert!((acc[1] / n as f64 + 1.3).abs() < 0.02);
    }

    #[test]
    fn augmentation_leaves_returns_unchanged() {
        let base = TMaze::new(TMazeParams::deterministic(4)).unwrap();
        let aug = augment_irrelevant(base.clone(), 3).unwrap();
        let policy_plain =
            |h: &HistoryBuf<_>, _: &mut dyn RngCore| optimal_tmaze_action(h.observations()[0], h.len(), 4);
        let policy_aug = |h: &HistoryBuf<AugmentedObs<_>>, _: &mut dyn RngCore| {
            optimal_tmaze_action(h.observations()[0].inner, h.len(), 4)
        };
        let mut r1 = seeded(3);
        let mut r2 = seeded(4);
        let plain: Vec<_> = (0..20)
            .map(|_| rollout(&base, &mut { policy_plain }, 10, &mut r1).unwrap())
            .collect();
        let augmented: Vec<_> = (0..20)
            .map(|_| rollout(&aug, &mut { policy_aug }, 10, &mut r2).unwrap())
            .collect();
        let j1 = empirical_return(&plain, 0.98).unwrap();
        let j2 = empirical_return(&augmented, 0.98).unwrap();
        assert!((j1 - 4.0 * pow(0.98, 4.0)).abs() < 1e-12);
        assert!((j1 - j2).abs() < 1e-12);
        assert_eq!(aug.observation_width(), 4 + 3);
    }

    fn optimal_tmaze_action(first: crate::envs::tmaze::TMazeObs, t: usize, length: usize) -> usize {
        use crate::envs::tmaze::{Symbol, DOWN, UP};
        if t < length {
            RIGHT
        } else if first.symbol == Symbol::Up {
            UP
        } else {
            DOWN
        }
    }
}
