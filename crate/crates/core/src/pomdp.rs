//! Partially observable decision processes, histories and trajectory generation.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// A probability distribution over a finite action set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution(Vec<f64>);

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("action distribution"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "action distribution",
                reason: "probabilities must be finite and nonnegative",
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig {
                field: "action distribution",
                reason: "probabilities must sum to one",
            });
        }
        Ok(Self(probs))
    }

    pub fn uniform(num_actions: usize) -> Self {
        Self(vec![1.0 / num_actions as f64; num_actions])
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.0.get(action).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse-CDF draw; consumes exactly one uniform variate.
    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the rounding gap at the top of the CDF
        self.0.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// A POMDP `(S, A, O, p0, T, R, O, gamma)` given through samplers and densities.
///
/// Implementations must be immutable after construction; all randomness comes
/// from the generator passed to each call. Terminal states self-loop with zero
/// reward, and terminality is visible from the observation.
pub trait Pomdp {
    type State: Clone + Debug;
    type Observation: Clone + Debug;

    fn num_actions(&self) -> usize;

    fn discount(&self) -> f64;

    /// Number of reals produced by [`Pomdp::encode_observation`].
    fn observation_width(&self) -> usize;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Self::State;

    fn sample_transition(&self, state: &Self::State, action: usize, rng: &mut dyn RngCore) -> Self::State;

    fn reward(&self, state: &Self::State, action: usize, next: &Self::State) -> f64;

    fn sample_observation(&self, state: &Self::State, rng: &mut dyn RngCore) -> Self::Observation;

    /// Probability (discrete) or density (continuous) of `obs` in `state`.
    fn observation_likelihood(&self, obs: &Self::Observation, state: &Self::State) -> f64;

    fn is_terminal(&self, state: &Self::State) -> bool;

    fn is_terminal_observation(&self, obs: &Self::Observation) -> bool;

    /// Writes the network encoding of `obs` into `out` (length `observation_width`).
    fn encode_observation(&self, obs: &Self::Observation, out: &mut [f64]);

    fn exploration_policy(&self) -> ActionDistribution {
        ActionDistribution::uniform(self.num_actions())
    }

    /// Truncation horizon used when a configuration leaves it unspecified.
    fn default_horizon(&self) -> Result<usize>;

    /// One environment step: transition, reward, then observation of the new state.
    fn step(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(Self::State, f64, Self::Observation)> {
        check_action(action, self.num_actions())?;
        let next = self.sample_transition(state, action, rng);
        let reward = self.reward(state, action, &next);
        let obs = self.sample_observation(&next, rng);
        Ok((next, reward, obs))
    }
}

/// A POMDP with a finite, enumerable state space and explicit transition table.
pub trait DiscretePomdp: Pomdp {
    fn num_states(&self) -> usize;

    fn state_index(&self, state: &Self::State) -> usize;

    fn state_from_index(&self, index: usize) -> Self::State;

    fn initial_probability(&self, index: usize) -> f64;

    /// Appends `(next_index, probability)` pairs; indices may repeat.
    fn transition_probabilities(&self, index: usize, action: usize, out: &mut Vec<(usize, f64)>);
}

pub(crate) fn check_action(action: usize, num_actions: usize) -> Result<()> {
    if action < num_actions {
        Ok(())
    } else {
        Err(Error::InvalidAction { action, num_actions })
    }
}

/// The interleaved history `o0, a0, o1, ..., a_{t-1}, o_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuf<O> {
    observations: Vec<O>,
    actions: Vec<usize>,
}

impl<O: Clone> HistoryBuf<O> {
    pub fn new(first: O) -> Self {
        Self {
            observations: vec![first],
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: usize, obs: O) {
        self.actions.push(action);
        self.observations.push(obs);
    }

    /// Number of actions `t` in `eta_{0:t}`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn observations(&self) -> &[O] {
        &self.observations
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn last_observation(&self) -> &O {
        self.observations.last().expect("history holds at least o0")
    }

    /// The prefix `eta_{0:t}`.
    pub fn prefix(&self, t: usize) -> Self {
        assert!(
            t <= self.len(),
            "prefix length {t} beyond history length {}",
            self.len()
        );
        Self {
            observations: self.observations[..=t].to_vec(),
            actions: self.actions[..t].to_vec(),
        }
    }

    /// Applies `f` to every observation, keeping actions.
    pub fn map<U: Clone>(&self, f: impl FnMut(&O) -> U) -> HistoryBuf<U> {
        HistoryBuf {
            observations: self.observations.iter().map(f).collect(),
            actions: self.actions.clone(),
        }
    }
}

/// Network input `x_k = (one-hot(a_{k-1}), encode(o_k))`, zero action block for `k = 0`.
pub fn encode_input<P: Pomdp + ?Sized>(
    model: &P,
    prev_action: Option<usize>,
    obs: &P::Observation,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; input_width(model)];
    write_input(model, prev_action, obs, &mut out)?;
    Ok(out)
}

pub fn input_width<P: Pomdp + ?Sized>(model: &P) -> usize {
    model.num_actions() + model.observation_width()
}

fn write_input<P: Pomdp + ?Sized>(
    model: &P,
    prev_action: Option<usize>,
    obs: &P::Observation,
    out: &mut [f64],
) -> Result<()> {
    let na = model.num_actions();
    out[..na].iter_mut().for_each(|v| *v = 0.0);
    if let Some(a) = prev_action {
        check_action(a, na)?;
        out[a] = 1.0;
    }
    model.encode_observation(obs, &mut out[na..]);
    Ok(())
}

/// Encodes a whole history as a row-major `(t + 1) x input_width` block.
pub fn encode_history<P: Pomdp + ?Sized>(model: &P, history: &HistoryBuf<P::Observation>) -> Result<Vec<f64>> {
    let width = input_width(model);
    let mut out = vec![0.0; width * history.observations().len()];
    for (k, (obs, row)) in history
        .observations()
        .iter()
        .zip(out.chunks_exact_mut(width))
        .enumerate()
    {
        let prev = if k == 0 { None } else { Some(history.actions()[k - 1]) };
        write_input(model, prev, obs, row)?;
    }
    Ok(out)
}

/// A behaviour policy mapping histories to actions.
///
/// Policies are called once per step with a history that grows by exactly one
/// `(action, observation)` pair between calls within an episode, and with a
/// fresh single-observation history at the start of each episode.
pub trait Policy<O> {
    fn act(&mut self, history: &HistoryBuf<O>, rng: &mut dyn RngCore) -> usize;
}

impl<O, F> Policy<O> for F
where
    F: FnMut(&HistoryBuf<O>, &mut dyn RngCore) -> usize,
{
    fn act(&mut self, history: &HistoryBuf<O>, rng: &mut dyn RngCore) -> usize {
        self(history, rng)
    }
}

/// A generated trajectory. `states` holds the simulator's true states and is
/// meant for oracle checks only; learners consume `history`.
#[derive(Debug, Clone)]
pub struct Episode<S, O> {
    pub history: HistoryBuf<O>,
    pub rewards: Vec<f64>,
    pub states: Vec<S>,
    /// Number of actions taken before stopping.
    pub truncated_at: usize,
    /// Whether the last observation is terminal.
    pub terminated: bool,
}

impl<S, O: Clone> Episode<S, O> {
    pub fn discounted_return(&self, discount: f64) -> f64 {
        let mut g = 0.0;
        let mut scale = 1.0;
        for r in &self.rewards {
            g += scale * r;
            scale *= discount;
        }
        g
    }

    /// Number of time steps `t` eligible for sampling: the non-terminal
    /// steps `0..truncated_at` (for a truncated episode this is `0..H`).
    pub fn sampleable_steps(&self) -> usize {
        self.truncated_at
    }
}

/// Runs `policy` from a fresh initial state for at most `horizon` actions,
/// stopping early at the first terminal observation.
pub fn rollout<P, Pol>(
    model: &P,
    policy: &mut Pol,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<Episode<P::State, P::Observation>>
where
    P: Pomdp + ?Sized,
    Pol: Policy<P::Observation> + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidConfig {
            field: "horizon",
            reason: "must be at least one",
        });
    }
    let mut state = model.sample_initial(rng);
    let o0 = model.sample_observation(&state, rng);
    let mut terminated = model.is_terminal_observation(&o0);
    let mut history = HistoryBuf::new(o0);
    let mut rewards = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(state.clone());
    while !terminated && history.len() < horizon {
        let action = policy.act(&history, rng);
        let (next, reward, obs) = model.step(&state, action, rng)?;
        terminated = model.is_terminal_observation(&obs);
        history.push(action, obs);
        rewards.push(reward);
        states.push(next.clone());
        state = next;
    }
    Ok(Episode {
        truncated_at: history.len(),
        history,
        rewards,
        states,
        terminated,
    })
}

/// Mean discounted return `1/I * sum_i sum_t gamma^t r_t^i`.
pub fn empirical_return<S, O: Clone>(episodes: &[Episode<S, O>], discount: f64) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::Empty("episode list"));
    }
    let total: f64 = episodes.iter().map(|e| e.discounted_return(discount)).sum();
    Ok(total / episodes.len() as f64)
}

/// One replay entry `(eta_{0:t}, a_t, r_t, o_{t+1}, eta_{0:t+1})`.
///
/// The history lives in a shared, immutable episode record; a transition only
/// stores its prefix length, so `eta_{0:t+1}` is the same record read one step
/// further.
#[derive(Debug, Clone)]
pub struct TransitionRecord<O> {
    pub episode: Arc<EncodedHistory<O>>,
    pub t: usize,
    pub reward: f64,
    pub terminal: bool,
}

impl<O: Clone> TransitionRecord<O> {
    pub fn action(&self) -> usize {
        self.episode.history.actions()[self.t]
    }

    pub fn next_observation(&self) -> &O {
        &self.episode.history.observations()[self.t + 1]
    }

    pub fn history_prefix(&self) -> HistoryBuf<O> {
        self.episode.history.prefix(self.t)
    }

    pub fn next_history(&self) -> HistoryBuf<O> {
        self.episode.history.prefix(self.t + 1)
    }

    /// Encoded inputs `x_0..=x_t`.
    pub fn inputs(&self) -> &[f64] {
        self.episode.inputs_until(self.t)
    }

    /// Encoded inputs `x_0..=x_{t+1}`.
    pub fn next_inputs(&self) -> &[f64] {
        self.episode.inputs_until(self.t + 1)
    }
}

/// A history together with its network encoding.
#[derive(Debug, Clone)]
pub struct EncodedHistory<O> {
    pub history: HistoryBuf<O>,
    pub inputs: Vec<f64>,
    pub width: usize,
}

impl<O: Clone> EncodedHistory<O> {
    pub fn new<P: Pomdp<Observation = O> + ?Sized>(model: &P, history: HistoryBuf<O>) -> Result<Self> {
        let inputs = encode_history(model, &history)?;
        Ok(Self {
            history,
            inputs,
            width: input_width(model),
        })
    }

    pub fn inputs_until(&self, t: usize) -> &[f64] {
        &self.inputs[..(t + 1) * self.width]
    }
}

/// Splits an episode into its prefix transitions.
pub fn transitions<P>(
    model: &P,
    episode: &Episode<P::State, P::Observation>,
) -> Result<Vec<TransitionRecord<P::Observation>>>
where
    P: Pomdp + ?Sized,
{
    let record = Arc::new(EncodedHistory::new(model, episode.history.clone())?);
    Ok((0..episode.truncated_at)
        .map(|t| TransitionRecord {
            episode: Arc::clone(&record),
            t,
            reward: episode.rewards[t],
            terminal: model.is_terminal_observation(&episode.history.observations()[t + 1]),
        })
        .collect())
}
