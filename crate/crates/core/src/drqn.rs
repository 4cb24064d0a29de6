//! Deep recurrent Q-learning: epsilon-greedy episodes, a FIFO replay buffer
//! of history transitions, a periodically refreshed target network and Adam
//! updates through backpropagation through time.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, CellKind, RnnSpec, RnnStack, RnnState};
use crate::pomdp::{
    encode_input, input_width, rollout, transitions, ActionDistribution, Episode, HistoryBuf, Policy, Pomdp,
    TransitionRecord,
};
use crate::rng::{derive_seed, label, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrqnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub buffer_capacity: usize,
    /// Target refresh period `C`, in episodes.
    pub target_period: usize,
    /// Gradient steps `I` after each episode.
    pub gradient_steps: usize,
    pub epsilon: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Episode budget `E`.
    pub episodes: usize,
    /// Truncation horizon; the environment's default when absent.
    pub horizon: Option<usize>,
    /// Checkpoint every this many episodes.
    pub cadence: usize,
}

impl Default for DrqnConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            buffer_capacity: 8192,
            target_period: 10,
            gradient_steps: 10,
            epsilon: 0.2,
            batch_size: 32,
            adam: AdamConfig::default(),
            episodes: 2000,
            horizon: None,
            cadence: 50,
        }
    }
}

impl DrqnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("buffer_capacity", self.buffer_capacity),
            ("target_period", self.target_period),
            ("batch_size", self.batch_size),
            ("cadence", self.cadence),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig {
                    field,
                    reason: "must be positive",
                });
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig {
                field: "epsilon",
                reason: "must lie in [0, 1]",
            });
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::InvalidConfig {
                field: "adam.learning_rate",
                reason: "must be positive",
            });
        }
        if self.horizon == Some(0) {
            return Err(Error::InvalidConfig {
                field: "horizon",
                reason: "must be at least one",
            });
        }
        Ok(())
    }

    pub fn rnn_spec<P: Pomdp + ?Sized>(&self, model: &P, kind: CellKind) -> RnnSpec {
        RnnSpec {
            kind,
            input: input_width(model),
            hidden: self.hidden,
            layers: self.layers,
            outputs: model.num_actions(),
        }
    }

    pub fn resolve_horizon<P: Pomdp + ?Sized>(&self, model: &P) -> Result<usize> {
        match self.horizon {
            Some(h) => Ok(h),
            None => model.default_horizon(),
        }
    }
}

/// Bounded FIFO store of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<O> {
    capacity: usize,
    items: VecDeque<TransitionRecord<O>>,
}

impl<O: Clone> ReplayBuffer<O> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, record: TransitionRecord<O>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(record);
    }

    pub fn get(&self, i: usize) -> Option<&TransitionRecord<O>> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord<O>> {
        self.items.iter()
    }

    /// `n` distinct records chosen uniformly, or `None` when fewer are stored.
    pub fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<&TransitionRecord<O>>> {
        if self.items.len() < n {
            return None;
        }
        let mut rng = rng;
        Some(
            index::sample(&mut rng, self.items.len(), n)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

/// Index of the largest value, lowest index on ties.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a draw from `exploration`, otherwise greedy.
pub fn select_action(q: &[f64], epsilon: f64, exploration: &ActionDistribution, rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    if u < epsilon {
        exploration.sample(rng)
    } else {
        greedy_action(q)
    }
}

/// The epsilon-greedy policy of a recurrent Q-network, carrying its state
/// across calls within an episode.
pub struct EpsilonGreedy<'a, P: Pomdp + ?Sized> {
    model: &'a P,
    net: &'a RnnStack,
    epsilon: f64,
    exploration: ActionDistribution,
    state: RnnState,
}

impl<'a, P: Pomdp + ?Sized> EpsilonGreedy<'a, P> {
    pub fn new(model: &'a P, net: &'a RnnStack, epsilon: f64, exploration: ActionDistribution) -> Self {
        Self {
            model,
            net,
            epsilon,
            exploration,
            state: net.initial_state(),
        }
    }

    pub fn greedy(model: &'a P, net: &'a RnnStack) -> Self {
        let exploration = model.exploration_policy();
        Self::new(model, net, 0.0, exploration)
    }

    fn advance(&mut self, history: &HistoryBuf<P::Observation>) -> Vec<f64> {
        if history.is_empty() {
            self.state = self.net.initial_state();
        }
        let prev = history.actions().last().copied();
        let x = encode_input(self.model, prev, history.last_observation()).expect("actions come from this policy");
        self.net
            .step(&mut self.state, &x)
            .expect("input width matches the network");
        self.net.state_q_values(&self.state)
    }
}

impl<P: Pomdp + ?Sized> Policy<P::Observation> for EpsilonGreedy<'_, P> {
    fn act(&mut self, history: &HistoryBuf<P::Observation>, rng: &mut dyn RngCore) -> usize {
        let q = self.advance(history);
        select_action(&q, self.epsilon, &self.exploration, rng)
    }
}

/// Bellman targets `r + gamma max_a Q_target(eta_{0:t+1}, a)`, or `r` when
/// `o_{t+1}` is terminal.
pub fn compute_targets<O: Clone>(batch: &[&TransitionRecord<O>], target: &RnnStack, discount: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("transition batch"));
    }
    batch
        .iter()
        .map(|tr| {
            if tr.terminal || discount == 0.0 {
                Ok(tr.reward)
            } else {
                let q = target.q_values(tr.next_inputs())?;
                Ok(tr.reward + discount * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
        })
        .collect()
}

/// Loss `sum_b (y_b - Q(eta_b, a_b))^2` and its gradient for fixed targets.
pub fn loss_and_gradient<O: Clone>(
    batch: &[&TransitionRecord<O>],
    targets: &[f64],
    net: &RnnStack,
    grad: &mut [f64],
) -> Result<f64> {
    let arch = &net.arch;
    let mut loss = 0.0;
    let mut dq = vec![0.0; arch.spec().outputs];
    for (tr, &y) in batch.iter().zip(targets) {
        let inputs = tr.inputs();
        let trace = net.unroll(inputs)?;
        let last = trace.steps() - 1;
        let q = arch.q_values(&net.params, &trace, last);
        let a = tr.action();
        let diff = q[a] - y;
        loss += diff * diff;
        dq.iter_mut().for_each(|v| *v = 0.0);
        dq[a] = 2.0 * diff;
        arch.backward(&net.params, inputs, &trace, &[(last, &dq)], grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("q-learning loss"));
    }
    Ok(loss)
}

/// One minibatch update. Returns `None` without touching anything when the
/// buffer holds fewer than `batch_size` transitions.
pub fn train_step<O: Clone>(
    buffer: &ReplayBuffer<O>,
    net: &mut RnnStack,
    adam: &mut Adam,
    target: &RnnStack,
    discount: f64,
    batch_size: usize,
    rng: &mut dyn RngCore,
) -> Result<Option<f64>> {
    let Some(batch) = buffer.sample(batch_size, rng) else {
        return Ok(None);
    };
    let targets = compute_targets(&batch, target, discount)?;
    let mut grad = vec![0.0; net.params.len()];
    let loss = loss_and_gradient(&batch, &targets, net, &mut grad)?;
    adam.step(&mut net.params, &grad)?;
    Ok(Some(loss))
}

/// A parameter snapshot after `episode` training episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub episode: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DrqnRun {
    pub spec: RnnSpec,
    pub checkpoints: Vec<Checkpoint>,
    /// Mean loss of the updates after each episode (`NaN` when none ran).
    pub losses: Vec<f64>,
}

impl DrqnRun {
    pub fn network(&self, index: usize) -> RnnStack {
        RnnStack::from_params(self.spec, self.checkpoints[index].params.clone()).expect("checkpoint matches its spec")
    }

    pub fn final_network(&self) -> RnnStack {
        self.network(self.checkpoints.len() - 1)
    }
}

/// Runs the full training loop and keeps every checkpoint.
pub fn drqn_run<P: Pomdp + ?Sized>(model: &P, config: &DrqnConfig, kind: CellKind, seed: u64) -> Result<DrqnRun> {
    let mut checkpoints = Vec::new();
    let (spec, losses) = drqn_run_with(model, config, kind, seed, &mut |c: &Checkpoint| {
        checkpoints.push(c.clone());
        Ok(())
    })?;
    Ok(DrqnRun {
        spec,
        checkpoints,
        losses,
    })
}

/// Training loop that hands each checkpoint to `on_checkpoint` as it is made:
/// after 0 episodes, every `cadence` episodes, and after the last one.
pub fn drqn_run_with<P: Pomdp + ?Sized>(
    model: &P,
    config: &DrqnConfig,
    kind: CellKind,
    seed: u64,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<(RnnSpec, Vec<f64>)> {
    config.validate()?;
    let horizon = config.resolve_horizon(model)?;
    let spec = config.rnn_spec(model, kind);
    let mut init_rng = seeded(derive_seed(seed, &[label("drqn-init")]));
    let mut rng = seeded(derive_seed(seed, &[label("drqn-run")]));
    let mut net = RnnStack::new(spec, &mut init_rng)?;
    let mut adam = Adam::new(config.adam, net.params.len());
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut target = net.clone();
    let exploration = model.exploration_policy();
    let discount = model.discount();
    let mut losses = Vec::with_capacity(config.episodes);
    on_checkpoint(&Checkpoint {
        episode: 0,
        params: net.params.clone(),
    })?;
    for e in 0..config.episodes {
        if e % config.target_period == 0 {
            target.params.copy_from_slice(&net.params);
        }
        let episode = {
            let mut policy = EpsilonGreedy::new(model, &net, config.epsilon, exploration.clone());
            rollout(model, &mut policy, horizon, &mut rng)?
        };
        for tr in transitions(model, &episode)? {
            buffer.push(tr);
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for _ in 0..config.gradient_steps {
            if let Some(l) = train_step(
                &buffer,
                &mut net,
                &mut adam,
                &target,
                discount,
                config.batch_size,
                &mut rng,
            )? {
                total += l;
                count += 1;
            }
        }
        losses.push(if count > 0 { total / count as f64 } else { f64::NAN });
        let done = e + 1;
        if done % config.cadence == 0 || done == config.episodes {
            on_checkpoint(&Checkpoint {
                episode: done,
                params: net.params.clone(),
            })?;
        }
    }
    Ok((spec, losses))
}

/// Greedy rollouts of `net`; returns the episodes.
pub fn greedy_episodes<P: Pomdp + ?Sized>(
    model: &P,
    net: &RnnStack,
    horizon: usize,
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Episode<P::State, P::Observation>>> {
    let mut policy = EpsilonGreedy::greedy(model, net);
    (0..count).map(|_| rollout(model, &mut policy, horizon, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::toy::{ChainMdp, SingleStateMdp};
    use crate::pomdp::EncodedHistory;
    use alloc::sync::Arc;

    fn record(reward: f64, terminal: bool) -> TransitionRecord<()> {
        let model = SingleStateMdp::new(1.0, 0.9, 5);
        let mut h = HistoryBuf::new(());
        h.push(0, ());
        TransitionRecord {
            episode: Arc::new(EncodedHistory::new(&model, h).unwrap()),
            t: 0,
            reward,
            terminal,
        }
    }

    fn tiny_net(outputs: usize, rng: &mut dyn RngCore) -> RnnStack {
        RnnStack::new(
            RnnSpec {
                kind: CellKind::Gru,
                input: 2,
                hidden: 3,
                layers: 1,
                outputs,
            },
            rng,
        )
        .unwrap()
    }

    #[test]
    fn buffer_is_fifo_and_bounded() {
        let mut b = ReplayBuffer::new(3);
        for r in 0..5 {
            b.push(record(r as f64, false));
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        let mut rng = seeded(1);
        assert!(b.sample(4, &mut rng).is_none());
        assert_eq!(b.sample(3, &mut rng).unwrap().len(), 3);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(greedy_action(&[1.0, 3.0, 2.0, 3.0]), 1);
        let mut rng = seeded(2);
        let explore = ActionDistribution::uniform(4);
        assert_eq!(select_action(&[1.0, 3.0, 2.0, 3.0], 0.0, &explore, &mut rng), 1);
    }

    #[test]
    fn epsilon_mixture_frequencies() {
        let mut rng = seeded(3);
        let explore = ActionDistribution::uniform(4);
        let n = 100_000;
        let greedy = (0..n)
            .filter(|_| select_action(&[0.0, 0.0, 5.0, 0.0], 0.2, &explore, &mut rng) == 2)
            .count();
        assert!((greedy as f64 / n as f64 - 0.85).abs() < 0.01);
        let tailored = ActionDistribution::new(vec![0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]).unwrap();
        let right = (0..n)
            .filter(|_| select_action(&[0.0, 9.0, 0.0, 0.0], 1.0, &tailored, &mut rng) == 0)
            .count();
        assert!((right as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn terminal_and_undiscounted_targets() {
        let mut rng = seeded(4);
        let target = tiny_net(1, &mut rng);
        let t = record(4.0, true);
        let n = record(1.0, false);
        assert_eq!(compute_targets(&[&t], &target, 0.98).unwrap(), vec![4.0]);
        assert_eq!(compute_targets(&[&n], &target, 0.0).unwrap(), vec![1.0]);
        let q = target.q_values(n.next_inputs()).unwrap()[0];
        let y = compute_targets(&[&n], &target, 0.98).unwrap()[0];
        assert!((y - (1.0 + 0.98 * q)).abs() < 1e-15);
        assert!(compute_targets::<()>(&[], &target, 0.9).is_err());
    }

    #[test]
    fn target_uses_the_max_over_actions() {
        let mut rng = seeded(5);
        let mut target = tiny_net(2, &mut rng);
        // zero the network and set the head bias to (0.5, 1.5)
        target.params.iter_mut().for_each(|v| *v = 0.0);
        let n = target.params.len();
        target.params[n - 2] = 0.5;
        target.params[n - 1] = 1.5;
        let tr = record(1.0, false);
        let y = compute_targets(&[&tr], &target, 0.98).unwrap()[0];
        assert!((y - 2.47).abs() < 1e-12);
    }

    #[test]
    fn loss_at_fixed_point_is_zero() {
        let mut rng = seeded(6);
        let net = tiny_net(1, &mut rng);
        let tr = record(0.0, false);
        let q = net.q_values(tr.inputs()).unwrap()[0];
        let mut grad = vec![0.0; net.params.len()];
        let loss = loss_and_gradient(&[&tr], &[q], &net, &mut grad).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        let loss = loss_and_gradient(&[&tr], &[q + 0.5], &net, &mut grad).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
    }

    #[test]
    fn underfull_buffer_skips_training() {
        let mut rng = seeded(7);
        let mut net = tiny_net(1, &mut rng);
        let before = net.params.clone();
        let target = net.clone();
        let mut adam = Adam::new(AdamConfig::default(), net.params.len());
        let mut buffer = ReplayBuffer::new(10);
        buffer.push(record(1.0, false));
        let r = train_step(&buffer, &mut net, &mut adam, &target, 0.9, 2, &mut rng).unwrap();
        assert!(r.is_none());
        assert_eq!(net.params, before);
    }

    #[test]
    fn zero_episodes_gives_initial_checkpoint_only() {
        let m = ChainMdp::new(3, 0.9, 5).unwrap();
        let cfg = DrqnConfig {
            episodes: 0,
            ..DrqnConfig::default()
        };
        let run = drqn_run(&m, &cfg, CellKind::Gru, 1).unwrap();
        assert_eq!(run.checkpoints.len(), 1);
        assert_eq!(run.checkpoints[0].episode, 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let m = ChainMdp::new(3, 0.9, 5).unwrap();
        let cfg = DrqnConfig {
            episodes: 12,
            cadence: 5,
            hidden: 4,
            batch_size: 4,
            ..DrqnConfig::default()
        };
        let a = drqn_run(&m, &cfg, CellKind::Lstm, 9).unwrap();
        let b = drqn_run(&m, &cfg, CellKind::Lstm, 9).unwrap();
        assert_eq!(a.checkpoints, b.checkpoints);
        let eps: Vec<usize> = a.checkpoints.iter().map(|c| c.episode).collect();
        assert_eq!(eps, vec![0, 5, 10, 12]);
        assert_ne!(a.checkpoints[0].params, a.checkpoints[3].params);
    }

    #[test]
    fn config_validation() {
        assert!(DrqnConfig::default().validate().is_ok());
        let bad = DrqnConfig {
            epsilon: 1.5,
            ..DrqnConfig::default()
        };
        assert_eq!(
            bad.validate(),
            Err(Error::InvalidConfig {
                field: "epsilon",
                reason: "must lie in [0, 1]"
            })
        );
        let bad = DrqnConfig {
            batch_size: 0,
            ..DrqnConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
