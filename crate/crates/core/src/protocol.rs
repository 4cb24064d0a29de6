//! The measurement protocol: joint sampling of hidden states and beliefs,
//! return estimation, information estimates per belief kind and the
//! behaviour-noise sweep.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::belief::{filter_history, particle_filter_final, GaussianBelief, KalmanFilter, ParticleSet};
use crate::drqn::{greedy_episodes, EpsilonGreedy};
use crate::envs::hike::MountainHike;
use crate::envs::irrelevant::{Augmented, GaussianWalk};
use crate::envs::tmaze::TMaze;
use crate::error::{Error, Result};
use crate::math::{cos, sin};
use crate::mine::{mine_estimate, mine_train, Beliefs, MineConfig, MineDataset, ParticleBlock};
use crate::nn::{CellKind, RnnStack};
use crate::pomdp::{empirical_return, encode_history, rollout, HistoryBuf, Pomdp};
use crate::rng::{derive_seed, label, seeded};

/// Which belief an information estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    /// Belief over the full state.
    Main,
    /// Belief over the control-relevant part of an augmented state.
    Relevant,
    /// Belief over the irrelevant random-walk coordinates.
    Irrelevant,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Main => "main",
            Tag::Relevant => "relevant",
            Tag::Irrelevant => "irrelevant",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        [Tag::Main, Tag::Relevant, Tag::Irrelevant]
            .into_iter()
            .find(|t| t.name() == s)
    }

    fn id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A belief as fed to the estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefRepr {
    Dense(Vec<f64>),
    Set(ParticleBlock),
}

/// Fixed-width features of a particle for the set network.
pub trait StateFeatures: Pomdp {
    fn feature_dim(&self) -> usize;
    fn write_features(&self, state: &Self::State, out: &mut Vec<f64>);
}

impl StateFeatures for MountainHike {
    fn feature_dim(&self) -> usize {
        4
    }

    /// `(x, y, cos c, sin c)` with `c` the orientation angle.
    fn write_features(&self, s: &Self::State, out: &mut Vec<f64>) {
        let angle = s.orientation as f64 * core::f64::consts::FRAC_PI_2;
        out.extend_from_slice(&[s.pos[0], s.pos[1], cos(angle), sin(angle)]);
    }
}

impl StateFeatures for GaussianWalk {
    fn feature_dim(&self) -> usize {
        self.dim()
    }

    fn write_features(&self, s: &Vec<f64>, out: &mut Vec<f64>) {
        out.extend_from_slice(s);
    }
}

fn particle_block<P: StateFeatures + ?Sized>(model: &P, set: ParticleSet<P::State>) -> ParticleBlock {
    let mut features = Vec::with_capacity(set.len() * model.feature_dim());
    for s in &set.particles {
        model.write_features(s, &mut features);
    }
    ParticleBlock {
        features,
        weights: set.weights,
    }
}

/// POMDPs for which the protocol knows how to compute beliefs.
pub trait BeliefModel: Pomdp {
    fn belief_tags(&self) -> &'static [Tag];

    fn belief(
        &self,
        tag: Tag,
        history: &HistoryBuf<Self::Observation>,
        particles: usize,
        rng: &mut dyn RngCore,
    ) -> Result<BeliefRepr>;
}

fn unsupported(tag: Tag) -> Error {
    let _ = tag;
    Error::InvalidConfig {
        field: "tag",
        reason: "belief kind not provided by this environment",
    }
}

impl BeliefModel for TMaze {
    fn belief_tags(&self) -> &'static [Tag] {
        &[Tag::Main]
    }

    fn belief(
        &self,
        tag: Tag,
        history: &HistoryBuf<Self::Observation>,
        _: usize,
        _: &mut dyn RngCore,
    ) -> Result<BeliefRepr> {
        if tag != Tag::Main {
            return Err(unsupported(tag));
        }
        let mut beliefs = filter_history(self, history)?;
        Ok(BeliefRepr::Dense(
            beliefs.pop().expect("non-empty history").into_probs(),
        ))
    }
}

impl BeliefModel for MountainHike {
    fn belief_tags(&self) -> &'static [Tag] {
        &[Tag::Main]
    }

    fn belief(
        &self,
        tag: Tag,
        history: &HistoryBuf<Self::Observation>,
        particles: usize,
        rng: &mut dyn RngCore,
    ) -> Result<BeliefRepr> {
        if tag != Tag::Main {
            return Err(unsupported(tag));
        }
        let set = particle_filter_final(self, history, particles, rng)?;
        Ok(BeliefRepr::Set(particle_block(self, set)))
    }
}

/// Closed-form posterior of the irrelevant coordinates as `(mean, var)` pairs.
pub fn kalman_features<'a>(dim: usize, observations: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut kf = KalmanFilter::new(dim);
    for o in observations {
        kf.observe(o);
    }
    let b: &GaussianBelief = kf.belief();
    b.features()
}

impl BeliefModel for Augmented<TMaze> {
    fn belief_tags(&self) -> &'static [Tag] {
        &[Tag::Relevant, Tag::Irrelevant]
    }

    fn belief(
        &self,
        tag: Tag,
        history: &HistoryBuf<Self::Observation>,
        particles: usize,
        rng: &mut dyn RngCore,
    ) -> Result<BeliefRepr> {
        match tag {
            Tag::Relevant => self
                .inner()
                .belief(Tag::Main, &self.relevant_history(history), particles, rng),
            Tag::Irrelevant => Ok(BeliefRepr::Dense(kalman_features(
                self.walk().dim(),
                self.irrelevant_observations(history),
            ))),
            Tag::Main => Err(unsupported(tag)),
        }
    }
}

impl BeliefModel for Augmented<MountainHike> {
    fn belief_tags(&self) -> &'static [Tag] {
        &[Tag::Relevant, Tag::Irrelevant]
    }

    fn belief(
        &self,
        tag: Tag,
        history: &HistoryBuf<Self::Observation>,
        particles: usize,
        rng: &mut dyn RngCore,
    ) -> Result<BeliefRepr> {
        match tag {
            Tag::Relevant => self
                .inner()
                .belief(Tag::Main, &self.relevant_history(history), particles, rng),
            Tag::Irrelevant => {
                let obs = history.observations();
                let mut walk = HistoryBuf::new(obs[0].irrelevant.clone());
                for o in &obs[1..] {
                    walk.push(0, o.irrelevant.clone());
                }
                let set = particle_filter_final(self.walk(), &walk, particles, rng)?;
                Ok(BeliefRepr::Set(particle_block(self.walk(), set)))
            }
            Tag::Main => Err(unsupported(tag)),
        }
    }
}

/// One draw `(h_t, b_t)` from the joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Index of the sampled episode.
    pub rollout: u32,
    /// Sampled time step.
    pub t: u32,
    pub hidden: Vec<f64>,
    /// One belief per tag of the owning [`SampleSet`], in the same order.
    pub beliefs: Vec<BeliefRepr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Training episodes of the checkpoint the samples come from.
    pub checkpoint: u64,
    pub tags: Vec<Tag>,
    pub hidden_dim: usize,
    pub records: Vec<SampleRecord>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The `(hidden, belief)` dataset for one tag.
    pub fn dataset(&self, tag: Tag) -> Result<MineDataset> {
        let k = self.tags.iter().position(|&t| t == tag).ok_or(unsupported(tag))?;
        let mut xs = Vec::with_capacity(self.records.len() * self.hidden_dim);
        for r in &self.records {
            xs.extend_from_slice(&r.hidden);
        }
        match self.records.first().map(|r| &r.beliefs[k]) {
            None => Err(Error::Empty("sample set")),
            Some(BeliefRepr::Dense(first)) => {
                let dim = first.len();
                let mut ys = Vec::with_capacity(self.records.len() * dim);
                for r in &self.records {
                    match &r.beliefs[k] {
                        BeliefRepr::Dense(v) => ys.extend_from_slice(v),
                        BeliefRepr::Set(_) => return Err(mixed()),
                    }
                }
                MineDataset::dense(self.hidden_dim, xs, dim, ys)
            }
            Some(BeliefRepr::Set(first)) => {
                let dim = first.features.len() / first.weights.len().max(1);
                let mut sets = Vec::with_capacity(self.records.len());
                for r in &self.records {
                    match &r.beliefs[k] {
                        BeliefRepr::Set(s) => sets.push(s.clone()),
                        BeliefRepr::Dense(_) => return Err(mixed()),
                    }
                }
                let data = MineDataset {
                    x_dim: self.hidden_dim,
                    xs,
                    ys: Beliefs::Sets { dim, sets },
                };
                data.validate()?;
                Ok(data)
            }
        }
    }
}

fn mixed() -> Error {
    Error::InvalidConfig {
        field: "samples",
        reason: "belief representations differ across records",
    }
}

/// Draws `n` records: one episode under the epsilon-greedy policy of `net`
/// per record, a time step uniform over the episode's non-terminal steps,
/// and the hidden state and beliefs of that same history prefix.
#[allow(clippy::too_many_arguments)]
pub fn sample_joint<P: BeliefModel + ?Sized>(
    model: &P,
    net: &RnnStack,
    checkpoint: u64,
    epsilon: f64,
    horizon: usize,
    n: usize,
    particles: usize,
    rng: &mut dyn RngCore,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let tags = model.belief_tags().to_vec();
    let exploration = model.exploration_policy();
    let mut records = Vec::with_capacity(n);
    for r in 0..n {
        let episode = {
            let mut policy = EpsilonGreedy::new(model, net, epsilon, exploration.clone());
            rollout(model, &mut policy, horizon, rng)?
        };
        let steps = episode.sampleable_steps();
        let t = if steps == 0 { 0 } else { rng.random_range(0..steps) };
        records.push(joint_record(
            model,
            net,
            &episode.history.prefix(t),
            r as u32,
            particles,
            rng,
        )?);
    }
    Ok(SampleSet {
        checkpoint,
        tags,
        hidden_dim: net.arch.state_size(),
        records,
    })
}

/// Hidden state and beliefs for one history prefix.
pub fn joint_record<P: BeliefModel + ?Sized>(
    model: &P,
    net: &RnnStack,
    prefix: &HistoryBuf<P::Observation>,
    rollout: u32,
    particles: usize,
    rng: &mut dyn RngCore,
) -> Result<SampleRecord> {
    let hidden = net.hidden_state(&encode_history(model, prefix)?)?;
    let beliefs = model
        .belief_tags()
        .iter()
        .map(|&tag| model.belief(tag, prefix, particles, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleRecord {
        rollout,
        t: prefix.len() as u32,
        hidden,
        beliefs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Greedy rollouts per return estimate.
    pub eval_rollouts: usize,
    /// Particles per belief for continuous state spaces.
    pub particles: usize,
    pub mine: MineConfig,
    /// Behaviour noise levels of the generalization sweep.
    pub epsilons: Vec<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            eval_rollouts: 100,
            particles: 256,
            mine: MineConfig::default(),
            epsilons: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.mine.validate()?;
        if self.eval_rollouts == 0 {
            return Err(Error::InvalidConfig {
                field: "eval_rollouts",
                reason: "must be positive",
            });
        }
        if self.particles == 0 {
            return Err(Error::InvalidConfig {
                field: "particles",
                reason: "must be positive",
            });
        }
        if self.epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidConfig {
                field: "epsilons",
                reason: "values must lie in [0, 1]",
            });
        }
        Ok(())
    }
}

/// Identifies one checkpoint of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RowKey {
    pub env: String,
    pub cell: CellKind,
    pub seed: u64,
    pub episode: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Return,
    Mi,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Return => "return",
            Metric::Mi => "mi",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "return" => Some(Metric::Return),
            "mi" => Some(Metric::Mi),
            _ => None,
        }
    }
}

/// One information estimate in bits (`NaN` if its job failed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiValue {
    pub tag: Tag,
    /// `None` for the main protocol, the behaviour noise for sweep rows.
    pub epsilon: Option<f64>,
    pub bits: f64,
}

/// All measurements of one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub key: RowKey,
    /// Empirical discounted return, if measured (`NaN` if its job failed).
    pub ret: Option<f64>,
    pub mi: Vec<MiValue>,
    /// Diagnostics of failed sub-jobs.
    pub failures: Vec<String>,
}

/// A flat `(metric, tag, epsilon, value)` line of a row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub env: String,
    pub cell: CellKind,
    pub seed: u64,
    pub episode: u64,
    pub metric: Metric,
    pub tag: Tag,
    pub epsilon: Option<f64>,
    pub value: f64,
}

impl MetricsRow {
    pub fn new(key: RowKey) -> Self {
        Self {
            key,
            ret: None,
            mi: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn records(&self) -> Vec<MetricRecord> {
        let k = &self.key;
        let make = |metric, tag, epsilon, value| MetricRecord {
            env: k.env.clone(),
            cell: k.cell,
            seed: k.seed,
            episode: k.episode,
            metric,
            tag,
            epsilon,
            value,
        };
        let mut out = Vec::with_capacity(1 + self.mi.len());
        if let Some(r) = self.ret {
            out.push(make(Metric::Return, Tag::Main, None, r));
        }
        for m in &self.mi {
            out.push(make(Metric::Mi, m.tag, m.epsilon, m.bits));
        }
        out
    }

    /// The main-protocol estimate for `tag`.
    pub fn mi(&self, tag: Tag) -> Option<f64> {
        self.mi
            .iter()
            .find(|m| m.tag == tag && m.epsilon.is_none())
            .map(|m| m.bits)
    }

    pub fn sweep(&self, tag: Tag) -> Vec<(f64, f64)> {
        self.mi
            .iter()
            .filter(|m| m.tag == tag)
            .filter_map(|m| m.epsilon.map(|e| (e, m.bits)))
            .collect()
    }
}

fn failure_note(what: &str, e: &Error) -> String {
    alloc::format!("{what}: {e}")
}

/// Mean discounted return of `rollouts` greedy episodes.
pub fn greedy_return<P: Pomdp + ?Sized>(
    model: &P,
    net: &RnnStack,
    horizon: usize,
    rollouts: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let episodes = greedy_episodes(model, net, horizon, rollouts, rng)?;
    empirical_return(&episodes, model.discount())
}

/// Information estimates for every tag of `model` under behaviour noise
/// `epsilon`. Sampling and estimator seeds depend on `(seed, episode)` and
/// the tag only, so `epsilon = 0` reproduces the main protocol exactly.
pub fn information<P: BeliefModel + ?Sized>(
    model: &P,
    net: &RnnStack,
    checkpoint: u64,
    epsilon: f64,
    horizon: usize,
    config: &ProtocolConfig,
    seed: u64,
) -> Result<Vec<(Tag, f64)>> {
    let mut rng = seeded(derive_seed(seed, &[label("samples"), checkpoint]));
    let samples = sample_joint(
        model,
        net,
        checkpoint,
        epsilon,
        horizon,
        config.mine.dataset_size,
        config.particles,
        &mut rng,
    )?;
    information_from_samples(&samples, config, seed)
}

/// MINE on each tag of an existing sample set.
pub fn information_from_samples(samples: &SampleSet, config: &ProtocolConfig, seed: u64) -> Result<Vec<(Tag, f64)>> {
    samples
        .tags
        .iter()
        .map(|&tag| {
            let data = samples.dataset(tag)?;
            let mut train_rng = seeded(derive_seed(seed, &[label("mine"), samples.checkpoint, tag.id()]));
            let trained = mine_train(&data, &config.mine, &mut train_rng)?;
            let mut est_rng = seeded(derive_seed(seed, &[label("estimate"), samples.checkpoint, tag.id()]));
            Ok((tag, mine_estimate(&data, &trained, &mut est_rng)?))
        })
        .collect()
}

/// Return and main-protocol information estimates of one checkpoint. Failed
/// sub-jobs yield `NaN` values and a note instead of an error.
pub fn evaluate_checkpoint<P: BeliefModel + ?Sized>(
    model: &P,
    net: &RnnStack,
    key: RowKey,
    horizon: usize,
    config: &ProtocolConfig,
) -> MetricsRow {
    let mut row = MetricsRow::new(key);
    let (seed, episode) = (row.key.seed, row.key.episode);
    let mut rng = seeded(derive_seed(seed, &[label("return"), episode]));
    row.ret = Some(
        match greedy_return(model, net, horizon, config.eval_rollouts, &mut rng) {
            Ok(j) => j,
            Err(e) => {
                row.failures.push(failure_note("return", &e));
                f64::NAN
            }
        },
    );
    push_information(&mut row, model, net, None, horizon, config);
    row
}

/// One information estimate per tag and per noise level.
pub fn generalization_sweep<P: BeliefModel + ?Sized>(
    model: &P,
    net: &RnnStack,
    key: RowKey,
    horizon: usize,
    config: &ProtocolConfig,
) -> MetricsRow {
    let mut row = MetricsRow::new(key);
    for &eps in &config.epsilons {
        push_information(&mut row, model, net, Some(eps), horizon, config);
    }
    row
}

fn push_information<P: BeliefModel + ?Sized>(
    row: &mut MetricsRow,
    model: &P,
    net: &RnnStack,
    epsilon: Option<f64>,
    horizon: usize,
    config: &ProtocolConfig,
) {
    match information(
        model,
        net,
        row.key.episode,
        epsilon.unwrap_or(0.0),
        horizon,
        config,
        row.key.seed,
    ) {
        Ok(values) => row
            .mi
            .extend(values.into_iter().map(|(tag, bits)| MiValue { tag, epsilon, bits })),
        Err(e) => {
            row.failures.push(failure_note("information", &e));
            row.mi.extend(model.belief_tags().iter().map(|&tag| MiValue {
                tag,
                epsilon,
                bits: f64::NAN,
            }));
        }
    }
}
