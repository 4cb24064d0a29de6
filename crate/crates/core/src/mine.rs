//! Neural mutual-information estimation by ascent on the Donsker-Varadhan
//! bound, with the moving-average bias correction of the denominator
//! gradient. Internal values are in nats; estimates are reported in bits.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, log, log_add_exp, log_mean_exp, mean, LN_2};
use crate::nn::{Adam, AdamConfig, DeepSetLayout, MlpLayout, SetRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MineConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Deep-Set representation size `R`.
    pub representation: usize,
    pub ema_rate: f64,
    /// Number of joint samples `N` drawn per estimate.
    pub dataset_size: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            width: 256,
            epochs: 200,
            batch_size: 1024,
            adam: AdamConfig::default(),
            representation: 16,
            ema_rate: 0.01,
            dataset_size: 10_000,
        }
    }
}

impl MineConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("hidden_layers", self.hidden_layers),
            ("width", self.width),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("representation", self.representation),
            ("dataset_size", self.dataset_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig {
                    field,
                    reason: "must be positive",
                });
            }
        }
        if !(self.ema_rate > 0.0 && self.ema_rate <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "ema_rate",
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::InvalidConfig {
                field: "adam.learning_rate",
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// A weighted particle set flattened to `M x dim` features.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBlock {
    pub features: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleBlock {
    pub fn as_ref(&self) -> SetRef<'_> {
        SetRef {
            features: &self.features,
            weights: &self.weights,
        }
    }
}

/// The `y` side of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Beliefs {
    Dense { dim: usize, values: Vec<f64> },
    Sets { dim: usize, sets: Vec<ParticleBlock> },
}

impl Beliefs {
    pub fn len(&self) -> usize {
        match self {
            Beliefs::Dense { dim, values } => values.len() / (*dim).max(1),
            Beliefs::Sets { sets, .. } => sets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `N` pairs `(x_n, y_n)` drawn from a joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MineDataset {
    pub x_dim: usize,
    pub xs: Vec<f64>,
    pub ys: Beliefs,
}

impl MineDataset {
    pub fn dense(x_dim: usize, xs: Vec<f64>, y_dim: usize, ys: Vec<f64>) -> Result<Self> {
        let d = Self {
            x_dim,
            xs,
            ys: Beliefs::Dense { dim: y_dim, values: ys },
        };
        d.validate()?;
        Ok(d)
    }

    pub fn sets(x_dim: usize, xs: Vec<f64>, s_dim: usize, sets: Vec<ParticleBlock>) -> Result<Self> {
        let d = Self {
            x_dim,
            xs,
            ys: Beliefs::Sets { dim: s_dim, sets },
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.xs.len().checked_div(self.x_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_dim == 0 || !self.xs.len().is_multiple_of(self.x_dim) {
            return Err(Error::ShapeMismatch {
                what: "dataset x block",
                expected: self.x_dim,
                found: self.xs.len(),
            });
        }
        let n = self.len();
        match &self.ys {
            Beliefs::Dense { dim, values } => {
                if *dim == 0 || values.len() != n * dim {
                    return Err(Error::ShapeMismatch {
                        what: "dataset y block",
                        expected: n * dim,
                        found: values.len(),
                    });
                }
            }
            Beliefs::Sets { dim, sets } => {
                if sets.len() != n {
                    return Err(Error::ShapeMismatch {
                        what: "dataset particle sets",
                        expected: n,
                        found: sets.len(),
                    });
                }
                for s in sets {
                    if s.weights.is_empty() {
                        return Err(Error::Empty("particle set"));
                    }
                    if s.features.len() != s.weights.len() * dim {
                        return Err(Error::ShapeMismatch {
                            what: "particle features",
                            expected: s.weights.len() * dim,
                            found: s.features.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.x_dim..(i + 1) * self.x_dim]
    }
}

/// Statistics network `T_phi` matching a dataset's belief representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatisticsNet {
    /// Feed-forward network on the concatenation `(x, y)`.
    Vector(MlpLayout),
    /// Deep-Set network over particle sets.
    DeepSet(DeepSetLayout),
}

impl StatisticsNet {
    pub fn for_dataset(data: &MineDataset, config: &MineConfig) -> Result<Self> {
        match &data.ys {
            Beliefs::Dense { dim, .. } => {
                let mut sizes = vec![data.x_dim + dim];
                sizes.extend(core::iter::repeat_n(config.width, config.hidden_layers));
                sizes.push(1);
                Ok(StatisticsNet::Vector(MlpLayout::new(sizes)?))
            }
            Beliefs::Sets { dim, .. } => Ok(StatisticsNet::DeepSet(DeepSetLayout::new(
                data.x_dim,
                *dim,
                config.representation,
                config.width,
                config.hidden_layers,
            )?)),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            StatisticsNet::Vector(l) => l.num_params(),
            StatisticsNet::DeepSet(l) => l.num_params(),
        }
    }

    pub fn init_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            StatisticsNet::Vector(l) => l.init_params(rng),
            StatisticsNet::DeepSet(l) => l.init_params(rng),
        }
    }

    /// Range of the parameters of the final linear layer.
    pub fn output_layer_range(&self) -> core::ops::Range<usize> {
        match self {
            StatisticsNet::Vector(l) => l.output_layer_range(),
            StatisticsNet::DeepSet(l) => {
                let r = l.mu.output_layer_range();
                let off = l.mu_range().start;
                r.start + off..r.end + off
            }
        }
    }

    fn dense_input(data: &MineDataset, pairs: &[(usize, usize)]) -> Vec<f64> {
        let Beliefs::Dense { dim, values } = &data.ys else {
            unreachable!("vector statistics network on particle data")
        };
        let mut z = Vec::with_capacity(pairs.len() * (data.x_dim + dim));
        for &(i, j) in pairs {
            z.extend_from_slice(data.x(i));
            z.extend_from_slice(&values[j * dim..(j + 1) * dim]);
        }
        z
    }

    fn set_input<'a>(data: &'a MineDataset, pairs: &[(usize, usize)]) -> (Vec<f64>, Vec<SetRef<'a>>) {
        let Beliefs::Sets { sets, .. } = &data.ys else {
            unreachable!("deep set statistics network on dense data")
        };
        let mut x = Vec::with_capacity(pairs.len() * data.x_dim);
        let mut s = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            x.extend_from_slice(data.x(i));
            s.push(sets[j].as_ref());
        }
        (x, s)
    }

    fn check(&self, data: &MineDataset) -> Result<()> {
        match (self, &data.ys) {
            (StatisticsNet::Vector(l), Beliefs::Dense { dim, .. }) if l.input() == data.x_dim + dim => Ok(()),
            (StatisticsNet::DeepSet(l), Beliefs::Sets { dim, .. }) if l.x_dim() == data.x_dim && l.s_dim() == *dim => {
                Ok(())
            }
            _ => Err(Error::ShapeMismatch {
                what: "statistics network and dataset",
                expected: 0,
                found: 0,
            }),
        }
    }

    /// `T(x_i, y_j)` for each `(i, j)`.
    pub fn values(&self, params: &[f64], data: &MineDataset, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.check(data)?;
        match self {
            StatisticsNet::Vector(l) => l.forward(params, &Self::dense_input(data, pairs), pairs.len()),
            StatisticsNet::DeepSet(l) => {
                let (x, s) = Self::set_input(data, pairs);
                l.forward(params, &x, &s)
            }
        }
    }

    /// Gradient of `sum_k coeffs[k] T(pairs[k])`, accumulated into `grad`.
    pub fn gradient(
        &self,
        params: &[f64],
        data: &MineDataset,
        pairs: &[(usize, usize)],
        coeffs: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check(data)?;
        match self {
            StatisticsNet::Vector(l) => {
                let z = Self::dense_input(data, pairs);
                let cache = l.forward_cached(params, &z, pairs.len())?;
                l.backward(params, &z, pairs.len(), &cache, coeffs, grad, None)
            }
            StatisticsNet::DeepSet(l) => {
                let (x, s) = Self::set_input(data, pairs);
                l.backward(params, &x, &s, coeffs, grad)
            }
        }
    }
}

/// Plug-in Donsker-Varadhan value `mean(T_joint) - log mean(exp(T_marginal))`
/// in nats.
pub fn dv_bound(joint: &[f64], marginal: &[f64]) -> Result<f64> {
    if joint.is_empty() || marginal.is_empty() {
        return Err(Error::Empty("statistics batch"));
    }
    let v = mean(joint) - log_mean_exp(marginal);
    if !v.is_finite() {
        return Err(Error::NonFinite("donsker-varadhan bound"));
    }
    Ok(v)
}

/// Independent permutations of the `x` and `y` indices, paired up.
pub fn make_marginal(n: usize, rng: &mut dyn RngCore) -> Vec<(usize, usize)> {
    let mut rng = rng;
    let mut p1: Vec<usize> = (0..n).collect();
    let mut p2: Vec<usize> = (0..n).collect();
    p1.shuffle(&mut rng);
    p2.shuffle(&mut rng);
    p1.into_iter().zip(p2).collect()
}

/// Exponential moving average of the batch mean of `exp(T)`, kept in log
/// space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaDenominator {
    rate: f64,
    log_value: Option<f64>,
}

impl EmaDenominator {
    pub fn new(rate: f64) -> Self {
        Self { rate, log_value: None }
    }

    /// Folds in a batch of statistics and returns the new log average. The
    /// first batch initialises the average.
    pub fn update(&mut self, values: &[f64]) -> f64 {
        let lme = log_mean_exp(values);
        let next = match self.log_value {
            None => lme,
            Some(prev) => log_add_exp(log(1.0 - self.rate) + prev, log(self.rate) + lme),
        };
        self.log_value = Some(next);
        next
    }

    pub fn log_value(&self) -> Option<f64> {
        self.log_value
    }

    pub fn value(&self) -> Option<f64> {
        self.log_value.map(exp)
    }
}

/// Trained statistics network and its training curve.
#[derive(Debug, Clone)]
pub struct TrainedMine {
    pub net: StatisticsNet,
    pub params: Vec<f64>,
    /// Mean batch bound per epoch, in bits.
    pub curve: Vec<f64>,
}

/// Ascends the DV bound for `config.epochs` epochs.
pub fn mine_train(data: &MineDataset, config: &MineConfig, rng: &mut dyn RngCore) -> Result<TrainedMine> {
    config.validate()?;
    data.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidConfig {
            field: "dataset_size",
            reason: "needs at least two samples",
        });
    }
    let net = StatisticsNet::for_dataset(data, config)?;
    let mut params = net.init_params(rng);
    let mut adam = Adam::new(config.adam, params.len());
    let mut ema = EmaDenominator::new(config.ema_rate);
    let mut grad = vec![0.0; params.len()];
    let mut curve = Vec::with_capacity(config.epochs);
    let b = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        {
            let mut r = &mut *rng;
            order.shuffle(&mut r);
        }
        let marginal = make_marginal(n, rng);
        let mut bounds = Vec::new();
        for start in (0..n).step_by(b) {
            let end = (start + b).min(n);
            let joint: Vec<(usize, usize)> = order[start..end].iter().map(|&i| (i, i)).collect();
            let marg = &marginal[start..end];
            let tj = net.values(&params, data, &joint)?;
            let tm = net.values(&params, data, marg)?;
            bounds.push(dv_bound(&tj, &tm)?);
            let log_ema = ema.update(&tm);
            // ascent on the bound: Adam descends on its negation
            let kj = -1.0 / tj.len() as f64;
            let cj = vec![kj; tj.len()];
            let cm: Vec<f64> = tm.iter().map(|t| exp(t - log_ema) / tm.len() as f64).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            net.gradient(&params, data, &joint, &cj, &mut grad)?;
            net.gradient(&params, data, marg, &cm, &mut grad)?;
            adam.step(&mut params, &grad)?;
        }
        curve.push(mean(&bounds) / LN_2);
    }
    Ok(TrainedMine { net, params, curve })
}

/// The plug-in estimate over the whole dataset with one fresh marginal
/// shuffle, in bits.
pub fn mine_estimate(data: &MineDataset, trained: &TrainedMine, rng: &mut dyn RngCore) -> Result<f64> {
    estimate_with(data, &trained.net, &trained.params, rng)
}

/// [`mine_estimate`] for an explicit network and parameter vector.
pub fn estimate_with(data: &MineDataset, net: &StatisticsNet, params: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    let marginal = make_marginal(n, rng);
    let chunk = 2048;
    let mut tj = Vec::with_capacity(n);
    let mut tm = Vec::with_capacity(n);
    for start in (0..n).step_by(chunk) {
        let end = (start + chunk).min(n);
        let joint: Vec<(usize, usize)> = (start..end).map(|i| (i, i)).collect();
        tj.extend(net.values(params, data, &joint)?);
        tm.extend(net.values(params, data, &marginal[start..end])?);
    }
    Ok(dv_bound(&tj, &tm)? / LN_2)
}
