use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::log2;
use crate::pomdp::{DiscretePomdp, HistoryBuf};

/// Dense posterior over the enumerated states of a [`DiscretePomdp`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBelief {
    probs: Vec<f64>,
}

impl DiscreteBelief {
    /// Normalizes `weights`; fails when they sum to zero.
    pub fn from_weights(mut weights: Vec<f64>, step: usize) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ImpossibleObservation { step });
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("belief normalizer"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { probs: weights })
    }

    pub fn dirac(num_states: usize, index: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the single state carrying all the mass, if any.
    pub fn dirac_index(&self) -> Option<usize> {
        self.probs.iter().position(|&p| p == 1.0)
    }

    /// Total-variation distance to another belief over the same states.
    pub fn total_variation(&self, other: &DiscreteBelief) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// `b_0(s) ∝ p_0(s) O(o_0 | s)`.
pub fn initial_belief<P: DiscretePomdp + ?Sized>(model: &P, o0: &P::Observation) -> Result<DiscreteBelief> {
    let weights = (0..model.num_states())
        .map(|i| {
            let p0 = model.initial_probability(i);
            if p0 == 0.0 {
                0.0
            } else {
                p0 * model.observation_likelihood(o0, &model.state_from_index(i))
            }
        })
        .collect();
    DiscreteBelief::from_weights(weights, 0)
}

/// One exact Bayes update `b'(s') ∝ O(o' | s') sum_s T(s' | s, a) b(s)`.
pub fn belief_step<P: DiscretePomdp + ?Sized>(
    model: &P,
    belief: &DiscreteBelief,
    action: usize,
    obs: &P::Observation,
) -> Result<DiscreteBelief> {
    let mut scratch = Vec::new();
    update(model, belief, action, obs, 1, &mut scratch)
}

fn update<P: DiscretePomdp + ?Sized>(
    model: &P,
    belief: &DiscreteBelief,
    action: usize,
    obs: &P::Observation,
    step: usize,
    scratch: &mut Vec<(usize, f64)>,
) -> Result<DiscreteBelief> {
    crate::pomdp::check_action(action, model.num_actions())?;
    let n = model.num_states();
    if belief.len() != n {
        return Err(Error::ShapeMismatch {
            what: "belief",
            expected: n,
            found: belief.len(),
        });
    }
    let mut predicted = vec![0.0; n];
    for (i, &p) in belief.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        scratch.clear();
        model.transition_probabilities(i, action, scratch);
        for &(j, q) in scratch.iter() {
            predicted[j] += p * q;
        }
    }
    for (j, w) in predicted.iter_mut().enumerate() {
        if *w != 0.0 {
            *w *= model.observation_likelihood(obs, &model.state_from_index(j));
        }
    }
    DiscreteBelief::from_weights(predicted, step)
}

/// Beliefs `b_0 .. b_t` for every prefix of `history`.
pub fn filter_history<P: DiscretePomdp + ?Sized>(
    model: &P,
    history: &HistoryBuf<P::Observation>,
) -> Result<Vec<DiscreteBelief>> {
    let obs = history.observations();
    let mut out = Vec::with_capacity(obs.len());
    let mut scratch = Vec::new();
    let mut b = initial_belief(model, &obs[0])?;
    for (k, (&a, o)) in history.actions().iter().zip(&obs[1..]).enumerate() {
        let next = update(model, &b, a, o, k + 1, &mut scratch)?;
        out.push(b);
        b = next;
    }
    out.push(b);
    Ok(out)
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn belief_entropy(belief: &DiscreteBelief) -> f64 {
    -belief
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * log2(p))
        .sum::<f64>()
}
