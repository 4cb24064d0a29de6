use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::pomdp::{check_action, DiscretePomdp, HistoryBuf, Pomdp};

/// A weighted particle approximation of a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<S> {
    pub particles: Vec<S>,
    pub weights: Vec<f64>,
}

impl<S> ParticleSet<S> {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted histogram over the enumerated states of `model`.
    pub fn histogram<P>(&self, model: &P) -> Vec<f64>
    where
        P: DiscretePomdp<State = S> + ?Sized,
    {
        let mut h = alloc::vec![0.0; model.num_states()];
        for (s, w) in self.particles.iter().zip(&self.weights) {
            h[model.state_index(s)] += w;
        }
        h
    }

    /// Multinomial resampling: `M` indices drawn i.i.d. from the weights.
    fn resample_indices(&self, rng: &mut dyn RngCore, out: &mut Vec<usize>) {
        let m = self.weights.len();
        let mut cdf = Vec::with_capacity(m);
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        out.clear();
        for _ in 0..m {
            let u = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(m - 1);
            out.push(i);
        }
    }
}

fn normalize(weights: &mut [f64], step: usize) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateParticles { step });
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("particle weights"));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

/// Incremental sequential importance resampling filter.
pub struct ParticleFilter<'m, P: Pomdp + ?Sized> {
    model: &'m P,
    set: ParticleSet<P::State>,
    step: usize,
    indices: Vec<usize>,
}

impl<'m, P: Pomdp + ?Sized> ParticleFilter<'m, P> {
    /// Draws `m` states from `p_0` and weights them by `O(o_0 | s)`.
    pub fn new(model: &'m P, m: usize, o0: &P::Observation, rng: &mut dyn RngCore) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig {
                field: "particles",
                reason: "must be at least one",
            });
        }
        let particles: Vec<_> = (0..m).map(|_| model.sample_initial(rng)).collect();
        let mut weights: Vec<_> = particles.iter().map(|s| model.observation_likelihood(o0, s)).collect();
        normalize(&mut weights, 0)?;
        Ok(Self {
            model,
            set: ParticleSet { particles, weights },
            step: 0,
            indices: Vec::with_capacity(m),
        })
    }

    pub fn set(&self) -> &ParticleSet<P::State> {
        &self.set
    }

    pub fn into_set(self) -> ParticleSet<P::State> {
        self.set
    }

    /// Resample, propagate with `action`, reweight by `O(obs | s)`.
    pub fn advance(&mut self, action: usize, obs: &P::Observation, rng: &mut dyn RngCore) -> Result<()> {
        check_action(action, self.model.num_actions())?;
        self.step += 1;
        self.set.resample_indices(rng, &mut self.indices);
        let particles: Vec<_> = self
            .indices
            .iter()
            .map(|&i| self.model.sample_transition(&self.set.particles[i], action, rng))
            .collect();
        for (w, s) in self.set.weights.iter_mut().zip(&particles) {
            *w = self.model.observation_likelihood(obs, s);
        }
        self.set.particles = particles;
        normalize(&mut self.set.weights, self.step)
    }
}

/// Runs the filter over the whole history and returns `S_0 .. S_t`.
pub fn particle_filter<P: Pomdp + ?Sized>(
    model: &P,
    history: &HistoryBuf<P::Observation>,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<ParticleSet<P::State>>> {
    let obs = history.observations();
    let mut pf = ParticleFilter::new(model, m, &obs[0], rng)?;
    let mut out = Vec::with_capacity(obs.len());
    out.push(pf.set().clone());
    for (&a, o) in history.actions().iter().zip(&obs[1..]) {
        pf.advance(a, o, rng)?;
        out.push(pf.set().clone());
    }
    Ok(out)
}

/// Only the last set `S_t`, without keeping the intermediate ones.
pub fn particle_filter_final<P: Pomdp + ?Sized>(
    model: &P,
    history: &HistoryBuf<P::Observation>,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<ParticleSet<P::State>> {
    let obs = history.observations();
    let mut pf = ParticleFilter::new(model, m, &obs[0], rng)?;
    for (&a, o) in history.actions().iter().zip(&obs[1..]) {
        pf.advance(a, o, rng)?;
    }
    Ok(pf.into_set())
}
