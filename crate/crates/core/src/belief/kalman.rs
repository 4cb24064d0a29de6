//! Closed-form posterior of the Gaussian random walk with prior `N(0, 1)`,
//! unit process noise and unit observation noise, coordinate by coordinate.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub var: Vec<f64>,
}

impl GaussianBelief {
    pub fn prior(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(mean_1, var_1, mean_2, var_2, ...)`.
    pub fn features(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.var).flat_map(|(&m, &v)| [m, v]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct KalmanFilter {
    belief: GaussianBelief,
    steps: usize,
}

impl KalmanFilter {
    pub fn new(dim: usize) -> Self {
        Self {
            belief: GaussianBelief::prior(dim),
            steps: 0,
        }
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    /// Conditions on the next observation, predicting first unless it is `o_0`.
    pub fn observe(&mut self, obs: &[f64]) -> &GaussianBelief {
        assert_eq!(obs.len(), self.belief.dim(), "observation dimension");
        let predict = self.steps > 0;
        for ((m, v), &o) in self.belief.mean.iter_mut().zip(self.belief.var.iter_mut()).zip(obs) {
            let prior_var = if predict { *v + 1.0 } else { *v };
            let gain = prior_var / (prior_var + 1.0);
            *m += gain * (o - *m);
            *v = (1.0 - gain) * prior_var;
        }
        self.steps += 1;
        &self.belief
    }
}

/// Posteriors after each observation `o_0, o_1, ...`.
pub fn kalman_irrelevant<'a, I>(dim: usize, observations: I) -> Vec<GaussianBelief>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut kf = KalmanFilter::new(dim);
    observations.into_iter().map(|o| kf.observe(o).clone()).collect()
}
