use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use super::mlp::MlpLayout;
use crate::error::{Error, Result};

/// A weighted set of feature rows, `M x dim` plus `M` weights summing to one.
#[derive(Debug, Clone, Copy)]
pub struct SetRef<'a> {
    pub features: &'a [f64],
    pub weights: &'a [f64],
}

impl SetRef<'_> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Aggregation coefficient of element `m`: `M w_m`, which reduces to a
    /// plain sum for uniform weights.
    fn coefficient(&self, m: usize) -> f64 {
        self.weights.len() as f64 * self.weights[m]
    }
}

/// Statistics network `T(x, S) = mu(x, rho(sum_m M w_m psi(s_m)))`.
/// Parameters are laid out as `psi | rho | mu`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeepSetLayout {
    pub psi: MlpLayout,
    pub rho: MlpLayout,
    pub mu: MlpLayout,
    x_dim: usize,
    s_dim: usize,
    rep: usize,
}

impl DeepSetLayout {
    /// `psi: s -> width -> rep`, `rho: rep -> width -> rep`,
    /// `mu: (x, rep) -> width^mu_layers -> 1`.
    pub fn new(x_dim: usize, s_dim: usize, rep: usize, width: usize, mu_layers: usize) -> Result<Self> {
        let mut mu_sizes = vec![x_dim + rep];
        mu_sizes.extend(core::iter::repeat_n(width, mu_layers));
        mu_sizes.push(1);
        Ok(Self {
            psi: MlpLayout::new(vec![s_dim, width, rep])?,
            rho: MlpLayout::new(vec![rep, width, rep])?,
            mu: MlpLayout::new(mu_sizes)?,
            x_dim,
            s_dim,
            rep,
        })
    }

    pub fn num_params(&self) -> usize {
        self.psi.num_params() + self.rho.num_params() + self.mu.num_params()
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn s_dim(&self) -> usize {
        self.s_dim
    }

    pub fn init_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut p = self.psi.init_params(rng);
        p.extend(self.rho.init_params(rng));
        p.extend(self.mu.init_params(rng));
        p
    }

    pub fn psi_range(&self) -> core::ops::Range<usize> {
        0..self.psi.num_params()
    }

    pub fn rho_range(&self) -> core::ops::Range<usize> {
        let a = self.psi.num_params();
        a..a + self.rho.num_params()
    }

    pub fn mu_range(&self) -> core::ops::Range<usize> {
        let a = self.psi.num_params() + self.rho.num_params();
        a..a + self.mu.num_params()
    }

    fn check(&self, params: &[f64], x: &[f64], sets: &[SetRef<'_>]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                what: "deep set parameters",
                expected: self.num_params(),
                found: params.len(),
            });
        }
        if x.len() != sets.len() * self.x_dim {
            return Err(Error::ShapeMismatch {
                what: "deep set vector input",
                expected: sets.len() * self.x_dim,
                found: x.len(),
            });
        }
        for s in sets {
            if s.is_empty() {
                return Err(Error::Empty("particle set"));
            }
            if s.features.len() != s.len() * self.s_dim {
                return Err(Error::ShapeMismatch {
                    what: "particle features",
                    expected: s.len() * self.s_dim,
                    found: s.features.len(),
                });
            }
        }
        Ok(())
    }

    fn pooled(&self, params: &[f64], sets: &[SetRef<'_>]) -> Result<Vec<f64>> {
        let psi_p = &params[self.psi_range()];
        let mut pooled = vec![0.0; sets.len() * self.rep];
        for (set, out) in sets.iter().zip(pooled.chunks_exact_mut(self.rep)) {
            let e = self.psi.forward(psi_p, set.features, set.len())?;
            for (m, row) in e.chunks_exact(self.rep).enumerate() {
                let c = set.coefficient(m);
                for (o, v) in out.iter_mut().zip(row) {
                    *o += c * v;
                }
            }
        }
        Ok(pooled)
    }

    fn joint_input(&self, x: &[f64], r: &[f64], n: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(n * (self.x_dim + self.rep));
        for i in 0..n {
            z.extend_from_slice(&x[i * self.x_dim..(i + 1) * self.x_dim]);
            z.extend_from_slice(&r[i * self.rep..(i + 1) * self.rep]);
        }
        z
    }

    /// One statistic per `(x_i, S_i)` pair.
    pub fn forward(&self, params: &[f64], x: &[f64], sets: &[SetRef<'_>]) -> Result<Vec<f64>> {
        self.check(params, x, sets)?;
        let n = sets.len();
        let pooled = self.pooled(params, sets)?;
        let r = self.rho.forward(&params[self.rho_range()], &pooled, n)?;
        let z = self.joint_input(x, &r, n);
        self.mu.forward(&params[self.mu_range()], &z, n)
    }

    /// Gradient of `sum_i coeffs[i] T(x_i, S_i)`, accumulated into `grad`.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        sets: &[SetRef<'_>],
        coeffs: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check(params, x, sets)?;
        let n = sets.len();
        let pooled = self.pooled(params, sets)?;
        let rho_p = &params[self.rho_range()];
        let rho_cache = self.rho.forward_cached(rho_p, &pooled, n)?;
        let z = self.joint_input(x, rho_cache.output(), n);
        let mu_p = &params[self.mu_range()];
        let mu_cache = self.mu.forward_cached(mu_p, &z, n)?;
        let mut dz = vec![0.0; z.len()];
        let (mu_r, rho_r, psi_r) = (self.mu_range(), self.rho_range(), self.psi_range());
        self.mu
            .backward(mu_p, &z, n, &mu_cache, coeffs, &mut grad[mu_r], Some(&mut dz))?;
        let width = self.x_dim + self.rep;
        let dr: Vec<f64> = dz
            .chunks_exact(width)
            .flat_map(|row| row[self.x_dim..].iter().copied())
            .collect();
        let mut dpooled = vec![0.0; pooled.len()];
        self.rho
            .backward(rho_p, &pooled, n, &rho_cache, &dr, &mut grad[rho_r], Some(&mut dpooled))?;
        let psi_p = &params[self.psi_range()];
        let mut gpsi = vec![0.0; self.psi.num_params()];
        for (set, dp) in sets.iter().zip(dpooled.chunks_exact(self.rep)) {
            let cache = self.psi.forward_cached(psi_p, set.features, set.len())?;
            let mut de = Vec::with_capacity(set.len() * self.rep);
            for m in 0..set.len() {
                let c = set.coefficient(m);
                de.extend(dp.iter().map(|d| c * d));
            }
            self.psi
                .backward(psi_p, set.features, set.len(), &cache, &de, &mut gpsi, None)?;
        }
        for (g, d) in grad[psi_r].iter_mut().zip(&gpsi) {
            *g += d;
        }
        Ok(())
    }
}
