use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{Error, Result};
use crate::math::sqrt;

/// Fully connected network with rectifier hidden layers and a linear output.
/// Parameters per layer: `W (in x out)` then `b (out)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

/// Post-activation values of every layer for a batch.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl MlpLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig {
                field: "mlp",
                reason: "needs at least an input and an output layer, all of positive width",
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        Ok(Self {
            sizes,
            offsets,
            total: off,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.total
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Uniform `±1/sqrt(fan_in)` for weights and biases.
    pub fn init_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut p = vec![0.0; self.total];
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let bound = 1.0 / sqrt(i as f64);
            for v in &mut p[self.offsets[l]..self.offsets[l] + i * o + o] {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    /// Range of the last layer's parameters.
    pub fn output_layer_range(&self) -> core::ops::Range<usize> {
        self.offsets[self.layers() - 1]..self.total
    }

    fn check(&self, params: &[f64], x: &[f64], n: usize) -> Result<()> {
        if params.len() != self.total {
            return Err(Error::ShapeMismatch {
                what: "mlp parameters",
                expected: self.total,
                found: params.len(),
            });
        }
        if x.len() != n * self.input() {
            return Err(Error::ShapeMismatch {
                what: "mlp input batch",
                expected: n * self.input(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Batch forward pass over `n` row-major inputs, keeping activations.
    pub fn forward_cached(&self, params: &[f64], x: &[f64], n: usize) -> Result<MlpCache> {
        self.check(params, x, n)?;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = params[self.offsets[l]..].split_at(i * o);
            let b = &rest[..o];
            let mut z = Vec::with_capacity(n * o);
            for _ in 0..n {
                z.extend_from_slice(b);
            }
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            gemm_nn(n, i, o, input, w, &mut z);
            if l + 1 < self.layers() {
                z.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0
                    }
                });
            }
            acts.push(z);
        }
        Ok(MlpCache { acts })
    }

    pub fn forward(&self, params: &[f64], x: &[f64], n: usize) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(params, x, n)?;
        Ok(cache.acts.pop().unwrap_or_default())
    }

    /// Accumulates parameter gradients of `sum <d_out, y>` into `grad` and,
    /// if requested, input gradients into `d_x`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        n: usize,
        cache: &MlpCache,
        d_out: &[f64],
        grad: &mut [f64],
        mut d_x: Option<&mut [f64]>,
    ) -> Result<()> {
        self.check(params, x, n)?;
        if grad.len() != self.total {
            return Err(Error::ShapeMismatch {
                what: "mlp gradient",
                expected: self.total,
                found: grad.len(),
            });
        }
        let mut delta = d_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[self.offsets[l]..self.offsets[l] + i * o];
            let (gw, rest) = grad[self.offsets[l]..].split_at_mut(i * o);
            let gb = &mut rest[..o];
            for row in delta.chunks_exact(o) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let input: &[f64] = if l == 0 { x } else { &cache.acts[l - 1] };
            gemm_tn(n, i, o, input, &delta, gw);
            if l == 0 {
                if let Some(dx) = d_x.as_deref_mut() {
                    gemm_nt(n, o, i, &delta, w, dx);
                }
            } else {
                let mut below = vec![0.0; n * i];
                gemm_nt(n, o, i, &delta, w, &mut below);
                for (d, a) in below.iter_mut().zip(&cache.acts[l - 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = below;
            }
        }
        Ok(())
    }
}
