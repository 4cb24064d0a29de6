//! Scalar helpers and the handful of vector kernels the networks are built on.
//!
//! Reductions use four independent accumulators so that the summation order
//! is fixed by the code and not by the optimiser, which keeps results
//! bit-reproducible across builds.

pub use libm::{ceil, cos, exp, fabs, floor, log, log2, pow, sin, sqrt, tanh};

#[inline]
pub fn sq(x: f64) -> f64 {
    x * x
}

pub const LN_2: f64 = core::f64::consts::LN_2;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `log(mean(exp(values)))` with a max shift.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| exp(v - max)).sum();
    max + log(sum / values.len() as f64)
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let max = a.max(b);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + log(exp(a - max) + exp(b - max))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += Σ_k input[k] * weights[k, :]` for a row-per-input weight block.
#[inline]
pub fn accumulate_rows(out: &mut [f64], weights: &[f64], input: &[f64]) {
    let cols = out.len();
    debug_assert_eq!(weights.len(), cols * input.len());
    for (k, &xk) in input.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, &weights[k * cols..(k + 1) * cols], out);
        }
    }
}

/// Reverse of [`accumulate_rows`]: `d_input[k] += <weights[k, :], d_out>` and
/// `d_weights[k, :] += input[k] * d_out`.
#[inline]
pub fn backprop_rows(
    d_out: &[f64],
    weights: &[f64],
    input: &[f64],
    d_input: Option<&mut [f64]>,
    d_weights: &mut [f64],
) {
    let cols = d_out.len();
    for (k, &xk) in input.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, d_out, &mut d_weights[k * cols..(k + 1) * cols]);
        }
    }
    if let Some(d_input) = d_input {
        for (k, dk) in d_input.iter_mut().enumerate() {
            *dk += dot(&weights[k * cols..(k + 1) * cols], d_out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_exp_is_stable_for_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_mean_exp(&v) - 1000.0).abs() < 1e-12);
        let v = [1.0, 3.0];
        let direct = log((exp(1.0) + exp(3.0)) / 2.0);
        assert!((log_mean_exp(&v) - direct).abs() < 1e-14);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: alloc::vec::Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: alloc::vec::Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-30.0, -1.0, 0.0, 0.5, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
