//! Recurrent cell equations and their exact one-step derivatives.
//!
//! Notation: `x` is the layer input, `h` the previous hidden vector, `σ` the
//! logistic function and `⊙` the elementwise product. Every pre-activation
//! also carries a bias.
//!
//! * GRU: `z = σ(W_z x + U_z h)`, `r = σ(W_r x + U_r h)`,
//!   `n = tanh(W_n x + U_n (r ⊙ h))`, `h' = (1 - z) ⊙ h + z ⊙ n`.
//! * MGU: `f = σ(W_f x + U_f h)`, `n = tanh(W_n x + U_n (f ⊙ h))`,
//!   `h' = (1 - f) ⊙ h + f ⊙ n`.
//! * BRC: `a = 1 + tanh(W_a x + w_a ⊙ h)`, `c = σ(W_c x + w_c ⊙ h)`,
//!   `h' = c ⊙ h + (1 - c) ⊙ tanh(W_n x + a ⊙ h)` with diagonal `w_a, w_c`.
//! * nBRC: as BRC but `a` and `c` see `U_a h`, `U_c h` with full matrices.
//! * LSTM: `i, f, o = σ(W x + U h)`, `g = tanh(W_g x + U_g h)`,
//!   `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`; the state is `(h, c)`.
//!
//! Weight blocks are stored row-per-input (`in x out`), gate blocks are laid
//! out in the order listed above.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::math::{accumulate_rows, backprop_rows, sigmoid, tanh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
    Brc,
    Nbrc,
    Mgu,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [
        CellKind::Lstm,
        CellKind::Gru,
        CellKind::Brc,
        CellKind::Nbrc,
        CellKind::Mgu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Brc => "brc",
            CellKind::Nbrc => "nbrc",
            CellKind::Mgu => "mgu",
        }
    }

    fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru | CellKind::Brc | CellKind::Nbrc => 3,
            CellKind::Mgu => 2,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = UnknownCell;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or(UnknownCell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownCell;

impl fmt::Display for UnknownCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown cell kind (expected one of lstm, gru, brc, nbrc, mgu)")
    }
}

impl core::error::Error for UnknownCell {}

/// Shape and parameter layout of one recurrent layer.
///
/// Parameters: `W (in x G·H)`, the recurrent block, `b (G·H)`, then the
/// learned initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellLayout {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
}

impl CellLayout {
    pub fn new(kind: CellKind, input: usize, hidden: usize) -> Self {
        Self { kind, input, hidden }
    }

    fn gh(&self) -> usize {
        self.kind.gates() * self.hidden
    }

    pub fn state_size(&self) -> usize {
        match self.kind {
            CellKind::Lstm => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    /// Per-step values kept for the backward pass.
    pub fn cache_size(&self) -> usize {
        let h = self.hidden;
        match self.kind {
            CellKind::Gru => 4 * h,
            CellKind::Mgu | CellKind::Brc | CellKind::Nbrc => 3 * h,
            CellKind::Lstm => 5 * h,
        }
    }

    pub fn scratch_size(&self) -> usize {
        2 * self.gh() + 2 * self.state_size()
    }

    fn w_len(&self) -> usize {
        self.input * self.gh()
    }

    fn u_len(&self) -> usize {
        let h = self.hidden;
        match self.kind {
            CellKind::Gru => 3 * h * h,
            CellKind::Mgu => 2 * h * h,
            CellKind::Brc => 2 * h,
            CellKind::Nbrc => 2 * h * h,
            CellKind::Lstm => 4 * h * h,
        }
    }

    pub fn init_offset(&self) -> usize {
        self.w_len() + self.u_len() + self.gh()
    }

    pub fn num_params(&self) -> usize {
        self.init_offset() + self.state_size()
    }

    /// Range of the weights that initialisation draws at random (all but the
    /// initial state).
    pub fn fan_in(&self) -> usize {
        self.input + self.hidden
    }

    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (w, rest) = p.split_at(self.w_len());
        let (u, rest) = rest.split_at(self.u_len());
        (w, u, &rest[..self.gh()])
    }

    fn split_mut<'a>(&self, p: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64], &'a mut [f64]) {
        let (w, rest) = p.split_at_mut(self.w_len());
        let (u, rest) = rest.split_at_mut(self.u_len());
        (w, u, &mut rest[..self.gh()])
    }

    /// One step: writes the next state into `out` and the backward cache into
    /// `cache`. `scratch` must hold at least [`scratch_size`](Self::scratch_size).
    pub fn forward(&self, p: &[f64], x: &[f64], prev: &[f64], out: &mut [f64], cache: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input);
        let h = self.hidden;
        let (w, u, b) = self.split(p);
        let pre = &mut scratch[..self.gh()];
        pre.copy_from_slice(b);
        accumulate_rows(pre, w, x);
        let hp = &prev[..h];
        match self.kind {
            CellKind::Gru => {
                let (u_zr, u_n) = u.split_at(2 * h * h);
                accumulate_rows(&mut pre[..2 * h], u_zr, hp);
                let (zc, rest) = cache.split_at_mut(h);
                let (rc, rest) = rest.split_at_mut(h);
                let (nc, rh) = rest.split_at_mut(h);
                for k in 0..h {
                    zc[k] = sigmoid(pre[k]);
                    rc[k] = sigmoid(pre[h + k]);
                    rh[k] = rc[k] * hp[k];
                }
                accumulate_rows(&mut pre[2 * h..], u_n, rh);
                for k in 0..h {
                    nc[k] = tanh(pre[2 * h + k]);
                    out[k] = (1.0 - zc[k]) * hp[k] + zc[k] * nc[k];
                }
            }
            CellKind::Mgu => {
                let (u_f, u_n) = u.split_at(h * h);
                accumulate_rows(&mut pre[..h], u_f, hp);
                let (fc, rest) = cache.split_at_mut(h);
                let (nc, fh) = rest.split_at_mut(h);
                for k in 0..h {
                    fc[k] = sigmoid(pre[k]);
                    fh[k] = fc[k] * hp[k];
                }
                accumulate_rows(&mut pre[h..], u_n, fh);
                for k in 0..h {
                    nc[k] = tanh(pre[h + k]);
                    out[k] = (1.0 - fc[k]) * hp[k] + fc[k] * nc[k];
                }
            }
            CellKind::Brc | CellKind::Nbrc => {
                if self.kind == CellKind::Brc {
                    let (wa, wc) = u.split_at(h);
                    for k in 0..h {
                        pre[k] += wa[k] * hp[k];
                        pre[h + k] += wc[k] * hp[k];
                    }
                } else {
                    accumulate_rows(&mut pre[..2 * h], u, hp);
                }
                let (ac, rest) = cache.split_at_mut(h);
                let (cc, nc) = rest.split_at_mut(h);
                for k in 0..h {
                    ac[k] = 1.0 + tanh(pre[k]);
                    cc[k] = sigmoid(pre[h + k]);
                    nc[k] = tanh(pre[2 * h + k] + ac[k] * hp[k]);
                    out[k] = cc[k] * hp[k] + (1.0 - cc[k]) * nc[k];
                }
            }
            CellKind::Lstm => {
                accumulate_rows(pre, u, hp);
                let cp = &prev[h..2 * h];
                let (ic, rest) = cache.split_at_mut(h);
                let (fc, rest) = rest.split_at_mut(h);
                let (gc, rest) = rest.split_at_mut(h);
                let (oc, tc) = rest.split_at_mut(h);
                let (ho, co) = out.split_at_mut(h);
                for k in 0..h {
                    ic[k] = sigmoid(pre[k]);
                    fc[k] = sigmoid(pre[h + k]);
                    gc[k] = tanh(pre[2 * h + k]);
                    oc[k] = sigmoid(pre[3 * h + k]);
                    co[k] = fc[k] * cp[k] + ic[k] * gc[k];
                    tc[k] = tanh(co[k]);
                    ho[k] = oc[k] * tc[k];
                }
            }
        }
    }

    /// Reverse of [`forward`](Self::forward).
    ///
    /// `d_out` is the gradient with respect to the produced state; the
    /// gradient with respect to `prev` is written to `d_prev` (overwritten),
    /// the input gradient is added to `d_x` and parameter gradients to `grad`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        p: &[f64],
        x: &[f64],
        prev: &[f64],
        cache: &[f64],
        d_out: &[f64],
        d_prev: &mut [f64],
        d_x: Option<&mut [f64]>,
        grad: &mut [f64],
        scratch: &mut [f64],
    ) {
        let h = self.hidden;
        let gh = self.gh();
        let (w, u, _) = self.split(p);
        let (gw, gu, gb) = self.split_mut(grad);
        let (dpre, rest) = scratch.split_at_mut(gh);
        let daux = &mut rest[..gh];
        let hp = &prev[..h];
        d_prev.iter_mut().for_each(|v| *v = 0.0);
        let dh = &d_out[..h];
        match self.kind {
            CellKind::Gru => {
                let (u_zr, u_n) = u.split_at(2 * h * h);
                let (gu_zr, gu_n) = gu.split_at_mut(2 * h * h);
                let (zc, rest) = cache.split_at(h);
                let (rc, rest) = rest.split_at(h);
                let (nc, rh) = rest.split_at(h);
                for k in 0..h {
                    let dn = dh[k] * zc[k];
                    dpre[2 * h + k] = dn * (1.0 - nc[k] * nc[k]);
                    d_prev[k] = dh[k] * (1.0 - zc[k]);
                }
                let drh = &mut daux[..h];
                drh.iter_mut().for_each(|v| *v = 0.0);
                backprop_rows(&dpre[2 * h..], u_n, rh, Some(drh), gu_n);
                for k in 0..h {
                    let dz = dh[k] * (nc[k] - hp[k]);
                    let dr = drh[k] * hp[k];
                    d_prev[k] += drh[k] * rc[k];
                    dpre[k] = dz * zc[k] * (1.0 - zc[k]);
                    dpre[h + k] = dr * rc[k] * (1.0 - rc[k]);
                }
                backprop_rows(&dpre[..2 * h], u_zr, hp, Some(&mut d_prev[..h]), gu_zr);
            }
            CellKind::Mgu => {
                let (u_f, u_n) = u.split_at(h * h);
                let (gu_f, gu_n) = gu.split_at_mut(h * h);
                let (fc, rest) = cache.split_at(h);
                let (nc, fh) = rest.split_at(h);
                for k in 0..h {
                    let dn = dh[k] * fc[k];
                    dpre[h + k] = dn * (1.0 - nc[k] * nc[k]);
                    d_prev[k] = dh[k] * (1.0 - fc[k]);
                }
                let dfh = &mut daux[..h];
                dfh.iter_mut().for_each(|v| *v = 0.0);
                backprop_rows(&dpre[h..2 * h], u_n, fh, Some(dfh), gu_n);
                for k in 0..h {
                    let df = dh[k] * (nc[k] - hp[k]) + dfh[k] * hp[k];
                    d_prev[k] += dfh[k] * fc[k];
                    dpre[k] = df * fc[k] * (1.0 - fc[k]);
                }
                backprop_rows(&dpre[..h], u_f, hp, Some(&mut d_prev[..h]), gu_f);
            }
            CellKind::Brc | CellKind::Nbrc => {
                let (ac, rest) = cache.split_at(h);
                let (cc, nc) = rest.split_at(h);
                for k in 0..h {
                    let dc = dh[k] * (hp[k] - nc[k]);
                    let dn_pre = dh[k] * (1.0 - cc[k]) * (1.0 - nc[k] * nc[k]);
                    let ta = ac[k] - 1.0;
                    dpre[2 * h + k] = dn_pre;
                    dpre[k] = dn_pre * hp[k] * (1.0 - ta * ta);
                    dpre[h + k] = dc * cc[k] * (1.0 - cc[k]);
                    d_prev[k] = dh[k] * cc[k] + dn_pre * ac[k];
                }
                if self.kind == CellKind::Brc {
                    let (wa, wc) = u.split_at(h);
                    let (gwa, gwc) = gu.split_at_mut(h);
                    for k in 0..h {
                        gwa[k] += dpre[k] * hp[k];
                        gwc[k] += dpre[h + k] * hp[k];
                        d_prev[k] += dpre[k] * wa[k] + dpre[h + k] * wc[k];
                    }
                } else {
                    backprop_rows(&dpre[..2 * h], u, hp, Some(&mut d_prev[..h]), gu);
                }
            }
            CellKind::Lstm => {
                let dcn = &d_out[h..2 * h];
                let cp = &prev[h..2 * h];
                let (ic, rest) = cache.split_at(h);
                let (fc, rest) = rest.split_at(h);
                let (gc, rest) = rest.split_at(h);
                let (oc, tc) = rest.split_at(h);
                for k in 0..h {
                    let dc = dcn[k] + dh[k] * oc[k] * (1.0 - tc[k] * tc[k]);
                    dpre[k] = dc * gc[k] * ic[k] * (1.0 - ic[k]);
                    dpre[h + k] = dc * cp[k] * fc[k] * (1.0 - fc[k]);
                    dpre[2 * h + k] = dc * ic[k] * (1.0 - gc[k] * gc[k]);
                    dpre[3 * h + k] = dh[k] * tc[k] * oc[k] * (1.0 - oc[k]);
                    d_prev[h + k] = dc * fc[k];
                }
                backprop_rows(dpre, u, hp, Some(&mut d_prev[..h]), gu);
            }
        }
        for (g, d) in gb.iter_mut().zip(dpre.iter()) {
            *g += d;
        }
        backprop_rows(dpre, w, x, d_x, gw);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn step(kind: CellKind, input: &[f64], prev: &[f64], hidden: usize) -> alloc::vec::Vec<f64> {
        let l = CellLayout::new(kind, input.len(), hidden);
        let p = vec![0.0; l.num_params()];
        let mut out = vec![0.0; l.state_size()];
        let mut cache = vec![0.0; l.cache_size()];
        let mut scratch = vec![0.0; l.scratch_size()];
        l.forward(&p, input, prev, &mut out, &mut cache, &mut scratch);
        out
    }

    #[test]
    fn zero_gru_halves_the_state() {
        let out = step(CellKind::Gru, &[0.3, -2.0], &[0.8, -0.4, 1.0], 3);
        assert_eq!(out, vec![0.4, -0.2, 0.5]);
    }

    #[test]
    fn zero_mgu_halves_the_state() {
        let out = step(CellKind::Mgu, &[1.0], &[0.6, -1.0], 2);
        assert_eq!(out, vec![0.3, -0.5]);
    }

    #[test]
    fn zero_lstm_stays_at_origin() {
        let out = step(CellKind::Lstm, &[5.0, -3.0], &[0.0; 4], 2);
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn zero_brc_mixes_state_and_candidate() {
        // a = 1, c = 1/2, h' = h/2 + tanh(h)/2
        let h = [0.5, -1.0];
        let out = step(CellKind::Brc, &[2.0], &h, 2);
        for k in 0..2 {
            let expected = 0.5 * h[k] + 0.5 * tanh(h[k]);
            assert!((out[k] - expected).abs() < 1e-15);
        }
        let out_n = step(CellKind::Nbrc, &[2.0], &h, 2);
        assert_eq!(out, out_n);
    }

    #[test]
    fn names_round_trip() {
        for k in CellKind::ALL {
            assert_eq!(k.name().parse::<CellKind>(), Ok(k));
        }
        assert!("rnn".parse::<CellKind>().is_err());
        assert_eq!("GRU".parse::<CellKind>(), Ok(CellKind::Gru));
    }
}
