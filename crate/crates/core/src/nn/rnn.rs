use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::cell::{CellKind, CellLayout};
use crate::error::{Error, Result};
use crate::math::{accumulate_rows, backprop_rows, sqrt};

/// Architecture of a stacked recurrent Q-network with a linear head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnSpec {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub outputs: usize,
}

/// Parameter offsets derived from an [`RnnSpec`]. Parameters live in one flat
/// vector: each layer's block, then the head `W_o (H x A)` and `b_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnArch {
    spec: RnnSpec,
    cells: Vec<CellLayout>,
    offsets: Vec<usize>,
    head: usize,
    total: usize,
}

impl RnnArch {
    pub fn new(spec: RnnSpec) -> Result<Self> {
        if spec.layers == 0 || spec.hidden == 0 || spec.input == 0 || spec.outputs == 0 {
            return Err(Error::InvalidConfig {
                field: "rnn",
                reason: "layers, hidden size, input and output widths must be positive",
            });
        }
        let mut cells = Vec::with_capacity(spec.layers);
        let mut offsets = Vec::with_capacity(spec.layers);
        let mut off = 0;
        for l in 0..spec.layers {
            let input = if l == 0 { spec.input } else { spec.hidden };
            let cell = CellLayout::new(spec.kind, input, spec.hidden);
            offsets.push(off);
            off += cell.num_params();
            cells.push(cell);
        }
        let head = off;
        let total = head + spec.hidden * spec.outputs + spec.outputs;
        Ok(Self {
            spec,
            cells,
            offsets,
            head,
            total,
        })
    }

    pub fn spec(&self) -> &RnnSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.total
    }

    pub fn cell(&self, layer: usize) -> &CellLayout {
        &self.cells[layer]
    }

    /// Range of layer `l`'s parameters inside the flat vector.
    pub fn layer_range(&self, l: usize) -> core::ops::Range<usize> {
        self.offsets[l]..self.offsets[l] + self.cells[l].num_params()
    }

    /// Range of layer `l`'s learned initial state.
    pub fn init_range(&self, l: usize) -> core::ops::Range<usize> {
        let start = self.offsets[l] + self.cells[l].init_offset();
        start..start + self.cells[l].state_size()
    }

    pub fn head_range(&self) -> core::ops::Range<usize> {
        self.head..self.total
    }

    /// Width of the concatenated state of all layers.
    pub fn state_size(&self) -> usize {
        self.cells.iter().map(|c| c.state_size()).sum()
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero initial states.
    pub fn init_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut p = vec![0.0; self.total];
        for (l, cell) in self.cells.iter().enumerate() {
            let bound = 1.0 / sqrt(cell.fan_in() as f64);
            let start = self.offsets[l];
            for v in &mut p[start..start + cell.init_offset()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        let bound = 1.0 / sqrt(self.spec.hidden as f64);
        for v in &mut p[self.head..] {
            *v = rng.random_range(-bound..bound);
        }
        p
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.total {
            return Err(Error::ShapeMismatch {
                what: "rnn parameters",
                expected: self.total,
                found: params.len(),
            });
        }
        Ok(())
    }

    /// The learned initial state `i_θ` of every layer.
    pub fn initial_state(&self, params: &[f64]) -> RnnState {
        let mut layers = Vec::with_capacity(self.cells.len());
        for l in 0..self.cells.len() {
            layers.push(params[self.init_range(l)].to_vec());
        }
        RnnState { layers }
    }

    /// Advances `state` by one input.
    pub fn step(&self, params: &[f64], state: &mut RnnState, x: &[f64]) -> Result<()> {
        self.check_params(params)?;
        if x.len() != self.spec.input {
            return Err(Error::ShapeMismatch {
                what: "rnn input",
                expected: self.spec.input,
                found: x.len(),
            });
        }
        let mut scratch = vec![
            0.0;
            self.cells[0]
                .scratch_size()
                .max(self.cells[self.cells.len() - 1].scratch_size())
        ];
        let mut input: Vec<f64> = x.to_vec();
        for (l, cell) in self.cells.iter().enumerate() {
            let mut out = vec![0.0; cell.state_size()];
            let mut cache = vec![0.0; cell.cache_size()];
            cell.forward(
                &params[self.layer_range(l)],
                &input,
                &state.layers[l],
                &mut out,
                &mut cache,
                &mut scratch,
            );
            input.clear();
            input.extend_from_slice(&out[..self.spec.hidden]);
            state.layers[l] = out;
        }
        Ok(())
    }

    /// Head output `y = W_o h + b_o` on the top layer's hidden vector.
    pub fn head(&self, params: &[f64], top_hidden: &[f64]) -> Vec<f64> {
        let a = self.spec.outputs;
        let (w, b) = params[self.head..].split_at(self.spec.hidden * a);
        let mut y = b.to_vec();
        accumulate_rows(&mut y, w, top_hidden);
        y
    }

    pub fn state_q_values(&self, params: &[f64], state: &RnnState) -> Vec<f64> {
        let top = &state.layers[self.cells.len() - 1];
        self.head(params, &top[..self.spec.hidden])
    }

    /// Unrolls over a row-major `T x input` block from the initial state.
    pub fn unroll(&self, params: &[f64], inputs: &[f64]) -> Result<Trace> {
        let init = self.initial_state(params);
        self.unroll_from(params, &init, inputs)
    }

    /// Unrolls over `inputs` starting from an arbitrary state.
    pub fn unroll_from(&self, params: &[f64], start: &RnnState, inputs: &[f64]) -> Result<Trace> {
        self.check_params(params)?;
        let width = self.spec.input;
        if !inputs.len().is_multiple_of(width) {
            return Err(Error::ShapeMismatch {
                what: "rnn input sequence",
                expected: width,
                found: inputs.len() % width,
            });
        }
        let steps = inputs.len() / width;
        let hidden = self.spec.hidden;
        let mut states = Vec::with_capacity(self.cells.len());
        let mut caches = Vec::with_capacity(self.cells.len());
        let mut scratch = vec![0.0; self.cells.iter().map(|c| c.scratch_size()).max().unwrap_or(0)];
        for (l, cell) in self.cells.iter().enumerate() {
            let s = cell.state_size();
            let c = cell.cache_size();
            let mut st = vec![0.0; (steps + 1) * s];
            st[..s].copy_from_slice(&start.layers[l]);
            let mut ca = vec![0.0; steps * c];
            let p = &params[self.layer_range(l)];
            for t in 0..steps {
                let x: &[f64] = if l == 0 {
                    &inputs[t * width..(t + 1) * width]
                } else {
                    let below: &Vec<f64> = &states[l - 1];
                    let sb = self.cells[l - 1].state_size();
                    &below[(t + 1) * sb..(t + 1) * sb + hidden]
                };
                let (prev, next) = st.split_at_mut((t + 1) * s);
                cell.forward(
                    p,
                    x,
                    &prev[t * s..],
                    &mut next[..s],
                    &mut ca[t * c..(t + 1) * c],
                    &mut scratch,
                );
            }
            states.push(st);
            caches.push(ca);
        }
        Ok(Trace { steps, states, caches })
    }

    /// Q-values at step `t` (0-based input index) of a trace.
    pub fn q_values(&self, params: &[f64], trace: &Trace, t: usize) -> Vec<f64> {
        self.head(params, trace.top_hidden(self, t + 1))
    }

    /// Exact reverse-mode gradient of `sum_k <d_outputs[k].1, y_{t_k}>` with
    /// respect to every parameter, accumulated into `grad`.
    pub fn backward(
        &self,
        params: &[f64],
        inputs: &[f64],
        trace: &Trace,
        d_outputs: &[(usize, &[f64])],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_params(params)?;
        if grad.len() != self.total {
            return Err(Error::ShapeMismatch {
                what: "rnn gradient",
                expected: self.total,
                found: grad.len(),
            });
        }
        let layers = self.cells.len();
        let hidden = self.spec.hidden;
        let width = self.spec.input;
        let a = self.spec.outputs;
        let mut d_state: Vec<Vec<f64>> = self.cells.iter().map(|c| vec![0.0; c.state_size()]).collect();
        let mut d_prev: Vec<Vec<f64>> = d_state.clone();
        let mut scratch = vec![0.0; self.cells.iter().map(|c| c.scratch_size()).max().unwrap_or(0)];
        let (head_w, _) = params[self.head..].split_at(hidden * a);
        for t in (0..trace.steps).rev() {
            for (step, dy) in d_outputs {
                if *step != t {
                    continue;
                }
                let top = trace.top_hidden(self, t + 1);
                let (gw, gb) = grad[self.head..].split_at_mut(hidden * a);
                for (g, d) in gb.iter_mut().zip(dy.iter()) {
                    *g += d;
                }
                backprop_rows(dy, head_w, top, Some(&mut d_state[layers - 1][..hidden]), gw);
            }
            for l in (0..layers).rev() {
                let cell = &self.cells[l];
                let s = cell.state_size();
                let c = cell.cache_size();
                let range = self.layer_range(l);
                let prev = &trace.states[l][t * s..(t + 1) * s];
                let cache = &trace.caches[l][t * c..(t + 1) * c];
                let (lower, upper) = d_state.split_at_mut(l);
                let d_out = &upper[0];
                if l == 0 {
                    let x = &inputs[t * width..(t + 1) * width];
                    cell.backward(
                        &params[range.clone()],
                        x,
                        prev,
                        cache,
                        d_out,
                        &mut d_prev[l],
                        None,
                        &mut grad[range],
                        &mut scratch,
                    );
                } else {
                    let sb = self.cells[l - 1].state_size();
                    let x = &trace.states[l - 1][(t + 1) * sb..(t + 1) * sb + hidden];
                    let d_x = &mut lower[l - 1][..hidden];
                    cell.backward(
                        &params[range.clone()],
                        x,
                        prev,
                        cache,
                        d_out,
                        &mut d_prev[l],
                        Some(d_x),
                        &mut grad[range],
                        &mut scratch,
                    );
                }
                core::mem::swap(&mut d_state[l], &mut d_prev[l]);
            }
        }
        for l in 0..layers {
            for (g, d) in grad[self.init_range(l)].iter_mut().zip(&d_state[l]) {
                *g += d;
            }
        }
        Ok(())
    }
}

/// Per-layer recurrent state; for LSTM layers each entry is `(h, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnState {
    pub layers: Vec<Vec<f64>>,
}

impl RnnState {
    /// All layers' states concatenated, bottom layer first.
    pub fn concat(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }
}

/// Forward values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    steps: usize,
    /// Per layer, `(T + 1) x state` with the start state first.
    states: Vec<Vec<f64>>,
    caches: Vec<Vec<f64>>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Top hidden vector after `k` inputs.
    pub fn top_hidden<'a>(&'a self, arch: &RnnArch, k: usize) -> &'a [f64] {
        let l = arch.cells.len() - 1;
        let s = arch.cells[l].state_size();
        &self.states[l][k * s..k * s + arch.spec.hidden]
    }

    /// The full state of every layer after `k` inputs.
    pub fn state_after(&self, arch: &RnnArch, k: usize) -> RnnState {
        let layers = arch
            .cells
            .iter()
            .zip(&self.states)
            .map(|(c, st)| st[k * c.state_size()..(k + 1) * c.state_size()].to_vec())
            .collect();
        RnnState { layers }
    }

    pub fn final_state(&self, arch: &RnnArch) -> RnnState {
        self.state_after(arch, self.steps)
    }
}

/// An architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnStack {
    pub arch: RnnArch,
    pub params: Vec<f64>,
}

impl RnnStack {
    pub fn new(spec: RnnSpec, rng: &mut dyn RngCore) -> Result<Self> {
        let arch = RnnArch::new(spec)?;
        let params = arch.init_params(rng);
        Ok(Self { arch, params })
    }

    pub fn from_params(spec: RnnSpec, params: Vec<f64>) -> Result<Self> {
        let arch = RnnArch::new(spec)?;
        arch.check_params(&params)?;
        Ok(Self { arch, params })
    }

    pub fn spec(&self) -> &RnnSpec {
        self.arch.spec()
    }

    pub fn unroll(&self, inputs: &[f64]) -> Result<Trace> {
        self.arch.unroll(&self.params, inputs)
    }

    /// Q-values after the last input.
    pub fn q_values(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Err(Error::Empty("rnn input sequence"));
        }
        let trace = self.unroll(inputs)?;
        Ok(self.arch.q_values(&self.params, &trace, trace.steps() - 1))
    }

    /// Concatenated state of all layers after the last input.
    pub fn hidden_state(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.unroll(inputs)?.final_state(&self.arch).concat())
    }

    pub fn initial_state(&self) -> RnnState {
        self.arch.initial_state(&self.params)
    }

    pub fn step(&self, state: &mut RnnState, x: &[f64]) -> Result<()> {
        self.arch.step(&self.params, state, x)
    }

    pub fn state_q_values(&self, state: &RnnState) -> Vec<f64> {
        self.arch.state_q_values(&self.params, state)
    }
}
