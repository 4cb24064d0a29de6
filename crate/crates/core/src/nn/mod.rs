//! Dense networks with hand-written reverse-mode gradients.

pub mod adam;
pub mod cell;
pub mod deepset;
mod gemm;
pub mod matrix;
pub mod mlp;
pub mod rnn;

pub use adam::{Adam, AdamConfig};
pub use cell::{CellKind, CellLayout};
pub use deepset::{DeepSetLayout, SetRef};
pub use matrix::DenseMatrix;
pub use mlp::{MlpCache, MlpLayout};
pub use rnn::{RnnArch, RnnSpec, RnnStack, RnnState, Trace};
