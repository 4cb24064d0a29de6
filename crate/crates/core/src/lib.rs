//! Core simulation, filtering, recurrent Q-learning and mutual-information
//! estimation. `no_std` with `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod belief;
pub mod drqn;
pub mod envs;
pub mod error;
pub mod math;
pub mod mine;
pub mod nn;
pub mod pomdp;
pub mod protocol;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
