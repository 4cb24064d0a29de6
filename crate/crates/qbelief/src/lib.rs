//! Experiment runner for measuring how much the hidden states of recurrent
//! Q-networks encode the belief over the hidden state of a POMDP.
//!
//! The numerical work lives in [`qbelief_core`]; this crate adds the
//! configuration file, on-disk formats, the parallel job runner, reports and
//! the command-line interface.

pub mod cli;
pub mod config;
pub mod formats;
pub mod report;
pub mod runner;

pub use qbelief_core as core;
