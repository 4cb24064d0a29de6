//! Belief filters: exact for enumerable state spaces, particle-based for
//! continuous ones, and a closed-form Kalman filter for the Gaussian walk.

pub mod discrete;
pub mod kalman;
pub mod particle;

pub use discrete::{belief_entropy, belief_step, filter_history, initial_belief, DiscreteBelief};
pub use kalman::{kalman_irrelevant, GaussianBelief, KalmanFilter};
pub use particle::{particle_filter, particle_filter_final, ParticleFilter, ParticleSet};
