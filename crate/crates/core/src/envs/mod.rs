//! Concrete environments.

pub mod hike;
pub mod irrelevant;
pub mod tmaze;
pub mod toy;

pub use hike::{altitude, HikeObs, HikeParams, HikeState, MountainHike};
pub use irrelevant::{augment_irrelevant, Augmented, AugmentedObs, AugmentedState, GaussianWalk};
pub use tmaze::{tmaze_exploration_policy, tmaze_horizon, Layout, TMaze, TMazeObs, TMazeParams, TMazeState};
pub use toy::{ChainMdp, SingleStateMdp};
