//! Deep Q-network strategist.

pub mod adam;
pub mod checkpoint;
pub mod dqn;
pub mod mlp;
pub mod policy;
pub mod replay;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dqn::{
    compute_targets, curve_to_csv, greedy_rollout, random_rollout, rollout, train, train_step, CurvePoint,
    TrainConfig, TrainOutcome,
};
pub use mlp::{argmax, Dense, Gradients, QNetwork};
pub use policy::{select_action, EpsilonSchedule};
pub use replay::{ReplayBuffer, Transition};
