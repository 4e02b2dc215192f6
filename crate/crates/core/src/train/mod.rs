//! Optimization of the per-timestep objective.

mod optim;
mod timestep;
mod warm;

pub use optim::{adam_step, one_cycle_lr, LrSchedule, OptState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use timestep::{gradients, log_to_jsonl, train_timestep, train_timestep_observed, EpochLog, TrainConfig, TrainFailure, Trained};
pub use warm::{warm_start, NEW_STICK_BIAS_SHIFT};
