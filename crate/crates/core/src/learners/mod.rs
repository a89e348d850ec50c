//! Training algorithms: behavior cloning, the parallel rollout engine and the
//! randomized adversarial imitation learner built on top of it.

mod bc;
mod demos;
mod engine;
mod rail;
mod update;

pub use bc::{bc_accuracy, bc_initial_params, bc_train, bc_train_with, BcConfig};
pub use demos::{record_demonstrations, DemonstrationSet, MAX_DEMO_ATTEMPTS};
pub use engine::{
    rollout_engine_run, HighwayRollout, RewardAggregation, QuadraticSurrogate, RolloutEngine, RolloutEnv, RolloutResult,
    RolloutTask, Snapshot,
};
pub use rail::{
    iteration_directions, metrics_digest, rail_train, rollout_seed, IterationReport, RailConfig, RailInit,
    RailOutcome, RailTrainer, TrainerState,
};
pub use update::{compute_update, reward_std, RewardRecord};
