//! Tabular Q-learning for the flange-mounted pendulum.

pub mod discretize;
pub mod env;
pub mod oracle;
pub mod qtable;
pub mod train;

pub use discretize::{discretize, DiscreteState, Observation, STATE_COUNT};
pub use env::{
    episode_rng, reward, run_episode, run_episode_observed, ArmSetup, EpisodeMode, EpisodeStats,
    LearningConfig, PendulumEnv, StepRecord, TerminalReason, TrackingMode,
};
pub use qtable::{select_action, ActionId, QTable, ACTIONS, ACTION_COUNT};
pub use train::{
    evaluate, median, median_steps, rollout, train, Checkpoint, EvalSummary, TrainingOutcome,
};
