//! Episodic environments sharing one reset/step/observe interface.

pub mod button;
pub mod cowboy;
pub mod matrix;

pub use button::{ButtonGridConfig, ButtonGridEnv};
pub use cowboy::{bull_policy, BullBranch, BullMove, CowboyBullConfig, CowboyBullEnv};
pub use matrix::{MatrixEnv, MatrixGame};

use crate::error::Result;

/// Reward returned by one team step. `mean_reward` is the noise-free value
/// used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub mean_reward: f64,
    pub done: bool,
}

pub trait Environment {
    type Obs;

    fn num_agents(&self) -> usize;
    fn action_counts(&self) -> &[usize];
    fn reset(&mut self);
    /// Errors with a contract violation once the episode is over.
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome>;
    fn observe(&self, agent: usize) -> Self::Obs;
    fn is_done(&self) -> bool;
    /// Whether the episode ended in the environment's success event.
    fn is_win(&self) -> bool;
    /// Reseeds the environment's own random stream.
    fn reseed(&mut self, seed: u64);
}

/// Environment whose observations are small integer keys, as needed by the
/// tabular learners.
pub trait TabularEnv: Environment<Obs = usize> {
    /// Number of distinct observation keys for each agent.
    fn observation_counts(&self) -> Vec<usize>;
    /// Index of the current global state.
    fn state_index(&self) -> usize;
}
