//! Continuous-action environments used by the training harness.

mod grid;
mod point_mass;

pub use grid::{map_action, Direction, GridLayout, GridWorld, DEFAULT_OVERRIDE_PROB};
pub use point_mass::{PointMass, PointMassConfig};

use crate::Result;

/// Episode horizon shared by all environments: after this many steps without
/// a terminal the episode times out (and still bootstraps).
pub const HORIZON: u64 = 200;

/// Extra per-step information alongside the observation and reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    /// Grid cell occupied after the step, when the environment is a grid.
    pub cell: Option<(usize, usize)>,
    /// Whether a storm override replaced the chosen direction this step.
    pub overridden: bool,
}

/// Result of one environment step. `done` marks a real terminal; `timeout`
/// marks an exhausted horizon. The two are never both set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub timeout: bool,
    pub info: StepInfo,
}

impl StepResult {
    /// True when the episode cannot be stepped further.
    pub fn finished(&self) -> bool {
        self.done || self.timeout
    }
}

/// A seedable episodic environment with actions in `[-1, 1]^action_dim`.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    /// Starts a new episode. The seed drives all in-episode stochasticity,
    /// so identical seeds replay identical transition noise.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Stepping a finished episode is an error.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}
