//! A one-dimensional point mass driven toward a goal position. Continuous
//! smoke-test environment: accelerate left/right, optional Gaussian process
//! noise, reward is the negative distance to the goal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Environment, StepInfo, StepResult, HORIZON};
use crate::{Error, Result};

/// Reward paid when the mass settles within [`PointMassConfig::goal_radius`].
pub const GOAL_REWARD: f64 = 10.0;

const POS_BOUND: f64 = 5.0;
const VEL_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassConfig {
    pub start: f64,
    pub goal: f64,
    pub noise_std: f64,
    pub goal_radius: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        PointMassConfig {
            start: 0.0,
            goal: 1.0,
            noise_std: 0.0,
            goal_radius: 0.05,
        }
    }
}

/// Live point-mass episode state; observation is `[position, velocity]`.
#[derive(Debug, Clone)]
pub struct PointMass {
    cfg: PointMassConfig,
    position: f64,
    velocity: f64,
    step_count: u64,
    finished: bool,
    rng: ChaCha8Rng,
}

impl PointMass {
    pub fn new(cfg: PointMassConfig) -> Self {
        PointMass {
            cfg,
            position: cfg.start,
            velocity: 0.0,
            step_count: 0,
            finished: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    #[inline]
    pub fn position(&self) -> f64 {
        self.position
    }

    #[inline]
    pub fn velocity(&self) -> f64 {
        self.velocity
    }
}

impl Environment for PointMass {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.position = self.cfg.start;
        self.velocity = 0.0;
        self.step_count = 0;
        self.finished = false;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        vec![self.position, self.velocity]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        if action.len() != 1 {
            return Err(Error::DimMismatch {
                what: "point-mass action",
                expected: 1,
                got: action.len(),
            });
        }
        if action[0].is_nan() {
            return Err(Error::NonFinite("point-mass action"));
        }
        let a = action[0].clamp(-1.0, 1.0);
        self.step_count += 1;

        let noise = if self.cfg.noise_std > 0.0 {
            Normal::new(0.0, self.cfg.noise_std)
                .expect("validated std")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        self.velocity = (self.velocity + 0.1 * a + noise).clamp(-VEL_BOUND, VEL_BOUND);
        self.position = (self.position + self.velocity).clamp(-POS_BOUND, POS_BOUND);

        let dist = (self.position - self.cfg.goal).abs();
        let done = dist < self.cfg.goal_radius;
        let reward = if done { GOAL_REWARD } else { -dist };
        let timeout = !done && self.step_count >= HORIZON;
        self.finished = done || timeout;
        Ok(StepResult {
            obs: vec![self.position, self.velocity],
            reward,
            done,
            timeout,
            info: StepInfo::default(),
        })
    }
}
