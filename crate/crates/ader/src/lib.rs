//! Deep actor-critic continuous control with an uncertainty-scheduled
//! target penalty.
//!
//! One parameterized agent covers the classic deterministic actor-critic
//! (ensemble-mean targets), clipped double-Q learning (minimum targets),
//! and the scheduled variant in between: the bootstrap target is
//! `r + gamma * (mu - eta(t) * sigma)` over a twin-critic ensemble, where
//! `eta(t) = alpha - kappa * sqrt(ln t / t)` grows from an early
//! exploration bonus toward a late robustness penalty.
//!
//! The crate bundles everything needed to study that schedule at desk
//! scale: a from-scratch differentiable MLP with Adam and Polyak target
//! copies, a FIFO replay buffer, a stochastic grid world plus a point-mass
//! smoke environment, a deterministic seeded training harness with CSV
//! metrics, and PCA/visitation analysis of the visited states.

pub mod agent;
pub mod analysis;
pub mod env;
pub mod harness;
mod error;
pub mod nn;
pub mod replay;
pub mod uncertainty;

pub use error::{Error, Result};
