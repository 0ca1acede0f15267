//! The unified actor-critic agent: twin critics trained against the
//! scheduled ensemble target, a deterministic actor updated with delayed
//! policy gradients, and Polyak-averaged target copies of all three nets.
//!
//! The classic mean-target actor-critic, the clipped-double-Q minimum, and
//! the scheduled penalty are all configurations of this one agent:
//! `alpha = 0, kappa = 0` gives ensemble-mean targets, `alpha = 1,
//! kappa = 0` gives minimum targets, and nonzero `kappa` produces the
//! time-scheduled penalty.
//!
//! # Random draw order
//!
//! All stochastic choices are made on the caller-supplied stream and their
//! order is part of the contract (reference implementations replay it):
//!
//! - [`Agent::select_action`]: `action_dim` Gaussian draws, skipped
//!   entirely when the noise std is zero.
//! - [`Agent::train_step`]: critic-1 batch indices, then critic-1 target
//!   smoothing draws (per transition, per action dim; skipped when the
//!   smoothing std is zero), then the same for critic 2, then — on delayed
//!   policy steps only — the actor batch indices.
//!
//! Target network updates draw nothing.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::{soft_update, Adam, Mlp, MlpGrads, Workspace};
use crate::replay::{ReplayBuffer, Transition};
use crate::uncertainty::{scheduled_target, ScheduleState};
use crate::{Error, Result};

/// Every tunable of the agent. Defaults follow the hyper-parameter set the
/// algorithm family is normally run with; the penalty schedule defaults to
/// `alpha = 2, kappa = 5`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Hidden layer widths for actor and critics.
    pub hidden: Vec<usize>,
    /// Late-stage penalty multiplier on ensemble spread.
    pub alpha: f64,
    /// Decay rate of the early exploration bonus.
    pub kappa: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Polyak rate for target networks.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// Actor (and target) updates happen every this many train steps.
    pub policy_freq: u64,
    /// Std of Gaussian exploration noise added when collecting.
    pub explore_noise_std: f64,
    /// Std of clipped Gaussian smoothing noise on target-policy actions.
    pub target_noise_std: f64,
    /// Clip bound for the target smoothing noise.
    pub noise_clip: f64,
    /// Environment steps per schedule epoch (the counter `t` advances this often).
    pub epoch_env_steps: u64,
    /// Train steps between refreshes of the cached eta value.
    pub eta_refresh_train_steps: u64,
    /// Environment steps collected with uniform random actions before
    /// training starts.
    pub warmup_steps: u64,
    pub buffer_capacity: usize,
}

impl AgentConfig {
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        AgentConfig {
            obs_dim,
            action_dim,
            hidden: vec![256, 256],
            alpha: 2.0,
            kappa: 5.0,
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            batch_size: 256,
            policy_freq: 2,
            explore_noise_std: 0.1,
            target_noise_std: 0.2,
            noise_clip: 2.0,
            epoch_env_steps: 10_000,
            eta_refresh_train_steps: 100_000,
            warmup_steps: 1_000,
            buffer_capacity: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.obs_dim == 0 || self.action_dim == 0 {
            return fail("observation and action dimensions must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.policy_freq == 0 {
            return fail("policy_freq must be >= 1".into());
        }
        if self.explore_noise_std < 0.0 || self.target_noise_std < 0.0 {
            return fail("noise stds must be >= 0".into());
        }
        if self.noise_clip < 0.0 {
            return fail("noise_clip must be >= 0".into());
        }
        if !self.alpha.is_finite() || !self.kappa.is_finite() {
            return fail("alpha and kappa must be finite".into());
        }
        if self.actor_lr < 0.0 || self.critic_lr < 0.0 {
            return fail("learning rates must be >= 0".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.epoch_env_steps == 0 || self.eta_refresh_train_steps == 0 {
            return fail("schedule periods must be >= 1".into());
        }
        if self.buffer_capacity == 0 {
            return fail("buffer capacity must be >= 1".into());
        }
        Ok(())
    }
}

/// Gradient of `0.5 * mean_j (Q(input_j) - target_j)^2` with respect to the
/// critic parameters, plus the loss value itself. Targets are constants.
pub fn critic_loss_grads(
    critic: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<(f64, MlpGrads)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::InvalidConfig(
            "critic batch must be nonempty with one target per input".into(),
        ));
    }
    let n = inputs.len() as f64;
    let mut ws = Workspace::new();
    let mut grads = MlpGrads::zeros_like(critic);
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        let q = ws.forward(critic, x)?[0];
        let diff = q - y;
        loss += 0.5 * diff * diff;
        ws.backward_acc(critic, &[diff / n], &mut grads)?;
    }
    Ok((loss / n, grads))
}

/// Value and gradient of the deterministic policy objective
/// `mean_j Q(s_j, pi(s_j))` with respect to the actor parameters. Gradients
/// flow through the critic's action input into the actor; the critic's own
/// parameters receive nothing.
pub fn actor_objective_grads(
    actor: &Mlp,
    critic: &Mlp,
    observations: &[&[f64]],
) -> Result<(f64, MlpGrads)> {
    if observations.is_empty() {
        return Err(Error::InvalidConfig("actor batch must be nonempty".into()));
    }
    let n = observations.len() as f64;
    let mut actor_ws = Workspace::new();
    let mut critic_ws = Workspace::new();
    let mut input = Vec::new();
    let mut grads = MlpGrads::zeros_like(actor);
    let mut objective = 0.0;
    for &obs in observations {
        let action = actor_ws.forward(actor, obs)?;
        input.clear();
        input.extend_from_slice(obs);
        input.extend_from_slice(action);
        objective += critic_ws.forward(critic, &input)?[0];
        let d_input = critic_ws.backward_input(critic, &[1.0 / n])?;
        let d_action = &d_input[obs.len()..];
        actor_ws.backward_acc(actor, d_action, &mut grads)?;
    }
    Ok((objective / n, grads))
}

/// Full learner state: online and target networks, optimizer state, and the
/// penalty schedule clock. One instance per training loop.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub schedule: ScheduleState,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    train_step: u64,
    cfg: AgentConfig,
}

impl Agent {
    /// Initializes online networks from `rng` (actor, then critic 1, then
    /// critic 2) and makes the targets exact copies.
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let actor = Mlp::actor(cfg.obs_dim, &cfg.hidden, cfg.action_dim, rng)?;
        let critic1 = Mlp::critic(cfg.obs_dim, cfg.action_dim, &cfg.hidden, rng)?;
        let critic2 = Mlp::critic(cfg.obs_dim, cfg.action_dim, &cfg.hidden, rng)?;
        let schedule = ScheduleState::new(
            cfg.epoch_env_steps,
            cfg.eta_refresh_train_steps,
            cfg.alpha,
            cfg.kappa,
        )?;
        Ok(Agent {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor_opt: Adam::new(&actor),
            critic1_opt: Adam::new(&critic1),
            critic2_opt: Adam::new(&critic2),
            actor,
            critic1,
            critic2,
            schedule,
            train_step: 0,
            cfg,
        })
    }

    #[inline]
    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    #[inline]
    pub fn train_steps_done(&self) -> u64 {
        self.train_step
    }

    /// Counts one collected environment step on the schedule clock.
    #[inline]
    pub fn tick_env(&mut self) {
        self.schedule.tick_env();
    }

    /// Deterministic policy output plus optional Gaussian exploration noise,
    /// clamped to the action box. With `noise_std == 0` no randomness is
    /// consumed and the action is the bare policy output.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        noise_std: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut action = self.actor.forward(obs)?;
        if noise_std > 0.0 {
            let normal = Normal::new(0.0, noise_std)
                .map_err(|_| Error::InvalidConfig(format!("bad noise std {noise_std}")))?;
            for a in &mut action {
                *a = (*a + normal.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(action)
    }

    /// Scheduled bootstrap target for each transition: the target actor
    /// proposes the next action (optionally smoothed with clipped Gaussian
    /// noise), both target critics score it, and the ensemble statistics are
    /// penalized with the cached eta.
    pub fn compute_batch_targets<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("target batch must be nonempty".into()));
        }
        let eta_val = self.schedule.eta_cached();
        let smoothing = if self.cfg.target_noise_std > 0.0 {
            Some(
                Normal::new(0.0, self.cfg.target_noise_std)
                    .map_err(|_| Error::InvalidConfig("bad target noise std".into()))?,
            )
        } else {
            None
        };
        let mut actor_ws = Workspace::new();
        let mut c1_ws = Workspace::new();
        let mut c2_ws = Workspace::new();
        let mut input = Vec::new();
        let mut targets = Vec::with_capacity(batch.len());
        for tr in batch {
            let next_action = actor_ws.forward(&self.actor_target, &tr.next_obs)?;
            input.clear();
            input.extend_from_slice(&tr.next_obs);
            if let Some(normal) = &smoothing {
                for &a in next_action {
                    let noise = normal
                        .sample(rng)
                        .clamp(-self.cfg.noise_clip, self.cfg.noise_clip);
                    input.push((a + noise).clamp(-1.0, 1.0));
                }
            } else {
                input.extend_from_slice(next_action);
            }
            let q1 = c1_ws.forward(&self.critic1_target, &input)?[0];
            let q2 = c2_ws.forward(&self.critic2_target, &input)?[0];
            targets.push(scheduled_target(
                tr.reward,
                tr.done,
                self.cfg.gamma,
                q1,
                q2,
                eta_val,
            )?);
        }
        Ok(targets)
    }

    /// One temporal-difference step for each critic. Each critic draws its
    /// own mini-batch and its own target smoothing noise. Returns the two
    /// loss values.
    pub fn critic_update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<[f64; 2]> {
        let mut losses = [0.0; 2];
        for which in 0..2 {
            let indices = buffer.sample_indices(self.cfg.batch_size, rng)?;
            let batch: Vec<&Transition> = indices.iter().map(|&i| buffer.get(i)).collect();
            let targets = self.compute_batch_targets(&batch, rng)?;
            let inputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|tr| {
                    let mut x = Vec::with_capacity(tr.obs.len() + tr.action.len());
                    x.extend_from_slice(&tr.obs);
                    x.extend_from_slice(&tr.action);
                    x
                })
                .collect();
            let critic = if which == 0 {
                &self.critic1
            } else {
                &self.critic2
            };
            let (loss, grads) = critic_loss_grads(critic, &inputs, &targets)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    step: self.train_step,
                    what: "non-finite critic loss",
                });
            }
            if which == 0 {
                self.critic1_opt
                    .step(&mut self.critic1, &grads, self.cfg.critic_lr)?;
            } else {
                self.critic2_opt
                    .step(&mut self.critic2, &grads, self.cfg.critic_lr)?;
            }
            losses[which] = loss;
        }
        Ok(losses)
    }

    /// One delayed policy-gradient step: ascend `mean Q_1(s, pi(s))` over a
    /// fresh mini-batch. Critic parameters are left untouched.
    pub fn actor_update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<f64> {
        let indices = buffer.sample_indices(self.cfg.batch_size, rng)?;
        let observations: Vec<&[f64]> = indices
            .iter()
            .map(|&i| buffer.get(i).obs.as_slice())
            .collect();
        let (objective, mut grads) =
            actor_objective_grads(&self.actor, &self.critic1, &observations)?;
        if !objective.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged {
                step: self.train_step,
                what: "non-finite actor objective",
            });
        }
        // Adam minimizes; flip the sign to ascend the objective.
        grads.scale(-1.0);
        self.actor_opt
            .step(&mut self.actor, &grads, self.cfg.actor_lr)?;
        Ok(objective)
    }

    /// One full train iteration: tick the schedule clock, update both
    /// critics, and on every `policy_freq`-th call also update the actor and
    /// Polyak-sync all three target networks.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<()> {
        self.train_step += 1;
        self.schedule.tick_train();
        self.critic_update(buffer, rng)?;
        if self.train_step % self.cfg.policy_freq == 0 {
            self.actor_update(buffer, rng)?;
            soft_update(&mut self.actor_target, &self.actor, self.cfg.tau)?;
            soft_update(&mut self.critic1_target, &self.critic1, self.cfg.tau)?;
            soft_update(&mut self.critic2_target, &self.critic2, self.cfg.tau)?;
        }
        Ok(())
    }
}
