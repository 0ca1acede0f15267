//! Experiment orchestration: seeded training runs, periodic noise-free
//! evaluation, metric logging, and run-directory output files.
//!
//! # Reproducibility
//!
//! A run is a pure function of its [`RunConfig`]. The master stream seeded
//! by `cfg.seed` is split exactly once, in this order: network
//! initialization seed, episode-reset seed stream, agent stream, evaluation
//! stream. Per collected step the agent stream then serves, in order: the
//! warmup/exploration action draws, and (once training has started) the
//! draws listed under [`Agent::train_step`]. Environment stochasticity
//! lives in per-episode seeds taken from the reset stream, and evaluation
//! episodes draw their seeds from the evaluation stream, so adding or
//! removing evaluations never perturbs training.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, AgentConfig};
use crate::env::{Environment, GridLayout, GridWorld, PointMass, PointMassConfig};
use crate::replay::{ReplayBuffer, Transition};
use crate::{Error, Result};

/// Named hyper-parameter bindings for the study variants. Each tag pins the
/// schedule parameters exactly; `Custom` leaves the config untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Minimum-target baseline: `alpha = 1, kappa = 0`.
    Td3,
    /// Scheduled penalty at its basic setting: `alpha = 2, kappa = 5`.
    Basic,
    /// No robustness improvement: `alpha = 1, kappa = 5`.
    NoRi,
    /// No periodical update: basic setting with the eta cache refreshed
    /// every train step.
    NoPu,
    /// Ensemble-mean baseline: `alpha = 0, kappa = 0`.
    Ddpg,
    /// Whatever the config already says.
    Custom,
}

impl Variant {
    pub const ALL_NAMED: [Variant; 5] = [
        Variant::Td3,
        Variant::Basic,
        Variant::NoRi,
        Variant::NoPu,
        Variant::Ddpg,
    ];

    /// Forces the hyper-parameters this tag stands for.
    pub fn apply(self, cfg: &mut AgentConfig) {
        match self {
            Variant::Td3 => {
                cfg.alpha = 1.0;
                cfg.kappa = 0.0;
            }
            Variant::Basic => {
                cfg.alpha = 2.0;
                cfg.kappa = 5.0;
            }
            Variant::NoRi => {
                cfg.alpha = 1.0;
                cfg.kappa = 5.0;
            }
            Variant::NoPu => {
                cfg.alpha = 2.0;
                cfg.kappa = 5.0;
                cfg.eta_refresh_train_steps = 1;
            }
            Variant::Ddpg => {
                cfg.alpha = 0.0;
                cfg.kappa = 0.0;
            }
            Variant::Custom => {}
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Td3 => "td3",
            Variant::Basic => "basic",
            Variant::NoRi => "no-ri",
            Variant::NoPu => "no-pu",
            Variant::Ddpg => "ddpg",
            Variant::Custom => "custom",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "td3" => Ok(Variant::Td3),
            "basic" => Ok(Variant::Basic),
            "no-ri" | "nori" => Ok(Variant::NoRi),
            "no-pu" | "nopu" => Ok(Variant::NoPu),
            "ddpg" => Ok(Variant::Ddpg),
            "custom" => Ok(Variant::Custom),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

/// Which environment a run trains on.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Grid {
        layout: GridLayout,
        override_prob: f64,
    },
    PointMass(PointMassConfig),
}

impl EnvSpec {
    pub fn default_grid() -> Self {
        EnvSpec::Grid {
            layout: GridLayout::default_5x5(),
            override_prob: crate::env::DEFAULT_OVERRIDE_PROB,
        }
    }

    pub fn build(&self) -> Box<dyn Environment> {
        match self {
            EnvSpec::Grid {
                layout,
                override_prob,
            } => Box::new(GridWorld::with_override_prob(layout.clone(), *override_prob)),
            EnvSpec::PointMass(cfg) => Box::new(PointMass::new(*cfg)),
        }
    }

    pub fn obs_dim(&self) -> usize {
        2
    }

    pub fn action_dim(&self) -> usize {
        1
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Grid { .. } => "grid",
            EnvSpec::PointMass(_) => "point",
        }
    }

    /// Grid dimensions when the environment is a grid.
    pub fn grid_dims(&self) -> Option<(usize, usize)> {
        match self {
            EnvSpec::Grid { layout, .. } => Some((layout.width(), layout.height())),
            EnvSpec::PointMass(_) => None,
        }
    }
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub agent: AgentConfig,
    pub variant: Variant,
    pub seed: u64,
    pub total_env_steps: u64,
    /// Evaluate every this many environment steps.
    pub eval_every: u64,
    pub eval_episodes: u32,
    /// Record every `state_stride`-th visited state for later analysis.
    pub state_stride: u64,
    /// When set, run outputs are written under this directory.
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Builds a config for `env` with agent defaults, then applies the
    /// variant's bindings.
    pub fn new(env: EnvSpec, variant: Variant, seed: u64) -> Self {
        let mut agent = AgentConfig::new(env.obs_dim(), env.action_dim());
        variant.apply(&mut agent);
        RunConfig {
            env,
            agent,
            variant,
            seed,
            total_env_steps: 50_000,
            eval_every: 2_500,
            eval_episodes: 10,
            state_stride: 10,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.agent.obs_dim != self.env.obs_dim() || self.agent.action_dim != self.env.action_dim()
        {
            return Err(Error::InvalidConfig(
                "agent dimensions do not match the environment".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::InvalidConfig("eval_episodes must be >= 1".into()));
        }
        if self.state_stride == 0 {
            return Err(Error::InvalidConfig("state_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Plain `key=value` echo of the full configuration, one line each.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let a = &self.agent;
        s.push_str(&format!("env={}\n", self.env.name()));
        match &self.env {
            EnvSpec::Grid {
                layout,
                override_prob,
            } => {
                let map = format!("{layout}").replace('\n', "/");
                s.push_str(&format!("map={map}\n"));
                s.push_str(&format!("override_prob={override_prob}\n"));
            }
            EnvSpec::PointMass(pm) => {
                s.push_str(&format!("pm_start={}\n", pm.start));
                s.push_str(&format!("pm_goal={}\n", pm.goal));
                s.push_str(&format!("pm_noise_std={}\n", pm.noise_std));
                s.push_str(&format!("pm_goal_radius={}\n", pm.goal_radius));
            }
        }
        s.push_str(&format!("variant={}\n", self.variant));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("total_env_steps={}\n", self.total_env_steps));
        s.push_str(&format!("eval_every={}\n", self.eval_every));
        s.push_str(&format!("eval_episodes={}\n", self.eval_episodes));
        s.push_str(&format!("state_stride={}\n", self.state_stride));
        s.push_str(&format!("obs_dim={}\n", a.obs_dim));
        s.push_str(&format!("action_dim={}\n", a.action_dim));
        let hidden: Vec<String> = a.hidden.iter().map(|h| h.to_string()).collect();
        s.push_str(&format!("hidden={}\n", hidden.join(",")));
        s.push_str(&format!("alpha={}\n", a.alpha));
        s.push_str(&format!("kappa={}\n", a.kappa));
        s.push_str(&format!("gamma={}\n", a.gamma));
        s.push_str(&format!("tau={}\n", a.tau));
        s.push_str(&format!("actor_lr={}\n", a.actor_lr));
        s.push_str(&format!("critic_lr={}\n", a.critic_lr));
        s.push_str(&format!("batch_size={}\n", a.batch_size));
        s.push_str(&format!("policy_freq={}\n", a.policy_freq));
        s.push_str(&format!("explore_noise_std={}\n", a.explore_noise_std));
        s.push_str(&format!("target_noise_std={}\n", a.target_noise_std));
        s.push_str(&format!("noise_clip={}\n", a.noise_clip));
        s.push_str(&format!("epoch_env_steps={}\n", a.epoch_env_steps));
        s.push_str(&format!(
            "eta_refresh_train_steps={}\n",
            a.eta_refresh_train_steps
        ));
        s.push_str(&format!("warmup_steps={}\n", a.warmup_steps));
        s.push_str(&format!("buffer_capacity={}\n", a.buffer_capacity));
        s
    }
}

/// One evaluation record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub env_step: u64,
    pub mean_return: f64,
    pub failure_rate: f64,
}

/// Per-cell visit counts over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitationGrid {
    width: usize,
    height: usize,
    counts: Vec<u64>,
}

impl VisitationGrid {
    pub fn new(width: usize, height: usize) -> Self {
        VisitationGrid {
            width,
            height,
            counts: vec![0; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Adds one visit to `cell = (col, row)`.
    pub fn record(&mut self, cell: (usize, usize)) -> Result<()> {
        let (col, row) = cell;
        if col >= self.width || row >= self.height {
            return Err(Error::InvalidConfig(format!(
                "cell ({col}, {row}) outside {}x{} grid",
                self.width, self.height
            )));
        }
        self.counts[row * self.width + col] += 1;
        Ok(())
    }

    #[inline]
    pub fn count(&self, cell: (usize, usize)) -> u64 {
        self.counts[cell.1 * self.width + cell.0]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Everything a run reports: evaluation rows, visitation counts (grid runs),
/// and the subsampled stream of visited states.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    pub visitation: Option<VisitationGrid>,
    /// Flat row-major states, `obs_dim` values per record.
    pub visited_states: Vec<f64>,
    pub obs_dim: usize,
    /// Environment steps actually executed.
    pub env_steps: u64,
    /// Set when training aborted on non-finite values; the final metrics row
    /// is the diagnostic NaN row.
    pub diverged_at: Option<u64>,
}

impl MetricsLog {
    fn new(obs_dim: usize, grid_dims: Option<(usize, usize)>) -> Self {
        MetricsLog {
            rows: Vec::new(),
            visitation: grid_dims.map(|(w, h)| VisitationGrid::new(w, h)),
            visited_states: Vec::new(),
            obs_dim,
            env_steps: 0,
            diverged_at: None,
        }
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// The metrics table in CSV form.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("env_step,mean_return,failure_rate\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.env_step, row.mean_return, row.failure_rate
            ));
        }
        out
    }
}

/// Runs a policy for `episodes` noise-free episodes. Episode seeds come from
/// `rng` (all drawn up front, one per episode). Returns the mean
/// undiscounted return and the fraction of episodes that ended without
/// reaching the goal.
pub fn evaluate_policy(
    mut policy: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    env: &mut dyn Environment,
    episodes: u32,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..episodes).map(|_| rng.next_u64()).collect();
    let mut total = 0.0;
    let mut failures = 0u32;
    for seed in seeds {
        let mut obs = env.reset(seed);
        let mut ep_return = 0.0;
        loop {
            let action = policy(&obs)?;
            let step = env.step(&action)?;
            ep_return += step.reward;
            if step.finished() {
                if !step.done {
                    failures += 1;
                }
                break;
            }
            obs = step.obs;
        }
        total += ep_return;
    }
    Ok((
        total / f64::from(episodes),
        f64::from(failures) / f64::from(episodes),
    ))
}

/// Evaluates the agent's deterministic policy (no exploration noise).
pub fn evaluate(
    agent: &Agent,
    env: &mut dyn Environment,
    episodes: u32,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(f64, f64)> {
    evaluate_policy(|obs| agent.actor.forward(obs), env, episodes, rng)
}

/// Executes one seeded training run and returns its metrics.
///
/// Per environment step: act (uniform random during warmup, noisy policy
/// after), step the environment, store the transition, tick the epoch
/// clock, then run exactly one train iteration once warmup has finished.
/// Episodes reset on terminal or timeout with a fresh seed from the reset
/// stream. Every `eval_every` steps the deterministic policy is evaluated
/// on a separate environment instance.
///
/// A non-finite loss aborts the run: a diagnostic NaN row is appended and
/// `diverged_at` is set instead of returning an error.
pub fn run_training(cfg: &RunConfig) -> Result<MetricsLog> {
    run_training_with_agent(cfg).map(|(log, _)| log)
}

/// [`run_training`], but also hands back the trained agent (used for
/// checkpointing and by reference-path comparisons).
pub fn run_training_with_agent(cfg: &RunConfig) -> Result<(MetricsLog, Agent)> {
    cfg.validate()?;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net_seed = master.next_u64();
    let reset_seed = master.next_u64();
    let agent_seed = master.next_u64();
    let eval_seed = master.next_u64();

    let mut net_rng = ChaCha8Rng::seed_from_u64(net_seed);
    let mut reset_rng = ChaCha8Rng::seed_from_u64(reset_seed);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(agent_seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(eval_seed);

    let mut agent = Agent::new(cfg.agent.clone(), &mut net_rng)?;
    let mut env = cfg.env.build();
    let mut eval_env = cfg.env.build();
    let mut buffer = ReplayBuffer::new(cfg.agent.buffer_capacity);
    let mut log = MetricsLog::new(cfg.env.obs_dim(), cfg.env.grid_dims());

    let mut obs = env.reset(reset_rng.next_u64());
    let action_dim = cfg.agent.action_dim;

    for step in 1..=cfg.total_env_steps {
        let action = if step <= cfg.agent.warmup_steps {
            (0..action_dim)
                .map(|_| agent_rng.gen_range(-1.0..=1.0))
                .collect()
        } else {
            agent.select_action(&obs, cfg.agent.explore_noise_std, &mut agent_rng)?
        };
        let sr = env.step(&action)?;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: sr.reward,
            next_obs: sr.obs.clone(),
            done: sr.done,
        })?;
        log.env_steps = step;
        if let (Some(vis), Some(cell)) = (log.visitation.as_mut(), sr.info.cell) {
            vis.record(cell)?;
        }
        if step % cfg.state_stride == 0 {
            log.visited_states.extend_from_slice(&sr.obs);
        }
        agent.tick_env();

        if step > cfg.agent.warmup_steps {
            match agent.train_step(&buffer, &mut agent_rng) {
                Ok(()) => {}
                Err(Error::Diverged { .. }) | Err(Error::NonFinite(_)) => {
                    log.rows.push(MetricsRow {
                        env_step: step,
                        mean_return: f64::NAN,
                        failure_rate: 1.0,
                    });
                    log.diverged_at = Some(step);
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        obs = if sr.finished() {
            env.reset(reset_rng.next_u64())
        } else {
            sr.obs
        };

        if step % cfg.eval_every == 0 {
            let (mean_return, failure_rate) =
                evaluate(&agent, eval_env.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
            log.rows.push(MetricsRow {
                env_step: step,
                mean_return,
                failure_rate,
            });
        }
    }

    // Close with a final evaluation when the last step was not already one.
    if log.diverged_at.is_none()
        && cfg.total_env_steps > 0
        && cfg.total_env_steps % cfg.eval_every != 0
    {
        let (mean_return, failure_rate) =
            evaluate(&agent, eval_env.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
        log.rows.push(MetricsRow {
            env_step: cfg.total_env_steps,
            mean_return,
            failure_rate,
        });
    }

    if let Some(dir) = &cfg.out_dir {
        write_run_outputs(dir, cfg, &log, &agent)?;
    }
    Ok((log, agent))
}

/// Writes the run's output files under `dir`:
/// `metrics.csv`, `visitation.csv` (grid runs), `states.f64`, `config.txt`,
/// and snapshots `actor.bin`, `critic1.bin`, `critic2.bin`.
pub fn write_run_outputs(
    dir: &Path,
    cfg: &RunConfig,
    log: &MetricsLog,
    agent: &Agent,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), log.metrics_csv())?;

    if let Some(vis) = &log.visitation {
        let mut out = String::from("row,col,count\n");
        for row in 0..vis.height() {
            for col in 0..vis.width() {
                out.push_str(&format!("{row},{col},{}\n", vis.count((col, row))));
            }
        }
        fs::write(dir.join("visitation.csv"), out)?;
    }

    let mut states = fs::File::create(dir.join("states.f64"))?;
    for v in &log.visited_states {
        states.write_all(&v.to_le_bytes())?;
    }

    fs::write(dir.join("config.txt"), cfg.echo())?;

    for (name, net) in [
        ("actor.bin", &agent.actor),
        ("critic1.bin", &agent.critic1),
        ("critic2.bin", &agent.critic2),
    ] {
        let mut f = fs::File::create(dir.join(name))?;
        net.write_snapshot(&mut f)?;
    }
    Ok(())
}
