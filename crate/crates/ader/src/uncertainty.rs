//! Twin-critic ensemble statistics, the scheduled penalty multiplier
//! eta(t), and the target-value kernel that unifies DDPG, TD3, and the
//! scheduled variant as one parameterization.
//!
//! For a pair of values the population statistics satisfy
//! `min = mu - sigma` and `max = mu + sigma`, so a target of
//! `r + gamma * (mu - eta * sigma)` reproduces the clipped-double-Q
//! minimum at `eta = 1` and the ensemble mean at `eta = 0`.

use crate::{Error, Result};

/// Mean and population standard deviation of the two critic values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub mu: f64,
    pub sigma: f64,
}

/// Population statistics over a critic pair: `mu = (q1+q2)/2`,
/// `sigma = |q1-q2|/2`.
pub fn ensemble_stats(q1: f64, q2: f64) -> Result<EnsembleStats> {
    if !q1.is_finite() || !q2.is_finite() {
        return Err(Error::NonFinite("ensemble statistics input"));
    }
    Ok(EnsembleStats {
        mu: (q1 + q2) / 2.0,
        sigma: (q1 - q2).abs() / 2.0,
    })
}

/// Scheduled penalty multiplier `eta(t) = alpha - kappa * sqrt(ln t / t)`
/// for epoch counter `t >= 2` (natural logarithm).
///
/// Early in training the second term dominates and eta can be negative
/// (an exploration bonus); as `t` grows eta tends to `alpha`.
pub fn eta(t: u64, alpha: f64, kappa: f64) -> Result<f64> {
    if t < 2 {
        return Err(Error::InvalidConfig(format!(
            "epoch counter must be >= 2, got {t}"
        )));
    }
    if !alpha.is_finite() || !kappa.is_finite() {
        return Err(Error::NonFinite("eta parameters"));
    }
    let tf = t as f64;
    Ok(alpha - kappa * (tf.ln() / tf).sqrt())
}

/// Penalized bootstrap target
/// `y = r + gamma * (mu - eta * sigma)` over the next-state critic pair,
/// or `y = r` on terminal transitions.
///
/// Computed as `min + (1 - eta) * sigma`, which is the same quantity but
/// reproduces `r + gamma * min(q1, q2)` bit-for-bit when `eta == 1`; the
/// degeneracy checks require that exactness.
pub fn scheduled_target(
    r: f64,
    done: bool,
    gamma: f64,
    q1_next: f64,
    q2_next: f64,
    eta_val: f64,
) -> Result<f64> {
    if !r.is_finite() || !q1_next.is_finite() || !q2_next.is_finite() || !eta_val.is_finite() {
        return Err(Error::NonFinite("scheduled target input"));
    }
    if done {
        return Ok(r);
    }
    let lo = q1_next.min(q2_next);
    let hi = q1_next.max(q2_next);
    let sigma = (hi - lo) / 2.0;
    Ok(r + gamma * (lo + (1.0 - eta_val) * sigma))
}

/// Clock state for the penalty schedule: the epoch counter advanced every
/// `k` environment steps and the cached eta refreshed every `m` train steps.
///
/// Target computation always reads the cached value, so between refresh
/// instants every target uses a bitwise-constant eta.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    t: u64,
    eta_cached: f64,
    env_steps: u64,
    train_steps: u64,
    k: u64,
    m: u64,
    alpha: f64,
    kappa: f64,
}

impl ScheduleState {
    /// `k`: environment steps per epoch; `m`: train steps between eta
    /// refreshes. The epoch counter starts at 2 and the cache starts at
    /// `eta(2, alpha, kappa)`.
    pub fn new(k: u64, m: u64, alpha: f64, kappa: f64) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidConfig(
                "schedule periods k and m must be >= 1".into(),
            ));
        }
        Ok(ScheduleState {
            t: 2,
            eta_cached: eta(2, alpha, kappa)?,
            env_steps: 0,
            train_steps: 0,
            k,
            m,
            alpha,
            kappa,
        })
    }

    #[inline]
    pub fn t(&self) -> u64 {
        self.t
    }

    #[inline]
    pub fn eta_cached(&self) -> f64 {
        self.eta_cached
    }

    #[inline]
    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    #[inline]
    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Counts one environment step; advances the epoch counter on every
    /// k-th step. Never touches the cached eta.
    pub fn tick_env(&mut self) {
        self.env_steps += 1;
        if self.env_steps % self.k == 0 {
            self.t += 1;
        }
    }

    /// Counts one train step; on every m-th step recomputes the cached eta
    /// from the current epoch counter.
    pub fn tick_train(&mut self) {
        self.train_steps += 1;
        if self.train_steps % self.m == 0 {
            self.eta_cached =
                eta(self.t, self.alpha, self.kappa).expect("t only grows, stays >= 2");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_of_symmetric_pair() {
        let s = ensemble_stats(1.0, 3.0).unwrap();
        assert_eq!(s.mu, 2.0);
        assert_eq!(s.sigma, 1.0);
    }

    #[test]
    fn stats_of_degenerate_pair() {
        let s = ensemble_stats(-4.25, -4.25).unwrap();
        assert_eq!(s.mu, -4.25);
        assert_eq!(s.sigma, 0.0);
    }

    #[test]
    fn min_equals_mu_minus_sigma_instance() {
        let s = ensemble_stats(-2.0, 4.0).unwrap();
        assert_eq!(s.mu, 1.0);
        assert_eq!(s.sigma, 3.0);
        assert_eq!((-2.0f64).min(4.0), s.mu - s.sigma);
    }

    #[test]
    fn stats_reject_non_finite() {
        assert!(ensemble_stats(f64::NAN, 1.0).is_err());
        assert!(ensemble_stats(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn eta_kappa_zero_gives_alpha() {
        for t in [2u64, 17, 100_000] {
            assert_eq!(eta(t, 1.0, 0.0).unwrap(), 1.0);
            assert_eq!(eta(t, 0.0, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn eta_matches_high_precision_value() {
        // 2 - 5*sqrt(ln 2 / 2) evaluated with 40-digit arithmetic.
        let oracle = -0.9435250562886867275289233161492490943684_f64;
        let got = eta(2, 2.0, 5.0).unwrap();
        assert!((got - oracle).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn eta_rejects_small_t() {
        assert!(eta(1, 2.0, 5.0).is_err());
        assert!(eta(0, 2.0, 5.0).is_err());
    }

    #[test]
    fn eta_is_non_decreasing_from_t_three() {
        let mut prev = eta(3, 2.0, 5.0).unwrap();
        for t in 4..5000u64 {
            let cur = eta(t, 2.0, 5.0).unwrap();
            assert!(cur >= prev, "eta decreased at t={t}");
            prev = cur;
        }
        // The t=2 -> t=3 move goes the other way: sqrt(ln t / t) peaks near e.
        assert!(eta(3, 2.0, 5.0).unwrap() < eta(2, 2.0, 5.0).unwrap());
    }

    #[test]
    fn eta_approaches_alpha() {
        let alpha = 2.0;
        let kappa = 5.0;
        let v = eta(1_000_000_000, alpha, kappa).unwrap();
        assert!((v - alpha).abs() < 2e-4 * kappa);
    }

    #[test]
    fn target_is_reward_on_terminal() {
        let y = scheduled_target(-3.0, true, 0.99, 123.0, -456.0, 1.0).unwrap();
        assert_eq!(y, -3.0);
    }

    #[test]
    fn target_with_eta_one_is_min_form() {
        let y = scheduled_target(0.0, false, 0.99, 1.0, 3.0, 1.0).unwrap();
        assert_eq!(y, 0.99);
        assert_eq!(y, 0.0 + 0.99 * 1.0f64.min(3.0));
    }

    #[test]
    fn target_with_eta_zero_is_mean_form() {
        let y = scheduled_target(1.0, false, 0.99, 1.0, 3.0, 0.0).unwrap();
        assert!((y - 2.98).abs() < 1e-12);
    }

    #[test]
    fn target_rejects_non_finite() {
        assert!(scheduled_target(f64::NAN, false, 0.99, 0.0, 0.0, 1.0).is_err());
        assert!(scheduled_target(0.0, false, 0.99, f64::INFINITY, 0.0, 1.0).is_err());
    }

    #[test]
    fn epoch_counter_advances_every_k_env_steps() {
        let mut s = ScheduleState::new(10_000, 100_000, 2.0, 5.0).unwrap();
        for _ in 0..9_999 {
            s.tick_env();
        }
        assert_eq!(s.t(), 2);
        s.tick_env();
        assert_eq!(s.t(), 3);
        for _ in 0..20_000 {
            s.tick_env();
        }
        assert_eq!(s.t(), 5);
    }

    #[test]
    fn eta_cache_refreshes_only_at_multiples_of_m() {
        let mut s = ScheduleState::new(10, 100, 2.0, 5.0).unwrap();
        let initial = s.eta_cached();
        assert_eq!(initial, eta(2, 2.0, 5.0).unwrap());
        // Advance the epoch counter well past 2, then watch the cache.
        for _ in 0..200 {
            s.tick_env();
        }
        assert_eq!(s.t(), 22);
        for _ in 0..99 {
            s.tick_train();
            assert_eq!(s.eta_cached().to_bits(), initial.to_bits());
        }
        s.tick_train();
        assert_eq!(s.eta_cached(), eta(22, 2.0, 5.0).unwrap());
    }

    #[test]
    fn refresh_every_step_when_m_is_one() {
        let mut s = ScheduleState::new(3, 1, 2.0, 5.0).unwrap();
        for step in 1..=30u64 {
            s.tick_env();
            s.tick_train();
            assert_eq!(s.eta_cached(), eta(s.t(), 2.0, 5.0).unwrap(), "step {step}");
        }
    }

    proptest! {
        #[test]
        fn lemma_identity_holds(q1 in -1e6f64..1e6, q2 in -1e6f64..1e6) {
            let s = ensemble_stats(q1, q2).unwrap();
            let scale = 1.0f64.max(q1.abs()).max(q2.abs());
            prop_assert!((q1.min(q2) - (s.mu - s.sigma)).abs() < 1e-9 * scale);
            prop_assert!((q1.max(q2) - (s.mu + s.sigma)).abs() < 1e-9 * scale);
        }

        #[test]
        fn eta_one_target_equals_min_form_bitwise(
            r in -100.0f64..100.0,
            q1 in -1e3f64..1e3,
            q2 in -1e3f64..1e3,
        ) {
            let gamma = 0.99;
            let y = scheduled_target(r, false, gamma, q1, q2, 1.0).unwrap();
            let min_form = r + gamma * q1.min(q2);
            prop_assert_eq!(y.to_bits(), min_form.to_bits());
        }

        #[test]
        fn eta_zero_target_close_to_mean_form(
            r in -100.0f64..100.0,
            q1 in -1e3f64..1e3,
            q2 in -1e3f64..1e3,
        ) {
            let gamma = 0.99;
            let y = scheduled_target(r, false, gamma, q1, q2, 0.0).unwrap();
            let mean_form = r + gamma * (q1 + q2) / 2.0;
            prop_assert!((y - mean_form).abs() < 1e-12);
        }
    }
}
