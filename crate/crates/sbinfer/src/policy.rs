//! Exploration schedules, propensity computation, and action sampling.
//!
//! The greedy rule picks the arm with the highest estimated reward and
//! spreads exploration mass uniformly: the greedy arm gets 1 − ε + ε/K,
//! every other arm ε/K. For K = 2 this is exactly the textbook ε-greedy
//! split of 1 − ε/2 versus ε/2.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Policy operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// ε_t = min(1, c_ε t^{−γ}).
    EpsilonGreedy,
    /// ε_t ≡ 0; exploration comes entirely from covariate diversity.
    ExplorationFree,
    /// Deterministic round-robin over arms for the first `T_init` steps,
    /// pure greedy afterwards. A warm start for greedy operation when the
    /// covariates cannot be relied on to self-explore.
    ForcedRoundrobinThenGreedy {
        #[serde(rename = "T_init")]
        t_init: usize,
    },
}

fn default_c_eps() -> f64 {
    0.5
}

/// Exploration schedule: scale, decay exponent, and mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationSchedule {
    #[serde(default = "default_c_eps")]
    pub c_eps: f64,
    #[serde(default)]
    pub gamma: f64,
    pub mode: PolicyMode,
}

impl ExplorationSchedule {
    pub fn epsilon_greedy(c_eps: f64, gamma: f64) -> Self {
        ExplorationSchedule {
            c_eps,
            gamma,
            mode: PolicyMode::EpsilonGreedy,
        }
    }

    pub fn exploration_free() -> Self {
        ExplorationSchedule {
            c_eps: default_c_eps(),
            gamma: 0.0,
            mode: PolicyMode::ExplorationFree,
        }
    }

    /// Round-robin warm-up length for greedy start-up: K·max(20, ⌈2·s0·ln d⌉).
    pub fn default_warmup(k: usize, s0: usize, d: usize) -> usize {
        let per_arm = (2.0 * s0 as f64 * (d as f64).ln()).ceil() as usize;
        k * per_arm.max(20)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_eps.is_finite() && self.c_eps > 0.0) {
            return Err(Error::config(format!(
                "c_eps must be positive, got {}",
                self.c_eps
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Exploration probability at step t ≥ 1 (clipped to [0, 1]).
    pub fn epsilon_at(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        match self.mode {
            PolicyMode::EpsilonGreedy => {
                (self.c_eps * (t as f64).powf(-self.gamma)).min(1.0)
            }
            PolicyMode::ExplorationFree => 0.0,
            PolicyMode::ForcedRoundrobinThenGreedy { t_init } => {
                if t <= t_init {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Arm forced at step t, when the mode forces one.
    pub fn forced_arm(&self, t: usize, k: usize) -> Option<usize> {
        match self.mode {
            PolicyMode::ForcedRoundrobinThenGreedy { t_init } if t <= t_init => {
                Some((t - 1) % k)
            }
            _ => None,
        }
    }

    /// Selection distribution at step t given current estimates: either the
    /// forced round-robin indicator or the ε-greedy mix over estimates.
    pub fn propensities_at(
        &self,
        t: usize,
        beta_hats: &[Vec<f64>],
        x: &[f64],
    ) -> PropensityVector {
        let k = beta_hats.len();
        if let Some(arm) = self.forced_arm(t, k) {
            return PropensityVector::degenerate(k, arm);
        }
        propensities(beta_hats, x, self.epsilon_at(t), k)
    }
}

/// Per-arm selection probabilities. Entries are nonnegative, sum to one,
/// and the maximizing arm is tracked explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityVector {
    probs: Vec<f64>,
    greedy: usize,
}

impl PropensityVector {
    pub fn new(probs: Vec<f64>, greedy: usize) -> Result<Self> {
        if probs.is_empty() || greedy >= probs.len() {
            return Err(Error::config("propensity vector shape invalid"));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "propensities must be nonnegative and sum to 1, got sum {sum}"
            )));
        }
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if probs[greedy] + 1e-15 < max {
            return Err(Error::config(
                "greedy arm must carry the largest propensity",
            ));
        }
        Ok(PropensityVector { probs, greedy })
    }

    fn degenerate(k: usize, arm: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[arm] = 1.0;
        PropensityVector { probs, greedy: arm }
    }

    #[inline]
    pub fn prob(&self, arm: usize) -> f64 {
        self.probs[arm]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn greedy_arm(&self) -> usize {
        self.greedy
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Greedy arm under the current estimates; ties resolve to the lowest index.
pub fn greedy_arm(beta_hats: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_score = crate::linalg::dot(&beta_hats[0], x);
    for (i, beta) in beta_hats.iter().enumerate().skip(1) {
        let score = crate::linalg::dot(beta, x);
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

/// ε-greedy selection probabilities: greedy arm gets (1 − eps) + eps/K,
/// all others eps/K.
pub fn propensities(beta_hats: &[Vec<f64>], x: &[f64], eps: f64, k: usize) -> PropensityVector {
    debug_assert!((0.0..=1.0).contains(&eps));
    debug_assert_eq!(beta_hats.len(), k);
    let g = greedy_arm(beta_hats, x);
    let share = eps / k as f64;
    let mut probs = vec![share; k];
    probs[g] = (1.0 - eps) + share;
    PropensityVector { probs, greedy: g }
}

/// Categorical draw from the propensity vector.
pub fn sample_action<R: Rng>(pv: &PropensityVector, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cdf = 0.0;
    for (i, p) in pv.probs.iter().enumerate() {
        cdf += p;
        if u < cdf {
            return i;
        }
    }
    pv.probs.len() - 1
}
