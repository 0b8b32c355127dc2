//! Per-step selection potentials, survival probabilities and the terminal
//! correction.
//!
//! Everything stays in the log domain: the alignment strength multiplies raw
//! rewards, and exponentials are only taken of non-positive differences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{FvdError, Result};
use crate::util::all_finite;

/// Alignment strength and the barrier schedule it is spread across.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub lambda: f64,
    pub resample_steps: BTreeSet<usize>,
}

impl PotentialConfig {
    pub fn new(lambda: f64, resample_steps: impl IntoIterator<Item = usize>) -> Result<Self> {
        let steps: BTreeSet<usize> = resample_steps.into_iter().collect();
        if steps.is_empty() {
            return Err(FvdError::parameter(
                "resample_steps",
                "must contain at least one step",
            ));
        }
        if !(lambda >= 0.0) {
            return Err(FvdError::parameter("lambda", "must be nonnegative"));
        }
        Ok(Self {
            lambda,
            resample_steps: steps,
        })
    }

    pub fn n_resample(&self) -> usize {
        self.resample_steps.len()
    }

    /// Per-barrier share of the alignment strength.
    pub fn strength_per_step(&self) -> f64 {
        self.lambda / self.n_resample() as f64
    }
}

/// `n` barrier steps spread evenly over (0, T), excluding both endpoints;
/// at t = T the reconstructions carry no signal. Rounding collisions are
/// deduplicated, so fewer than `n` steps can come back for tiny T.
pub fn evenly_spaced_steps(t_steps: usize, n: usize) -> Result<BTreeSet<usize>> {
    if n == 0 {
        return Err(FvdError::parameter("n", "must be >= 1"));
    }
    if t_steps < 2 {
        return Err(FvdError::parameter("t_steps", "must be >= 2 to place barriers"));
    }
    let steps: BTreeSet<usize> = (1..=n)
        .map(|j| {
            let raw = (j as f64 * t_steps as f64 / (n as f64 + 1.0)).round() as usize;
            raw.clamp(1, t_steps - 1)
        })
        .collect();
    Ok(steps)
}

/// log G_t = (lambda / n_resample) * reward.
pub fn log_potential(cfg: &PotentialConfig, reward: f64) -> f64 {
    cfg.strength_per_step() * reward
}

/// Survival probabilities s_i = exp(kappa * (r_i - r_max)).
///
/// Every particle attaining the maximum reward gets s_i = 1 exactly, so at
/// least one particle always survives.
pub fn survival_probs(cfg: &PotentialConfig, rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(FvdError::parameter("rewards", "must be nonempty"));
    }
    if !all_finite(rewards) {
        return Err(FvdError::input("rewards", "entries must be finite"));
    }
    let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kappa = cfg.strength_per_step();
    Ok(rewards.iter().map(|r| (kappa * (r - r_max)).exp()).collect())
}

/// Expected fraction of deaths: mean of (1 - s_i).
pub fn expected_absorption(cfg: &PotentialConfig, rewards: &[f64]) -> Result<f64> {
    let surv = survival_probs(cfg, rewards)?;
    Ok(surv.iter().map(|s| 1.0 - s).sum::<f64>() / surv.len() as f64)
}

/// Final log-potential that cancels the accumulated per-step estimates and
/// replaces them with the exact terminal reward:
/// returns lambda * terminal_reward - accumulated_log_potentials.
pub fn terminal_log_correction(
    accumulated_log_potentials: f64,
    terminal_reward: f64,
    lambda: f64,
) -> f64 {
    lambda * terminal_reward - accumulated_log_potentials
}
