//! Discrete-time noise schedules and the DDIM reverse update.
//!
//! Timesteps count down from T to 1; `alpha_bar(0) == 1` exactly, so the
//! final update lands on the posterior-mean reconstruction. All functions
//! here are pure: callers supply noise draws explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{FvdError, Result};

/// A state-space point. All states (x_t, x_0, reconstructions) share this
/// representation.
pub type State = Vec<f64>;

/// Variance schedule: per-step betas and the cumulative signal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    /// beta[t-1] is the variance added at step t, t = 1..=T.
    betas: Vec<f64>,
    /// alpha_bars[t] = prod_{s<=t} (1 - beta_s), with alpha_bars[0] = 1.
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation of beta from `beta_start` to `beta_end` over
    /// t = 1..=T. For T = 1 the single beta is `beta_start`.
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(FvdError::parameter("t_steps", "must be >= 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(FvdError::parameter(
                "beta",
                format!("need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"),
            ));
        }
        let betas: Vec<f64> = (0..t_steps)
            .map(|i| {
                if t_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Build a schedule from explicit betas, computing the cumulative
    /// products.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(FvdError::parameter("betas", "must be nonempty"));
        }
        if let Some(b) = betas.iter().find(|b| !(0.0 < **b && **b < 1.0)) {
            return Err(FvdError::parameter(
                "betas",
                format!("every beta must lie in (0, 1), got {b}"),
            ));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Number of diffusion steps T.
    pub fn t_steps(&self) -> usize {
        self.betas.len()
    }

    /// beta_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// alpha_bar_t for t in 0..=T.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_steps() {
            return Err(FvdError::parameter(
                "t",
                format!("must be in 1..={}, got {t}", self.t_steps()),
            ));
        }
        Ok(())
    }
}

/// Posterior-mean reconstruction of the clean sample from a noisy state and
/// its predicted noise: (x_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t).
pub fn tweedie_estimate(x_t: &[f64], eps: &[f64], t: usize, sched: &NoiseSchedule) -> Result<State> {
    sched.check_t(t)?;
    if eps.len() != x_t.len() {
        return Err(FvdError::input(
            "eps",
            format!("dim {} does not match x_t dim {}", eps.len(), x_t.len()),
        ));
    }
    let abar = sched.alpha_bar(t);
    if abar <= 0.0 {
        return Err(FvdError::Schedule(format!(
            "alpha_bar[{t}] = {abar} is not positive"
        )));
    }
    let noise_coef = (1.0 - abar).sqrt();
    let scale = abar.sqrt();
    Ok(x_t
        .iter()
        .zip(eps)
        .map(|(x, e)| (x - noise_coef * e) / scale)
        .collect())
}

/// Scheduler-scaled noise level for a partially stochastic update:
/// sigma_t = eta * sqrt((1 - abar_{t-1}) * beta_t / (1 - abar_t)).
pub fn ddim_sigma(t: usize, eta: f64, sched: &NoiseSchedule) -> Result<f64> {
    sched.check_t(t)?;
    let one_minus_abar_t = 1.0 - sched.alpha_bar(t);
    if one_minus_abar_t <= 0.0 {
        return Err(FvdError::Schedule(format!(
            "1 - alpha_bar[{t}] = {one_minus_abar_t} is not positive"
        )));
    }
    Ok(eta * ((1.0 - sched.alpha_bar(t - 1)) * sched.beta(t) / one_minus_abar_t).sqrt())
}

/// One reverse update from x_t to x_{t-1}.
///
/// With eta = 0 the map is deterministic and the `noise` argument is unused.
/// The caller supplies `noise` as a standard-normal draw; no hidden
/// randomness. An (eta, schedule) combination that would require a negative
/// variance split is reported as an error, never clamped.
pub fn ddim_step(
    x_t: &[f64],
    eps: &[f64],
    t: usize,
    eta: f64,
    noise: &[f64],
    sched: &NoiseSchedule,
) -> Result<State> {
    sched.check_t(t)?;
    if eps.len() != x_t.len() || noise.len() != x_t.len() {
        return Err(FvdError::input(
            "eps/noise",
            "dimension mismatch with x_t".to_string(),
        ));
    }
    let sigma = ddim_sigma(t, eta, sched)?;
    let abar_prev = sched.alpha_bar(t - 1);
    let dir_sq = 1.0 - abar_prev - sigma * sigma;
    if dir_sq < 0.0 {
        return Err(FvdError::EtaIncompatible { t, value: dir_sq });
    }
    let x0_hat = tweedie_estimate(x_t, eps, t, sched)?;
    let mean_coef = abar_prev.sqrt();
    let dir_coef = dir_sq.sqrt();
    Ok(x0_hat
        .iter()
        .zip(eps)
        .zip(noise)
        .map(|((x0, e), n)| mean_coef * x0 + dir_coef * e + sigma * n)
        .collect())
}
