//! Birth-death selection: independent survival draws, the death cap with
//! revival, uniform donor assignment, stochastic rebirth, the multinomial
//! baseline, and final reward-weighted subsampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{ddim_step, NoiseSchedule, State};
use crate::error::{FvdError, Result};
use crate::priors::Denoiser;
use crate::util::{all_finite, log_sum_exp};

/// Record of one resampling barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleEvent {
    pub step: usize,
    /// Final death indicators (after cap revival).
    pub death_mask: Vec<bool>,
    /// Indices revived by the cap.
    pub revived: BTreeSet<usize>,
    /// dead index -> donor index.
    pub donors: BTreeMap<usize, usize>,
    /// Realized absorption fraction: dead count / K.
    pub alpha_t: f64,
    /// Normalized reward ranks of the killed particles, in [0, 1].
    pub killed_ranks: Vec<f64>,
    /// Alignment strength in force at this barrier.
    pub lambda_used: f64,
}

/// Independent Bernoulli deaths: particle i dies iff u_i > s_i with
/// u_i ~ U(0,1). A particle with s_i = 1 can never die. Uniforms are
/// consumed in particle-index order.
pub fn fv_death_draw<R: Rng + ?Sized>(surv: &[f64], rng: &mut R) -> Result<Vec<bool>> {
    if surv.is_empty() {
        return Err(FvdError::parameter("surv", "must be nonempty"));
    }
    if surv.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
        return Err(FvdError::parameter("surv", "entries must lie in (0, 1]"));
    }
    Ok(surv.iter().map(|s| rng.random::<f64>() > *s).collect())
}

/// Revive the highest-potential dead particles until the dead count is at
/// most floor(alpha_max * K). Ties revive the lowest index first.
pub fn enforce_cap(
    death_mask: &[bool],
    log_potentials: &[f64],
    alpha_max: f64,
) -> Result<(Vec<bool>, BTreeSet<usize>)> {
    if !(alpha_max > 0.0 && alpha_max <= 1.0) {
        return Err(FvdError::parameter("alpha_max", "must lie in (0, 1]"));
    }
    if log_potentials.len() != death_mask.len() {
        return Err(FvdError::parameter(
            "log_potentials",
            "length must match death_mask",
        ));
    }
    let k = death_mask.len();
    let cap = (alpha_max * k as f64).floor() as usize;
    let mut mask = death_mask.to_vec();
    let mut revived = BTreeSet::new();
    let mut n_dead = mask.iter().filter(|d| **d).count();
    if n_dead <= cap {
        return Ok((mask, revived));
    }
    let mut dead: Vec<usize> = (0..k).filter(|i| mask[*i]).collect();
    // highest potential first, then lowest index
    dead.sort_by(|&a, &b| {
        log_potentials[b]
            .partial_cmp(&log_potentials[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for idx in dead {
        if n_dead <= cap {
            break;
        }
        mask[idx] = false;
        revived.insert(idx);
        n_dead -= 1;
    }
    Ok((mask, revived))
}

/// Assign each dead particle a donor drawn uniformly from the survivors.
/// Draws are consumed in ascending dead-index order.
pub fn donor_assign<R: Rng + ?Sized>(
    death_mask: &[bool],
    rng: &mut R,
) -> Result<BTreeMap<usize, usize>> {
    let survivors: Vec<usize> = (0..death_mask.len()).filter(|i| !death_mask[*i]).collect();
    let dead: Vec<usize> = (0..death_mask.len()).filter(|i| death_mask[*i]).collect();
    if dead.is_empty() {
        return Ok(BTreeMap::new());
    }
    if survivors.is_empty() {
        return Err(FvdError::Invariant {
            context: "donor_assign",
            reason: "no survivors to donate".to_string(),
        });
    }
    Ok(dead
        .into_iter()
        .map(|i| (i, survivors[rng.random_range(0..survivors.len())]))
        .collect())
}

/// Re-run the reverse update from a donor's noisy state with nonzero
/// stochasticity, so the reborn particle departs from the donor's path.
/// With rebirth_eta = 0 this reproduces the donor's deterministic successor.
pub fn rebirth<R: Rng + ?Sized>(
    donor_x_t: &[f64],
    denoiser: &dyn Denoiser,
    t: usize,
    rebirth_eta: f64,
    rng: &mut R,
    sched: &NoiseSchedule,
) -> Result<State> {
    let eps = denoiser.eps(donor_x_t, t, sched)?;
    let noise: Vec<f64> = (0..donor_x_t.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    ddim_step(donor_x_t, &eps, t, rebirth_eta, &noise, sched)
}

/// K i.i.d. ancestor draws from the categorical distribution given by
/// normalized log-weights.
pub fn multinomial_resample<R: Rng + ?Sized>(
    log_weights: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if log_weights.is_empty() {
        return Err(FvdError::parameter("log_weights", "must be nonempty"));
    }
    let cdf = log_weights_to_cdf(log_weights)?;
    Ok((0..log_weights.len())
        .map(|_| sample_from_cdf(&cdf, rng))
        .collect())
}

/// Draw n_eval indices with probability proportional to exp(r_i / tau).
pub fn final_subsample<R: Rng + ?Sized>(
    rewards: &[f64],
    tau: f64,
    n_eval: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(tau > 0.0) {
        return Err(FvdError::parameter("tau", "must be positive"));
    }
    if n_eval == 0 {
        return Err(FvdError::parameter("n_eval", "must be >= 1"));
    }
    if rewards.is_empty() {
        return Err(FvdError::parameter("rewards", "must be nonempty"));
    }
    if !all_finite(rewards) {
        return Err(FvdError::input("rewards", "entries must be finite"));
    }
    let logs: Vec<f64> = rewards.iter().map(|r| r / tau).collect();
    let cdf = log_weights_to_cdf(&logs)?;
    Ok((0..n_eval).map(|_| sample_from_cdf(&cdf, rng)).collect())
}

/// Draw n_eval indices with probability proportional to exp(log_weights).
pub fn weighted_subsample<R: Rng + ?Sized>(
    log_weights: &[f64],
    n_eval: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n_eval == 0 {
        return Err(FvdError::parameter("n_eval", "must be >= 1"));
    }
    let cdf = log_weights_to_cdf(log_weights)?;
    Ok((0..n_eval).map(|_| sample_from_cdf(&cdf, rng)).collect())
}

fn log_weights_to_cdf(log_weights: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(FvdError::DegenerateWeights);
    }
    let mut acc = 0.0;
    let cdf: Vec<f64> = log_weights
        .iter()
        .map(|lw| {
            acc += (lw - lse).exp();
            acc
        })
        .collect();
    Ok(cdf)
}

fn sample_from_cdf<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf.last().copied().unwrap_or(1.0);
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}
