//! Population orchestration: parallel reverse-diffusion trajectories with
//! birth-death selection barriers (or the multinomial baseline), terminal
//! selection, and per-run metrics.
//!
//! Determinism contract: a fixed config (including its seed) produces a
//! bit-identical report for any worker count. All randomness flows through
//! keyed streams; parallel passes are pure per-particle maps; reductions run
//! serially in index order.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerState;
use crate::diagnostics::{self, Bandwidth};
use crate::diffusion::{ddim_step, tweedie_estimate, NoiseSchedule, State};
use crate::error::{FvdError, Result};
use crate::oracle::{tilted_target, tv_distance, Grid};
use crate::potentials::{
    evenly_spaced_steps, log_potential, survival_probs, terminal_log_correction, PotentialConfig,
};
use crate::priors::{Denoiser, GaussianMixture};
use crate::resampling::{
    donor_assign, enforce_cap, final_subsample, fv_death_draw, multinomial_resample,
    weighted_subsample, ResampleEvent,
};
use crate::rewards::RewardSpec;
use crate::rng::{stream, StreamKind};
use crate::util::{mean, population_std};

/// One member of the interacting population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: State,
    /// Index of the initial noise draw this particle descends from.
    pub lineage_id: usize,
    /// Sum of log-potentials applied along this particle's ancestry.
    pub cum_log_potential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fvd,
    SmcMultinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// Draw outputs proportional to exp(r / tau).
    TemperatureSubsample,
    /// Draw outputs proportional to exp(lambda * r - accumulated potential).
    TerminalCorrectionReweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t_steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub enabled: bool,
    pub alpha_star: f64,
    pub eta0: f64,
    pub gamma: f64,
    pub delta_floor: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let s = ControllerState::default();
        Self {
            enabled: s.enabled,
            alpha_star: s.alpha_star,
            eta0: s.eta0,
            gamma: s.gamma,
            delta_floor: s.delta_floor,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
        }
    }
}

impl ControllerConfig {
    fn to_state(self, lambda0: f64) -> ControllerState {
        ControllerState {
            lambda: lambda0,
            alpha_star: self.alpha_star,
            eta0: self.eta0,
            gamma: self.gamma,
            k: 0,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            delta_floor: self.delta_floor,
            enabled: self.enabled,
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub k: usize,
    pub schedule: ScheduleConfig,
    pub prior: GaussianMixture,
    pub reward: RewardSpec,
    /// Initial alignment strength (the fixed strength when the controller is
    /// disabled).
    pub lambda: f64,
    /// Explicit barrier steps; mutually exclusive with `n_resample`.
    pub resample_steps: Option<Vec<usize>>,
    /// Number of evenly spaced barriers; mutually exclusive with
    /// `resample_steps`.
    pub n_resample: Option<usize>,
    pub controller: ControllerConfig,
    pub rebirth_eta: f64,
    pub alpha_max: f64,
    pub tau: f64,
    pub n_eval: usize,
    pub method: Method,
    pub terminal_mode: TerminalMode,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            schedule: ScheduleConfig::default(),
            prior: GaussianMixture {
                weights: vec![0.5, 0.5],
                means: vec![vec![-2.0], vec![2.0]],
                variances: vec![vec![0.25], vec![0.25]],
            },
            reward: RewardSpec::Quadratic {
                target: vec![2.0],
                scale: 1.0,
            },
            lambda: 1.0,
            resample_steps: None,
            n_resample: None,
            controller: ControllerConfig::default(),
            rebirth_eta: 0.4,
            alpha_max: 0.9,
            tau: 1.0,
            n_eval: 1000,
            method: Method::Fvd,
            terminal_mode: TerminalMode::TemperatureSubsample,
            seed: 0,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(FvdError::parameter("k", "must be >= 1"));
        }
        self.prior.validate()?;
        self.reward.validate()?;
        if self.prior.dim() != self.reward.dim() {
            return Err(FvdError::parameter(
                "reward",
                format!(
                    "dimension {} does not match prior dimension {}",
                    self.reward.dim(),
                    self.prior.dim()
                ),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(FvdError::parameter("lambda", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.rebirth_eta) {
            return Err(FvdError::parameter("rebirth_eta", "must lie in [0, 1]"));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return Err(FvdError::parameter("alpha_max", "must lie in (0, 1]"));
        }
        if !(self.tau > 0.0) {
            return Err(FvdError::parameter("tau", "must be positive"));
        }
        if self.n_eval == 0 {
            return Err(FvdError::parameter("n_eval", "must be >= 1"));
        }
        if self.workers == 0 {
            return Err(FvdError::parameter("workers", "must be >= 1"));
        }
        let c = &self.controller;
        if !(c.alpha_star > 0.0 && c.alpha_star < 1.0) {
            return Err(FvdError::parameter("alpha_star", "must lie in (0, 1)"));
        }
        if !(c.eta0 > 0.0) || !(c.gamma >= 0.0) || !(c.delta_floor >= 0.0) {
            return Err(FvdError::parameter(
                "controller",
                "need eta0 > 0, gamma >= 0, delta_floor >= 0",
            ));
        }
        if !(c.lambda_min <= self.lambda && self.lambda <= c.lambda_max) {
            return Err(FvdError::parameter(
                "lambda",
                "must start inside [lambda_min, lambda_max]",
            ));
        }
        // schedule bounds are checked by construction
        NoiseSchedule::linear(self.schedule.t_steps, self.schedule.beta_start, self.schedule.beta_end)?;
        let steps = self.resolved_steps()?;
        if !steps.is_empty() && self.k < 2 {
            return Err(FvdError::parameter("k", "must be >= 2 with resampling barriers"));
        }
        Ok(())
    }

    /// Barrier step set: explicit steps, or `n_resample` evenly spaced ones,
    /// or the default of 4 evenly spaced barriers.
    pub fn resolved_steps(&self) -> Result<BTreeSet<usize>> {
        let t = self.schedule.t_steps;
        match (&self.resample_steps, self.n_resample) {
            (Some(_), Some(_)) => Err(FvdError::parameter(
                "resample_steps",
                "set either resample_steps or n_resample, not both",
            )),
            (Some(steps), None) => {
                let set: BTreeSet<usize> = steps.iter().copied().collect();
                if set.iter().any(|&s| s == 0 || s > t) {
                    return Err(FvdError::parameter(
                        "resample_steps",
                        format!("steps must lie in 1..={t}"),
                    ));
                }
                Ok(set)
            }
            (None, Some(0)) => Ok(BTreeSet::new()),
            (None, Some(n)) => evenly_spaced_steps(t, n),
            (None, None) => evenly_spaced_steps(t, 4),
        }
    }
}

/// Per-barrier statistics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub alpha_t: f64,
    pub lambda: f64,
    pub n_dead: usize,
    pub n_revived: usize,
    pub distinct_lineages: usize,
    pub mean_reward: f64,
    pub std_log_g: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub events: Vec<ResampleEvent>,
    /// Alignment strength before the first barrier and after each one.
    pub lambda_trace: Vec<f64>,
    pub final_states: Vec<State>,
    pub final_rewards: Vec<f64>,
    pub selected: Vec<usize>,
    pub metrics: BTreeMap<String, f64>,
    pub per_step_stats: Vec<StepStats>,
}

/// What the observer sees at each barrier. Test instrumentation; the
/// shipping entry points install a no-op observer.
#[allow(dead_code)]
pub(crate) struct BarrierRecord<'a> {
    pub step: usize,
    pub log_potentials: &'a [f64],
    pub death_mask: &'a [bool],
    pub donors: &'a BTreeMap<usize, usize>,
    pub ancestors: Option<&'a [usize]>,
}

/// Dispatch on the configured method.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    match cfg.method {
        Method::Fvd => run_fvd(cfg),
        Method::SmcMultinomial => run_smc_baseline(cfg),
    }
}

/// Birth-death selection over parallel reverse trajectories.
pub fn run_fvd(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.method != Method::Fvd {
        return Err(FvdError::parameter("method", "run_fvd requires method = fvd"));
    }
    run_impl(cfg, &cfg.prior, Some(&cfg.prior), &mut |_| {})
}

/// Multinomial-resampling baseline with identical potentials, noise
/// discipline and bookkeeping.
pub fn run_smc_baseline(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.method != Method::SmcMultinomial {
        return Err(FvdError::parameter(
            "method",
            "run_smc_baseline requires method = smc_multinomial",
        ));
    }
    run_impl(cfg, &cfg.prior, Some(&cfg.prior), &mut |_| {})
}

/// Advance every particle one deterministic reverse step. Lineage ids and
/// accumulated potentials are untouched.
pub fn propagate_step(
    population: &[Particle],
    t: usize,
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
) -> Result<Vec<Particle>> {
    population
        .iter()
        .map(|p| {
            let eps = denoiser.eps(&p.x, t, sched)?;
            let zeros = vec![0.0; p.x.len()];
            Ok(Particle {
                x: ddim_step(&p.x, &eps, t, 0.0, &zeros, sched)?,
                lineage_id: p.lineage_id,
                cum_log_potential: p.cum_log_potential,
            })
        })
        .collect()
}

struct PropagateOut {
    next: State,
    /// Noise prediction at x_t; kept at barriers for rebirth reuse.
    eps: Option<State>,
    reward: Option<f64>,
}

fn at_step(t: usize, e: FvdError) -> FvdError {
    FvdError::Invariant {
        context: "engine",
        reason: format!("step {t}: {e}"),
    }
}

pub(crate) fn run_impl(
    cfg: &RunConfig,
    denoiser: &dyn Denoiser,
    oracle_prior: Option<&GaussianMixture>,
    observer: &mut (dyn FnMut(BarrierRecord<'_>) + Send),
) -> Result<RunReport> {
    cfg.validate()?;
    let sched = NoiseSchedule::linear(
        cfg.schedule.t_steps,
        cfg.schedule.beta_start,
        cfg.schedule.beta_end,
    )?;
    let steps = cfg.resolved_steps()?;
    let dim = denoiser.dim();
    if dim != cfg.reward.dim() {
        return Err(FvdError::parameter(
            "reward",
            "dimension mismatch with denoiser",
        ));
    }

    // the controller only drives birth-death selection
    let controller_enabled = cfg.controller.enabled && cfg.method == Method::Fvd;
    let mut controller = ControllerConfig {
        enabled: controller_enabled,
        ..cfg.controller
    }
    .to_state(cfg.lambda);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| FvdError::Invariant {
            context: "engine",
            reason: format!("thread pool: {e}"),
        })?;

    let mut particles: Vec<Particle> = (0..cfg.k)
        .map(|i| {
            let mut rng = stream(cfg.seed, StreamKind::Init, 0, i);
            Particle {
                x: (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
                lineage_id: i,
                cum_log_potential: 0.0,
            }
        })
        .collect();

    let mut events: Vec<ResampleEvent> = Vec::with_capacity(steps.len());
    let mut per_step_stats: Vec<StepStats> = Vec::with_capacity(steps.len());
    let mut lambda_trace = vec![controller.lambda];

    pool.install(|| -> Result<()> {
        for t in (1..=sched.t_steps()).rev() {
            let barrier = steps.contains(&t);
            let outs: Vec<PropagateOut> = particles
                .par_iter()
                .map(|p| -> Result<PropagateOut> {
                    let eps = denoiser.eps(&p.x, t, &sched)?;
                    let zeros = vec![0.0; dim];
                    let next = ddim_step(&p.x, &eps, t, 0.0, &zeros, &sched)?;
                    if barrier {
                        let x0_hat = tweedie_estimate(&p.x, &eps, t, &sched)?;
                        let reward = cfg.reward.eval(&x0_hat)?;
                        Ok(PropagateOut {
                            next,
                            eps: Some(eps),
                            reward: Some(reward),
                        })
                    } else {
                        Ok(PropagateOut {
                            next,
                            eps: None,
                            reward: None,
                        })
                    }
                })
                .collect::<Result<_>>()
                .map_err(|e| at_step(t, e))?;

            if !barrier {
                for (p, o) in particles.iter_mut().zip(outs) {
                    p.x = o.next;
                }
                continue;
            }

            let rewards: Vec<f64> = outs.iter().map(|o| o.reward.unwrap()).collect();
            let pot_cfg = PotentialConfig {
                lambda: controller.lambda,
                resample_steps: steps.clone(),
            };
            let log_g: Vec<f64> = rewards.iter().map(|r| log_potential(&pot_cfg, *r)).collect();

            let (next_particles, event) = match cfg.method {
                Method::Fvd => fvd_barrier(
                    cfg, &sched, t, &particles, &outs, &rewards, &log_g, &pot_cfg, observer,
                )?,
                Method::SmcMultinomial => {
                    smc_barrier(cfg, &sched, t, &particles, &outs, &rewards, &log_g, observer)?
                }
            };
            particles = next_particles;

            let std_log_g = population_std(&log_g);
            per_step_stats.push(StepStats {
                step: t,
                alpha_t: event.alpha_t,
                lambda: event.lambda_used,
                n_dead: event.death_mask.iter().filter(|d| **d).count(),
                n_revived: event.revived.len(),
                distinct_lineages: diagnostics::distinct_lineages(&particles),
                mean_reward: mean(&rewards),
                std_log_g,
            });
            controller = controller.rm_update(event.alpha_t, std_log_g);
            lambda_trace.push(controller.lambda);
            events.push(event);

            debug_assert_eq!(particles.len(), cfg.k);
        }
        Ok(())
    })?;

    // terminal rewards on the final states
    let final_states: Vec<State> = particles.iter().map(|p| p.x.clone()).collect();
    let final_rewards: Vec<f64> = final_states
        .iter()
        .map(|x| cfg.reward.eval(x))
        .collect::<Result<_>>()
        .map_err(|e| at_step(0, e))?;

    let mut select_rng = stream(cfg.seed, StreamKind::FinalSelect, 0, 0);
    let selected = match cfg.terminal_mode {
        TerminalMode::TemperatureSubsample => {
            final_subsample(&final_rewards, cfg.tau, cfg.n_eval, &mut select_rng)?
        }
        TerminalMode::TerminalCorrectionReweight => {
            let log_w: Vec<f64> = particles
                .iter()
                .zip(&final_rewards)
                .map(|(p, r)| terminal_log_correction(p.cum_log_potential, *r, controller.lambda))
                .collect();
            weighted_subsample(&log_w, cfg.n_eval, &mut select_rng)?
        }
    };

    let mut metrics = BTreeMap::new();
    let selected_states: Vec<State> = selected.iter().map(|&i| final_states[i].clone()).collect();
    let selected_rewards: Vec<f64> = selected.iter().map(|&i| final_rewards[i]).collect();
    metrics.insert("mean_reward".to_string(), mean(&selected_rewards));
    metrics.insert(
        "final_lineages".to_string(),
        diagnostics::distinct_lineages(&particles) as f64,
    );
    // quadratic-cost metrics run on a deterministic prefix cap
    let cap = 2000.min(selected_states.len());
    if cap >= 2 {
        if let Ok(d) = diagnostics::pairwise_diversity(&selected_states[..cap]) {
            metrics.insert("diversity".to_string(), d);
        }
    }
    if let Some(prior) = oracle_prior {
        if prior.dim() <= 2 {
            // coarser than the oracle default so the binned comparison is not
            // noise-dominated at moderate n_eval
            if let Ok(grid) = Grid::for_prior(prior, 256, 64) {
                if let Ok(target) = tilted_target(prior, &cfg.reward, controller.lambda, &grid) {
                    if let Ok(tv) = tv_distance(&selected_states, &target) {
                        metrics.insert("tv_oracle".to_string(), tv);
                    }
                    let mut ref_rng = stream(cfg.seed, StreamKind::TargetSample, 0, 0);
                    let reference = target.sample(&mut ref_rng, cap.max(2));
                    if cap >= 2 {
                        if let Ok(m) = diagnostics::mmd_rbf(
                            &selected_states[..cap],
                            &reference,
                            Bandwidth::Median,
                        ) {
                            metrics.insert("mmd".to_string(), m);
                        }
                    }
                }
            }
        }
    }

    Ok(RunReport {
        events,
        lambda_trace,
        final_states,
        final_rewards,
        selected,
        metrics,
        per_step_stats,
    })
}

#[allow(clippy::too_many_arguments)]
fn fvd_barrier(
    cfg: &RunConfig,
    sched: &NoiseSchedule,
    t: usize,
    particles: &[Particle],
    outs: &[PropagateOut],
    rewards: &[f64],
    log_g: &[f64],
    pot_cfg: &PotentialConfig,
    observer: &mut (dyn FnMut(BarrierRecord<'_>) + Send),
) -> Result<(Vec<Particle>, ResampleEvent)> {
    let surv = survival_probs(pot_cfg, rewards).map_err(|e| at_step(t, e))?;
    let mut death_rng = stream(cfg.seed, StreamKind::Death, t, 0);
    let raw_mask = fv_death_draw(&surv, &mut death_rng).map_err(|e| at_step(t, e))?;
    let (mask, revived) = enforce_cap(&raw_mask, log_g, cfg.alpha_max).map_err(|e| at_step(t, e))?;
    let mut donor_rng = stream(cfg.seed, StreamKind::Donor, t, 0);
    let donors = donor_assign(&mask, &mut donor_rng).map_err(|e| at_step(t, e))?;

    let dim = particles[0].x.len();
    let dead: Vec<usize> = (0..cfg.k).filter(|i| mask[*i]).collect();
    let rebirths: Vec<(usize, State)> = dead
        .par_iter()
        .map(|&i| -> Result<(usize, State)> {
            let donor = donors[&i];
            let mut rng = stream(cfg.seed, StreamKind::Rebirth, t, i);
            let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eps = outs[donor].eps.as_ref().unwrap();
            let x = ddim_step(&particles[donor].x, eps, t, cfg.rebirth_eta, &noise, sched)?;
            Ok((i, x))
        })
        .collect::<Result<_>>()
        .map_err(|e| at_step(t, e))?;

    // survivors advance and absorb their own potential; the reborn copy the
    // donor's updated bookkeeping
    let mut next: Vec<Particle> = particles
        .iter()
        .enumerate()
        .map(|(i, p)| Particle {
            x: outs[i].next.clone(),
            lineage_id: p.lineage_id,
            cum_log_potential: p.cum_log_potential + log_g[i],
        })
        .collect();
    for (i, x) in rebirths {
        let donor = donors[&i];
        next[i] = Particle {
            x,
            lineage_id: particles[donor].lineage_id,
            cum_log_potential: particles[donor].cum_log_potential + log_g[donor],
        };
    }

    observer(BarrierRecord {
        step: t,
        log_potentials: log_g,
        death_mask: &mask,
        donors: &donors,
        ancestors: None,
    });

    let n_dead = mask.iter().filter(|d| **d).count();
    let alpha_t = n_dead as f64 / cfg.k as f64;
    let killed_ranks =
        diagnostics::killed_reward_ranks(rewards, &mask).map_err(|e| at_step(t, e))?;
    let event = ResampleEvent {
        step: t,
        death_mask: mask,
        revived,
        donors,
        alpha_t,
        killed_ranks,
        lambda_used: pot_cfg.lambda,
    };
    Ok((next, event))
}

#[allow(clippy::too_many_arguments)]
fn smc_barrier(
    cfg: &RunConfig,
    sched: &NoiseSchedule,
    t: usize,
    particles: &[Particle],
    outs: &[PropagateOut],
    rewards: &[f64],
    log_g: &[f64],
    observer: &mut (dyn FnMut(BarrierRecord<'_>) + Send),
) -> Result<(Vec<Particle>, ResampleEvent)> {
    let mut anc_rng = stream(cfg.seed, StreamKind::Ancestor, t, 0);
    let ancestors = multinomial_resample(log_g, &mut anc_rng).map_err(|e| at_step(t, e))?;

    // every slot re-steps from its ancestor's noisy state with the same
    // rebirth noise discipline, so method differences isolate selection
    let dim = particles[0].x.len();
    let next: Vec<Particle> = ancestors
        .par_iter()
        .enumerate()
        .map(|(slot, &a)| -> Result<Particle> {
            let mut rng = stream(cfg.seed, StreamKind::Rebirth, t, slot);
            let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eps = outs[a].eps.as_ref().unwrap();
            let x = ddim_step(&particles[a].x, eps, t, cfg.rebirth_eta, &noise, sched)?;
            Ok(Particle {
                x,
                lineage_id: particles[a].lineage_id,
                cum_log_potential: particles[a].cum_log_potential + log_g[a],
            })
        })
        .collect::<Result<_>>()
        .map_err(|e| at_step(t, e))?;

    // an ancestor with zero offspring is eliminated
    let mut survives = vec![false; cfg.k];
    for &a in &ancestors {
        survives[a] = true;
    }
    let mask: Vec<bool> = survives.iter().map(|s| !s).collect();
    let donors: BTreeMap<usize, usize> = ancestors
        .iter()
        .enumerate()
        .filter(|(slot, a)| *slot != **a)
        .map(|(slot, a)| (slot, *a))
        .collect();

    observer(BarrierRecord {
        step: t,
        log_potentials: log_g,
        death_mask: &mask,
        donors: &donors,
        ancestors: Some(&ancestors),
    });

    let n_dead = mask.iter().filter(|d| **d).count();
    let alpha_t = n_dead as f64 / cfg.k as f64;
    let killed_ranks =
        diagnostics::killed_reward_ranks(rewards, &mask).map_err(|e| at_step(t, e))?;
    let event = ResampleEvent {
        step: t,
        death_mask: mask,
        revived: BTreeSet::new(),
        donors,
        alpha_t,
        killed_ranks,
        lambda_used: cfg.lambda,
    };
    Ok((next, event))
}
