//! Analytic diffusion priors.
//!
//! A diagonal-covariance Gaussian mixture stands in for a learned denoiser:
//! its time-t marginal under the forward process is available in closed form,
//! so the exact noise prediction can be computed from the marginal score.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule, State};
use crate::error::{FvdError, Result};
use crate::util::{all_finite, log_sum_exp};

const LN_2PI: f64 = 1.8378770664093453;

/// Anything that predicts the injected noise for a state at step t.
///
/// The engine only depends on this trait; the Gaussian mixture below is the
/// single built-in implementation.
pub trait Denoiser: Sync {
    fn dim(&self) -> usize;
    fn eps(&self, x_t: &[f64], t: usize, sched: &NoiseSchedule) -> Result<State>;
}

/// Mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let gm = Self {
            weights,
            means,
            variances,
        };
        gm.validate()?;
        Ok(gm)
    }

    /// Single Gaussian convenience constructor.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.weights.len();
        if m == 0 || self.means.len() != m || self.variances.len() != m {
            return Err(FvdError::parameter(
                "mixture",
                "weights, means and variances must have the same nonzero length",
            ));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(FvdError::parameter(
                "weights",
                format!("must sum to 1 within 1e-12, got {sum}"),
            ));
        }
        if self.weights.iter().any(|w| *w <= 0.0) {
            return Err(FvdError::parameter("weights", "must all be positive"));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(FvdError::parameter("means", "dimension must be >= 1"));
        }
        for k in 0..m {
            if self.means[k].len() != d || self.variances[k].len() != d {
                return Err(FvdError::parameter(
                    "mixture",
                    "all components must share one dimension",
                ));
            }
            if self.variances[k].iter().any(|v| !(*v > 0.0)) {
                return Err(FvdError::parameter("variances", "must all be positive"));
            }
            if !all_finite(&self.means[k]) || !all_finite(&self.variances[k]) {
                return Err(FvdError::parameter("mixture", "parameters must be finite"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Log density at x, log-sum-exp over components.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(FvdError::input("x", "dimension mismatch with mixture"));
        }
        if !all_finite(x) {
            return Err(FvdError::input("x", "entries must be finite"));
        }
        let logs: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, x))
            .collect();
        Ok(log_sum_exp(&logs))
    }

    fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for d in 0..x.len() {
            let v = self.variances[k][d];
            let z = x[d] - self.means[k][d];
            acc += -0.5 * (LN_2PI + v.ln()) - 0.5 * z * z / v;
        }
        acc
    }

    /// The distribution of x_t when x_0 follows this mixture: component
    /// means scale by sqrt(abar_t) and variances become
    /// abar_t * v + (1 - abar_t). Weights are unchanged.
    pub fn marginal_at_t(&self, t: usize, sched: &NoiseSchedule) -> Result<GaussianMixture> {
        if t > sched.t_steps() {
            return Err(FvdError::parameter(
                "t",
                format!("must be in 0..={}, got {t}", sched.t_steps()),
            ));
        }
        let abar = sched.alpha_bar(t);
        let scale = abar.sqrt();
        let means = self
            .means
            .iter()
            .map(|mu| mu.iter().map(|m| scale * m).collect())
            .collect();
        let variances = self
            .variances
            .iter()
            .map(|v| v.iter().map(|v| abar * v + (1.0 - abar)).collect())
            .collect();
        Ok(GaussianMixture {
            weights: self.weights.clone(),
            means,
            variances,
        })
    }

    /// Exact noise prediction: eps = -sqrt(1 - abar_t) * grad log p_t(x_t),
    /// where p_t is the time-t marginal of this mixture. Responsibilities
    /// are computed in the log domain.
    pub fn eps_prediction(&self, x_t: &[f64], t: usize, sched: &NoiseSchedule) -> Result<State> {
        if t == 0 || t > sched.t_steps() {
            return Err(FvdError::parameter(
                "t",
                format!("must be in 1..={}, got {t}", sched.t_steps()),
            ));
        }
        if x_t.len() != self.dim() {
            return Err(FvdError::input("x_t", "dimension mismatch with mixture"));
        }
        if !all_finite(x_t) {
            return Err(FvdError::input("x_t", "entries must be finite"));
        }
        let marginal = self.marginal_at_t(t, sched)?;
        let log_terms: Vec<f64> = (0..marginal.n_components())
            .map(|k| marginal.weights[k].ln() + marginal.component_log_density(k, x_t))
            .collect();
        let lse = log_sum_exp(&log_terms);
        let noise_scale = (1.0 - sched.alpha_bar(t)).sqrt();
        let mut eps = vec![0.0; x_t.len()];
        for k in 0..marginal.n_components() {
            let resp = (log_terms[k] - lse).exp();
            for d in 0..x_t.len() {
                // component score contribution: -(x - m) / v
                let score_kd = -(x_t[d] - marginal.means[k][d]) / marginal.variances[k][d];
                eps[d] -= noise_scale * resp * score_kd;
            }
        }
        Ok(eps)
    }

    /// Exact ancestral sample: categorical component, then Gaussian draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        (0..self.dim())
            .map(|d| {
                let z: f64 = StandardNormal.sample(rng);
                self.means[k][d] + self.variances[k][d].sqrt() * z
            })
            .collect()
    }
}

impl Denoiser for GaussianMixture {
    fn dim(&self) -> usize {
        GaussianMixture::dim(self)
    }

    fn eps(&self, x_t: &[f64], t: usize, sched: &NoiseSchedule) -> Result<State> {
        self.eps_prediction(x_t, t, sched)
    }
}
