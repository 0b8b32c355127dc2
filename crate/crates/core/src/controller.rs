//! Stochastic-approximation control of the alignment strength.
//!
//! After each barrier the realized absorption fraction is compared with the
//! target; lambda moves against the error with a decaying step size and is
//! clipped to its bounds. A spread floor on the log-potentials gates updates
//! so a locally homogeneous population produces no drift.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub lambda: f64,
    pub alpha_star: f64,
    pub eta0: f64,
    pub gamma: f64,
    pub k: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub delta_floor: f64,
    pub enabled: bool,
}

impl ControllerState {
    pub fn new(lambda0: f64) -> Self {
        Self {
            lambda: lambda0,
            ..Self::default()
        }
    }

    /// Fixed-lambda state: updates are no-ops.
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda,
            enabled: false,
            ..Self::default()
        }
    }

    /// eta_k = eta0 / (1 + gamma * k).
    pub fn learning_rate(&self) -> f64 {
        self.eta0 / (1.0 + self.gamma * self.k as f64)
    }

    /// One controlled update. When enabled and the log-potential spread is
    /// at least the floor, lambda moves by -eta_k * (alpha_t - alpha_star),
    /// clipped to [lambda_min, lambda_max], and the counter advances.
    /// Otherwise the state is returned unchanged.
    pub fn rm_update(&self, alpha_t: f64, log_potential_std: f64) -> ControllerState {
        debug_assert!((0.0..=1.0).contains(&alpha_t));
        debug_assert!(log_potential_std >= 0.0);
        if !self.enabled || log_potential_std < self.delta_floor {
            return *self;
        }
        let eta = self.learning_rate();
        let lambda = (self.lambda - eta * (alpha_t - self.alpha_star))
            .clamp(self.lambda_min, self.lambda_max);
        ControllerState {
            lambda,
            k: self.k + 1,
            ..*self
        }
    }
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha_star: 0.5,
            eta0: 0.5,
            gamma: 0.1,
            k: 0,
            lambda_min: 0.0,
            lambda_max: 10.0,
            delta_floor: 1e-3,
            enabled: true,
        }
    }
}
