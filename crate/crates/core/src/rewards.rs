//! Scalar reward functions over sample space.
//!
//! Three kinds ship: a concave quadratic centered on a target point, a
//! class-posterior log-likelihood built from class-conditional mixtures, and
//! a tabulated 1D function with linear interpolation. Rewards are
//! timestep-agnostic; the engine decides whether they see reconstructions or
//! final samples.

use serde::{Deserialize, Serialize};

use crate::error::{FvdError, Result};
use crate::priors::GaussianMixture;
use crate::util::{all_finite, log_sum_exp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSpec {
    /// r(x) = -scale * ||x - target||^2, maximized (at 0) on the target.
    Quadratic { target: Vec<f64>, scale: f64 },
    /// r(x) = log p(class = target_class | x) under a Bayes classifier with
    /// the given class-conditional mixtures and class priors.
    ClassLogit {
        classes: Vec<GaussianMixture>,
        class_priors: Vec<f64>,
        target_class: usize,
    },
    /// Piecewise-linear interpolation of (grid, values); clamped outside.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RewardSpec::Quadratic { target, scale } => {
                if !(*scale > 0.0) {
                    return Err(FvdError::parameter("scale", "must be positive"));
                }
                if target.is_empty() || !all_finite(target) {
                    return Err(FvdError::parameter("target", "must be finite and nonempty"));
                }
            }
            RewardSpec::ClassLogit {
                classes,
                class_priors,
                target_class,
            } => {
                if classes.is_empty() || class_priors.len() != classes.len() {
                    return Err(FvdError::parameter(
                        "class_priors",
                        "must match the number of classes",
                    ));
                }
                if *target_class >= classes.len() {
                    return Err(FvdError::parameter("target_class", "index out of range"));
                }
                if class_priors.iter().any(|p| !(*p > 0.0)) {
                    return Err(FvdError::parameter("class_priors", "must be positive"));
                }
                let sum: f64 = class_priors.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(FvdError::parameter(
                        "class_priors",
                        format!("must sum to 1 within 1e-12, got {sum}"),
                    ));
                }
                let d = classes[0].dim();
                for c in classes {
                    c.validate()?;
                    if c.dim() != d {
                        return Err(FvdError::parameter(
                            "classes",
                            "all classes must share one dimension",
                        ));
                    }
                }
            }
            RewardSpec::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(FvdError::parameter(
                        "grid",
                        "need >= 2 points and matching values",
                    ));
                }
                if !grid.windows(2).all(|w| w[0] < w[1]) {
                    return Err(FvdError::parameter("grid", "must be strictly increasing"));
                }
                if !all_finite(grid) || !all_finite(values) {
                    return Err(FvdError::parameter("grid/values", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Dimension the reward expects, if it constrains one.
    pub fn dim(&self) -> usize {
        match self {
            RewardSpec::Quadratic { target, .. } => target.len(),
            RewardSpec::ClassLogit { classes, .. } => classes[0].dim(),
            RewardSpec::Tabulated { .. } => 1,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if !all_finite(x) {
            return Err(FvdError::input("x", "entries must be finite"));
        }
        if x.len() != self.dim() {
            return Err(FvdError::input(
                "x",
                format!("dimension {} does not match reward dimension {}", x.len(), self.dim()),
            ));
        }
        match self {
            RewardSpec::Quadratic { target, scale } => {
                let sq: f64 = x
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Ok(-scale * sq)
            }
            RewardSpec::ClassLogit {
                classes,
                class_priors,
                target_class,
            } => {
                let logits: Vec<f64> = classes
                    .iter()
                    .zip(class_priors)
                    .map(|(c, p)| Ok(p.ln() + c.log_density(x)?))
                    .collect::<Result<_>>()?;
                Ok(logits[*target_class] - log_sum_exp(&logits))
            }
            RewardSpec::Tabulated { grid, values } => {
                let x = x[0];
                if x <= grid[0] {
                    return Ok(values[0]);
                }
                if x >= *grid.last().unwrap() {
                    return Ok(*values.last().unwrap());
                }
                let hi = grid.partition_point(|g| *g <= x);
                let (x0, x1) = (grid[hi - 1], grid[hi]);
                let frac = (x - x0) / (x1 - x0);
                Ok(values[hi - 1] + frac * (values[hi] - values[hi - 1]))
            }
        }
    }
}

/// Evaluate a reward spec at a point.
pub fn eval_reward(spec: &RewardSpec, x: &[f64]) -> Result<f64> {
    spec.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_class() -> RewardSpec {
        RewardSpec::ClassLogit {
            classes: vec![
                GaussianMixture::single(vec![-1.0], vec![1.0]).unwrap(),
                GaussianMixture::single(vec![1.0], vec![1.0]).unwrap(),
            ],
            class_priors: vec![0.5, 0.5],
            target_class: 1,
        }
    }

    #[test]
    fn quadratic_is_zero_at_target() {
        let r = RewardSpec::Quadratic {
            target: vec![0.3, -0.7],
            scale: 2.0,
        };
        assert_eq!(r.eval(&[0.3, -0.7]).unwrap(), 0.0);
        assert!(r.eval(&[1.3, -0.7]).unwrap() < 0.0);
    }

    #[test]
    fn single_class_logit_is_zero_everywhere() {
        let r = RewardSpec::ClassLogit {
            classes: vec![GaussianMixture::single(vec![0.0], vec![1.0]).unwrap()],
            class_priors: vec![1.0],
            target_class: 0,
        };
        for x in [-4.0, 0.0, 2.5] {
            assert!(r.eval(&[x]).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_two_class_midpoint() {
        let r = two_class();
        let v = r.eval(&[0.0]).unwrap();
        assert!((v + std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let r = RewardSpec::Tabulated {
            grid: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 2.0, 0.0],
        };
        assert_eq!(r.eval(&[0.5]).unwrap(), 1.0);
        assert_eq!(r.eval(&[2.0]).unwrap(), 1.0);
        assert_eq!(r.eval(&[-9.0]).unwrap(), 0.0);
        assert_eq!(r.eval(&[9.0]).unwrap(), 0.0);
    }

    #[test]
    fn validation_catches_bad_specs() {
        assert!(RewardSpec::Quadratic {
            target: vec![0.0],
            scale: 0.0
        }
        .validate()
        .is_err());
        assert!(RewardSpec::Tabulated {
            grid: vec![0.0, 0.0],
            values: vec![1.0, 1.0]
        }
        .validate()
        .is_err());
        assert!(RewardSpec::ClassLogit {
            classes: vec![GaussianMixture::single(vec![0.0], vec![1.0]).unwrap()],
            class_priors: vec![0.7],
            target_class: 0,
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rejects_non_finite_and_mismatched_input() {
        let r = two_class();
        assert!(r.eval(&[f64::INFINITY]).is_err());
        assert!(r.eval(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn class_logit_is_a_log_probability(x in -20.0f64..20.0) {
            let r = two_class();
            prop_assert!(r.eval(&[x]).unwrap() <= 0.0);
        }

        #[test]
        fn quadratic_is_concave_on_segments(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            scale in 0.1f64..5.0,
        ) {
            let r = RewardSpec::Quadratic { target: vec![1.0], scale };
            let mid = r.eval(&[(a + b) / 2.0]).unwrap();
            let avg = (r.eval(&[a]).unwrap() + r.eval(&[b]).unwrap()) / 2.0;
            prop_assert!(mid >= avg - 1e-12);
        }
    }
}
