//! Experiment configuration: a run description plus sweep axes, seeds and
//! output selection. One strictly validated JSON document; unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use fvd_core::engine::RunConfig;
use serde::{Deserialize, Serialize};

pub const ALL_METRICS: [&str; 5] = ["mean_reward", "mmd", "diversity", "tv_oracle", "final_lineages"];

/// Axes that a sweep may vary.
const SWEEPABLE: [&str; 8] = [
    "lambda",
    "alpha_star",
    "rebirth_eta",
    "alpha_max",
    "tau",
    "k",
    "n_eval",
    "n_resample",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    /// Axis name -> values; the sweep is the cartesian product of all axes.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<f64>>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Which summary metrics to report; unselected columns print nan.
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
}

fn default_metrics() -> Vec<String> {
    ALL_METRICS.iter().map(|m| m.to_string()).collect()
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("field `seeds`: need at least one seed");
        }
        for axis in self.sweep.keys() {
            if !SWEEPABLE.contains(&axis.as_str()) {
                bail!(
                    "field `sweep.{axis}`: not sweepable (valid axes: {})",
                    SWEEPABLE.join(", ")
                );
            }
        }
        for (axis, values) in &self.sweep {
            if values.is_empty() {
                bail!("field `sweep.{axis}`: empty value list");
            }
        }
        for m in &self.metrics {
            if !ALL_METRICS.contains(&m.as_str()) {
                bail!(
                    "field `metrics`: unknown metric `{m}` (valid: {})",
                    ALL_METRICS.join(", ")
                );
            }
        }
        // every sweep point must yield a valid run config
        for point in self.sweep_points() {
            let cfg = self.resolve(&point, self.seeds[0], None)?;
            cfg.validate()
                .with_context(|| format!("sweep point `{}`", point.label))?;
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes (axis order alphabetical, value
    /// order as listed). Without axes there is a single base point.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut points = vec![SweepPoint::default()];
        for (axis, values) in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for v in values {
                    let mut q = p.clone();
                    q.assignments.push((axis.clone(), *v));
                    next.push(q);
                }
            }
            points = next;
        }
        for p in &mut points {
            p.label = if p.assignments.is_empty() {
                "base".to_string()
            } else {
                p.assignments
                    .iter()
                    .map(|(a, v)| format!("{a}={v}"))
                    .collect::<Vec<_>>()
                    .join(";")
            };
        }
        points
    }

    /// Apply a sweep point, seed and optional worker override to the base
    /// run config.
    pub fn resolve(
        &self,
        point: &SweepPoint,
        seed: u64,
        workers_override: Option<usize>,
    ) -> Result<RunConfig> {
        let mut cfg = self.run.clone();
        for (axis, value) in &point.assignments {
            apply_axis(&mut cfg, axis, *value)?;
        }
        cfg.seed = seed;
        if let Some(w) = workers_override {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepPoint {
    pub assignments: Vec<(String, f64)>,
    pub label: String,
}

fn apply_axis(cfg: &mut RunConfig, axis: &str, value: f64) -> Result<()> {
    let as_count = |value: f64, axis: &str| -> Result<usize> {
        if value < 0.0 || value.fract() != 0.0 {
            bail!("field `sweep.{axis}`: {value} is not a nonnegative integer");
        }
        Ok(value as usize)
    };
    match axis {
        "lambda" => cfg.lambda = value,
        "alpha_star" => cfg.controller.alpha_star = value,
        "rebirth_eta" => cfg.rebirth_eta = value,
        "alpha_max" => cfg.alpha_max = value,
        "tau" => cfg.tau = value,
        "k" => cfg.k = as_count(value, axis)?,
        "n_eval" => cfg.n_eval = as_count(value, axis)?,
        "n_resample" => {
            cfg.resample_steps = None;
            cfg.n_resample = Some(as_count(value, axis)?);
        }
        other => bail!("field `sweep.{other}`: not sweepable"),
    }
    Ok(())
}
