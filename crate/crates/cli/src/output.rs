//! Report and CSV writers. Every file except the summary's wall_ms column
//! is a deterministic function of the resolved config.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use fvd_core::engine::{RunConfig, RunReport};
use serde::Serialize;

pub const STEPS_HEADER: &str =
    "step,alpha_t,lambda,n_dead,n_revived,distinct_lineages,mean_reward,std_log_g";
pub const SUMMARY_SCHEMA: &str = "# fvd-summary-v1";
pub const SUMMARY_HEADER: &str =
    "sweep_point,seed,mean_reward,mmd,diversity,tv_oracle,final_lineages,wall_ms";

/// Per-run report document.
#[derive(Debug, Serialize)]
pub struct ReportFile<'a> {
    pub version: &'a str,
    pub sweep_point: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub report: &'a RunReport,
}

pub fn write_report_json(path: &Path, doc: &ReportFile<'_>) -> Result<()> {
    let json = serde_json::to_string_pretty(doc).context("serializing report")?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn steps_csv(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(STEPS_HEADER);
    out.push('\n');
    for s in &report.per_step_stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.step, s.alpha_t, s.lambda, s.n_dead, s.n_revived, s.distinct_lineages, s.mean_reward, s.std_log_g
        );
    }
    out
}

pub struct SummaryRow {
    pub sweep_point: String,
    pub seed: u64,
    pub metrics: Vec<(String, f64)>,
    pub wall_ms: f64,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_SCHEMA);
    out.push('\n');
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        let metric = |name: &str| -> String {
            row.metrics
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| format!("{v}"))
                .unwrap_or_else(|| "nan".to_string())
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.sweep_point,
            row.seed,
            metric("mean_reward"),
            metric("mmd"),
            metric("diversity"),
            metric("tv_oracle"),
            metric("final_lineages"),
            row.wall_ms,
        );
    }
    out
}

/// Histogram of killed-particle reward ranks, one block of bins per method.
pub fn killed_rank_histogram_csv(per_method: &[(String, Vec<f64>)], bins: usize) -> String {
    let mut out = String::new();
    out.push_str("method,bin_lo,bin_hi,count,fraction\n");
    for (method, ranks) in per_method {
        let mut counts = vec![0usize; bins];
        for r in ranks {
            let b = ((r * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let total = ranks.len().max(1) as f64;
        for (b, c) in counts.iter().enumerate() {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let _ = writeln!(out, "{method},{lo},{hi},{c},{}", *c as f64 / total);
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
