//! The run, verify and compare commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fvd_core::diagnostics::death_stats;
use fvd_core::engine::{self, Method, RunConfig, RunReport};

use crate::checks;
use crate::config::ExperimentConfig;
use crate::output::{
    killed_rank_histogram_csv, steps_csv, summary_csv, write_report_json, write_text, ReportFile,
    SummaryRow,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct CommonArgs {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed_override: Option<u64>,
}

fn output_dir(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .context("no output directory: set `output_dir` in the config or pass --out")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn seeds(cfg: &ExperimentConfig, args: &CommonArgs) -> Vec<u64> {
    match args.seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    }
}

fn timed_run(cfg: &RunConfig) -> Result<(RunReport, f64)> {
    let start = Instant::now();
    let report = engine::run(cfg)?;
    Ok((report, start.elapsed().as_secs_f64() * 1e3))
}

/// Execute every (sweep point x seed) run; write one report JSON and one
/// per-step CSV per run plus a sweep summary CSV.
pub fn cmd_run(config_path: &Path, args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(config_path)?;
    let dir = output_dir(&cfg, args)?;
    let seeds = seeds(&cfg, args);
    let mut summary_rows = Vec::new();
    for (idx, point) in cfg.sweep_points().iter().enumerate() {
        for &seed in &seeds {
            let run_cfg = cfg.resolve(point, seed, args.workers)?;
            let (report, wall_ms) = timed_run(&run_cfg)
                .with_context(|| format!("run {idx:03} (point `{}`, seed {seed})", point.label))?;
            let stem = format!("run_{idx:03}_{seed}");
            write_report_json(
                &dir.join(format!("{stem}.report.json")),
                &ReportFile {
                    version: VERSION,
                    sweep_point: &point.label,
                    seed,
                    config: &run_cfg,
                    report: &report,
                },
            )?;
            write_text(&dir.join(format!("{stem}.steps.csv")), &steps_csv(&report))?;
            summary_rows.push(SummaryRow {
                sweep_point: point.label.clone(),
                seed,
                metrics: cfg
                    .metrics
                    .iter()
                    .filter_map(|m| report.metrics.get(m).map(|v| (m.clone(), *v)))
                    .collect(),
                wall_ms,
            });
        }
    }
    write_text(&dir.join("summary.csv"), &summary_csv(&summary_rows))?;
    println!(
        "wrote {} runs to {}",
        summary_rows.len(),
        dir.display()
    );
    Ok(())
}

/// Run the verification suite and print one line per check.
pub fn cmd_verify() -> Result<()> {
    let checks = checks::all_checks();
    let mut failed = 0usize;
    println!("{:<62} {:>14} {:>14} {:>10}  result", "check", "measured", "expected", "tolerance");
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "{:<62} {:>14.6e} {:>14.6e} {:>10.1e}  {status}",
            c.name, c.measured, c.expected, c.tolerance
        );
        if !c.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

/// Matched runs of both methods on one config; per-method step CSVs, a
/// killed-rank histogram, and a per-seed comparison summary.
pub fn cmd_compare(config_path: &Path, args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(config_path)?;
    if !cfg.sweep.is_empty() {
        bail!("compare does not take sweep axes; remove the `sweep` field");
    }
    let dir = output_dir(&cfg, args)?;
    let seeds = seeds(&cfg, args);
    let methods = [
        (Method::Fvd, "fvd"),
        (Method::SmcMultinomial, "smc_multinomial"),
    ];
    let mut all_ranks: Vec<(String, Vec<f64>)> = Vec::new();
    let mut lines = vec![
        "method,seed,final_lineages,mean_killed_rank,mean_death_rate,mean_reward".to_string(),
    ];
    for (method, name) in methods {
        let mut ranks = Vec::new();
        for &seed in &seeds {
            let mut run_cfg = cfg.resolve(&Default::default(), seed, args.workers)?;
            run_cfg.method = method;
            let (report, _) = timed_run(&run_cfg)
                .with_context(|| format!("compare {name} seed {seed}"))?;
            write_text(
                &dir.join(format!("compare_{name}_seed{seed}.steps.csv")),
                &steps_csv(&report),
            )?;
            let stats = death_stats(
                &report.events,
                report.metrics["final_lineages"] as usize,
                &[0.7],
            );
            lines.push(format!(
                "{name},{seed},{},{},{},{}",
                stats.final_distinct_lineages,
                stats.mean_killed_rank,
                stats.mean_death_rate,
                report.metrics["mean_reward"],
            ));
            ranks.extend(report.events.iter().flat_map(|e| e.killed_ranks.iter().copied()));
        }
        all_ranks.push((name.to_string(), ranks));
    }
    write_text(
        &dir.join("compare_killed_ranks.csv"),
        &killed_rank_histogram_csv(&all_ranks, 20),
    )?;
    write_text(&dir.join("compare_summary.csv"), &(lines.join("\n") + "\n"))?;
    println!("wrote comparison to {}", dir.display());
    Ok(())
}
