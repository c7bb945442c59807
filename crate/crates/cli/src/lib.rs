//! Experiment runner: configuration, seeds in parallel, CSV and JSON output.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;

use config::{ConfigError, ExperimentConfig};
use output::{spread, Group, Spread, Summary};
use runner::{Prepared, RunError, SeedRun};

/// A finished experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub prepared: Prepared,
    pub runs: Vec<SeedRun>,
}

impl Experiment {
    pub fn exit_code(&self) -> i32 {
        runner::exit_code(&self.runs)
    }
}

pub fn execute(cfg: &ExperimentConfig, warm: bool) -> Result<Experiment, RunError> {
    cfg.validate()?;
    if warm && cfg.warmstart.is_none() {
        return Err(ConfigError::Invalid(vec!["warmstart: section missing".into()]).into());
    }
    let prepared = runner::prepare(cfg)?;
    let runs = runner::run_all(cfg, &prepared, warm);
    Ok(Experiment { config: cfg.clone(), prepared, runs })
}

fn write_experiment(dir: &Path, e: &Experiment) -> Result<Summary, RunError> {
    fs::create_dir_all(dir)?;
    for r in &e.runs {
        output::write_seed(dir, r)?;
    }
    output::write_curves(dir, &[Group { label: &e.config.name, runs: &e.runs }])?;
    fs::write(dir.join("config.toml"), e.config.to_toml())?;
    let summary = output::summarize(&e.config, &e.prepared, &e.runs);
    output::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `run`: all seeds of one config; returns the exit code.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<i32, RunError> {
    let e = execute(cfg, false)?;
    write_experiment(out, &e)?;
    info!("wrote {}", out.display());
    Ok(e.exit_code())
}

/// `warmstart`: dense phase until the trigger, then the configured method.
pub fn cmd_warmstart(cfg: &ExperimentConfig, out: &Path) -> Result<i32, RunError> {
    let e = execute(cfg, true)?;
    write_experiment(out, &e)?;
    Ok(e.exit_code())
}

#[derive(Debug, Serialize)]
struct CompareEntry {
    name: String,
    algorithm: String,
    directory: String,
    reached: usize,
    exchanges_to_target: Option<Spread>,
    /// median exchanges to target relative to the first config
    ratio_to_first: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    fingerprint: String,
    s_star: usize,
    configs: Vec<CompareEntry>,
}

fn dir_name(i: usize, name: &str) -> String {
    let clean: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{i:02}_{clean}")
}

/// Runs every config on a problem they all share.
pub fn compare(cfgs: &[ExperimentConfig], warm: bool) -> Result<Vec<Experiment>, RunError> {
    if cfgs.len() < 2 {
        return Err(ConfigError::Invalid(vec!["compare needs at least two configs".into()]).into());
    }
    let mut errs = Vec::new();
    for c in cfgs {
        if let Err(ConfigError::Invalid(e)) = c.validate() {
            errs.extend(e.into_iter().map(|m| format!("{}: {m}", c.name)));
        }
    }
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs).into());
    }
    let mut out: Vec<Experiment> = Vec::new();
    for c in cfgs {
        let reuse = out.iter().position(|e| e.config.problem == c.problem && e.config.reference_tol == c.reference_tol);
        let prepared = match reuse {
            Some(i) => {
                let p = &out[i].prepared;
                Prepared {
                    problem: p.problem.clone(),
                    reference: p.reference.clone(),
                    lambda1: p.lambda1,
                    fingerprint: p.fingerprint.clone(),
                }
            }
            None => runner::prepare(c)?,
        };
        if let Some(first) = out.first() {
            if first.prepared.fingerprint != prepared.fingerprint {
                return Err(RunError::Mismatch(format!(
                    "{} and {} are not on the same problem (fingerprints {} and {})",
                    first.config.name, c.name, first.prepared.fingerprint, prepared.fingerprint
                )));
            }
        }
        let runs = runner::run_all(c, &prepared, warm && c.warmstart.is_some());
        out.push(Experiment { config: c.clone(), prepared, runs });
    }
    Ok(out)
}

/// `compare`: per-config directories plus merged curves, `complexity.csv` and `summary.json`.
pub fn cmd_compare(cfgs: &[ExperimentConfig], out: &Path) -> Result<i32, RunError> {
    let exps = compare(cfgs, true)?;
    fs::create_dir_all(out)?;
    let mut entries = Vec::new();
    let mut base_median = None;
    for (i, e) in exps.iter().enumerate() {
        let dir = dir_name(i, &e.config.name);
        let s = write_experiment(&out.join(&dir), e)?;
        let median = s.exchanges_to_target.map(|s| s.median);
        if i == 0 {
            base_median = median;
        }
        entries.push(CompareEntry {
            name: e.config.name.clone(),
            algorithm: e.config.algorithm.label(),
            directory: dir,
            reached: s.reached,
            exchanges_to_target: s.exchanges_to_target,
            ratio_to_first: median.zip(base_median).map(|(m, b)| m / b),
        });
    }
    let groups: Vec<Group<'_>> = exps.iter().map(|e| Group { label: &e.config.name, runs: &e.runs }).collect();
    output::write_curves(out, &groups)?;
    let targets: Vec<f64> = exps.iter().map(|e| e.config.target).collect();
    output::write_complexity(&out.join("complexity.csv"), &groups, &targets)?;
    let summary = CompareSummary {
        fingerprint: exps[0].prepared.fingerprint.clone(),
        s_star: exps[0].prepared.s_star(),
        configs: entries,
    };
    output::write_json(&out.join("summary.json"), &summary)?;
    Ok(exps.iter().map(Experiment::exit_code).max().unwrap_or(0))
}

/// Median exchanges to target, over the seeds that reached it.
pub fn median_exchanges(e: &Experiment) -> Option<f64> {
    spread(e.runs.iter().filter_map(|r| r.exchanges_to(e.config.target).map(|v| v as f64))).map(|s| s.median)
}
