//! CSV and JSON emission.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{PhaseCost, Prepared, RunError, SeedRun, Status};

/// Writes `seed_<s>/trace.csv`, `objective.csv` and, for outer methods, `outer.csv`.
pub fn write_seed(dir: &Path, run: &SeedRun) -> Result<(), RunError> {
    let dir = dir.join(format!("seed_{}", run.seed));
    fs::create_dir_all(&dir)?;

    let logged: HashMap<usize, f64> = run.points.iter().map(|p| (p.iter, p.objective)).collect();
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    w.write_record(["k", "worker", "coords_up", "coords_down", "support_size", "epoch_m", "objective"])?;
    for r in &run.records {
        let obj = logged.get(&(r.k + 1)).map(|v| format!("{v:e}")).unwrap_or_default();
        w.write_record([
            r.k.to_string(),
            r.worker.to_string(),
            r.coords_up.to_string(),
            r.coords_down.to_string(),
            r.support_size.to_string(),
            r.epoch.to_string(),
            obj,
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("objective.csv"))?;
    w.write_record(["iter", "exchanges", "support_size", "objective", "subopt"])?;
    for p in &run.points {
        w.write_record([
            p.iter.to_string(),
            p.exchanges.to_string(),
            p.support.to_string(),
            format!("{:e}", p.objective),
            format!("{:e}", p.subopt),
        ])?;
    }
    w.flush()?;

    if !run.loops.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("outer.csv"))?;
        w.write_record(["l", "inner_epochs", "pi_l", "support_size", "cum_coords_up", "cum_coords_down", "subopt"])?;
        for l in &run.loops {
            w.write_record([
                l.l.to_string(),
                l.inner_epochs.to_string(),
                format!("{:e}", l.pi_l),
                l.support_size.to_string(),
                l.cum_up.to_string(),
                l.cum_down.to_string(),
                l.subopt.map(|s| format!("{s:e}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn spread(values: impl IntoIterator<Item = f64>) -> Option<Spread> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Spread { n: v.len(), median: quantile(&v, 0.5), q25: quantile(&v, 0.25), q75: quantile(&v, 0.75) })
}

/// One labelled group of seed runs.
pub struct Group<'a> {
    pub label: &'a str,
    pub runs: &'a [SeedRun],
}

type Extract = fn(&crate::runner::Point) -> (f64, f64);

const FAMILIES: [(&str, &str, &str, Extract); 3] = [
    ("support_vs_iters", "iter", "support_size", |p| (p.iter as f64, p.support as f64)),
    ("subopt_vs_iters", "iter", "subopt", |p| (p.iter as f64, p.subopt)),
    ("subopt_vs_exchanges", "exchanges", "subopt", |p| (p.exchanges as f64, p.subopt)),
];

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:e}")
    }
}

/// The three curve families: one row per logged point per seed, plus a `_band` file with the
/// pointwise median and quartiles across seeds at each log index.
pub fn write_curves(dir: &Path, groups: &[Group<'_>]) -> Result<(), RunError> {
    for (name, xname, yname, f) in FAMILIES {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
        w.write_record(["config", "seed", xname, yname])?;
        let mut band = csv::Writer::from_path(dir.join(format!("{name}_band.csv")))?;
        band.write_record(["config", "index", &format!("{xname}_median"), "median", "q25", "q75", "n"])?;
        for g in groups {
            for r in g.runs {
                for p in &r.points {
                    let (x, y) = f(p);
                    w.write_record([g.label.to_string(), r.seed.to_string(), num(x), num(y)])?;
                }
            }
            let longest = g.runs.iter().map(|r| r.points.len()).max().unwrap_or(0);
            for j in 0..longest {
                let at: Vec<(f64, f64)> = g.runs.iter().filter_map(|r| r.points.get(j)).map(f).collect();
                let xs = spread(at.iter().map(|a| a.0)).expect("nonempty");
                let ys = spread(at.iter().map(|a| a.1)).expect("nonempty");
                band.write_record([
                    g.label.to_string(),
                    j.to_string(),
                    num(xs.median),
                    num(ys.median),
                    num(ys.q25),
                    num(ys.q75),
                    ys.n.to_string(),
                ])?;
            }
        }
        w.flush()?;
        band.flush()?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub status: Status,
    pub iterations: usize,
    pub exchanges: u64,
    pub exchanges_to_target: Option<u64>,
    pub iterations_to_target: Option<usize>,
    /// arrivals after which the support stays equal to the optimal one
    pub identification: Option<usize>,
    pub final_subopt: Option<f64>,
    pub final_support: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmstart: Option<PhaseCost>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub algorithm: String,
    pub fingerprint: String,
    pub d: usize,
    pub workers: usize,
    pub lambda1: f64,
    pub f_star: f64,
    pub s_star: usize,
    pub target: f64,
    pub seeds: Vec<u64>,
    pub reached: usize,
    pub identification: Option<Spread>,
    pub identified: usize,
    pub exchanges_to_target: Option<Spread>,
    pub iterations_to_target: Option<Spread>,
    /// phase-1 share of total exchanges to target, for warm-started runs
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmstart_share: Option<Spread>,
    pub per_seed: Vec<SeedSummary>,
    pub note: &'static str,
}

const NOTE: &str = "exchanges count coordinates sent between workers and coordinator; \
reference solutions and inexactness oracles are not charged";

pub fn summarize(cfg: &ExperimentConfig, prep: &Prepared, runs: &[SeedRun]) -> Summary {
    let per_seed: Vec<SeedSummary> = runs
        .iter()
        .map(|r| SeedSummary {
            seed: r.seed,
            status: r.status.clone(),
            iterations: r.iterations,
            exchanges: r.exchanges,
            exchanges_to_target: r.exchanges_to(cfg.target),
            iterations_to_target: r.iterations_to(cfg.target),
            identification: r.identification(&prep.reference),
            final_subopt: r.final_subopt(),
            final_support: r.points.last().map(|p| p.support),
            warmstart: r.warmstart,
        })
        .collect();
    let ident: Vec<f64> = per_seed.iter().filter_map(|s| s.identification.map(|v| v as f64)).collect();
    let share = runs.iter().filter_map(|r| {
        let w = r.warmstart?;
        let total = r.exchanges_to(cfg.target)?;
        Some(w.exchanges as f64 / total as f64)
    });
    Summary {
        name: cfg.name.clone(),
        algorithm: cfg.algorithm.label(),
        fingerprint: prep.fingerprint.clone(),
        d: prep.problem.dim(),
        workers: prep.problem.num_shards(),
        lambda1: prep.lambda1,
        f_star: prep.reference.f,
        s_star: prep.s_star(),
        target: cfg.target,
        seeds: cfg.seeds.clone(),
        reached: runs.iter().filter(|r| r.status == Status::Reached).count(),
        identified: ident.len(),
        identification: spread(ident),
        exchanges_to_target: spread(per_seed.iter().filter_map(|s| s.exchanges_to_target.map(|v| v as f64))),
        iterations_to_target: spread(per_seed.iter().filter_map(|s| s.iterations_to_target.map(|v| v as f64))),
        warmstart_share: if cfg.warmstart.is_some() { spread(share) } else { None },
        per_seed,
        note: NOTE,
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `config, seed, exchanges_to_target, iterations_to_target` for every run.
pub fn write_complexity(path: &Path, groups: &[Group<'_>], target: &[f64]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config", "seed", "exchanges_to_target", "iterations_to_target"])?;
    for (g, &eps) in groups.iter().zip(target) {
        for r in g.runs {
            w.write_record([
                g.label.to_string(),
                r.seed.to_string(),
                r.exchanges_to(eps).map(|v| v.to_string()).unwrap_or_default(),
                r.iterations_to(eps).map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
