//! Problem preparation and per-seed execution.

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use spy_core::data::{
    build_problem, generate_conditioned, generate_lasso, generate_logistic, load_libsvm, shard_even, LibsvmOptions,
    LossSpec,
};
use spy_core::engine::{
    self, DelaySchedule, DownCount, EngineConfig, ExecMode, IterRecord, LogOptions, ObjPoint, ObjectiveLog, Start,
    StopReason, StopRule, Variant,
};
use spy_core::metrics::{calibrate_l1, fingerprint_hex, identification_time, reference_solution_cached};
use spy_core::problem::{support_size, Regularizer};
use spy_core::recondition::{
    run_catalyst_spy, run_reconditioned_spy, Criterion, InnerStart, LoopRecord, OuterOptions, ReconditionParams,
};
use spy_core::sparsifier::uniform_distribution;
use spy_core::{Problem, Reference};

use crate::config::{
    AlgorithmSpec, DataSpec, Down, ExperimentConfig, InnerCriterion, InnerStartSpec, Loss, Mode, ScheduleSpec,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] spy_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A built problem with its reference solution.
pub struct Prepared {
    pub problem: Problem,
    pub reference: Reference,
    pub lambda1: f64,
    pub fingerprint: String,
}

impl Prepared {
    pub fn s_star(&self) -> usize {
        self.reference.support_size()
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, RunError> {
    let p = &cfg.problem;
    let (data, plan) = match &p.data {
        DataSpec::SyntheticLasso { d, m, sparsity, noise, seed } => {
            let (data, _) = generate_lasso::<f64>(*d, *m, *sparsity, *noise, *seed)?;
            (data, shard_even(*m, p.workers, p.shard_seed)?)
        }
        DataSpec::SyntheticLogistic { d, n, informative, flip, seed } => {
            let (data, _) = generate_logistic::<f64>(*d, *n, *informative, *flip, *seed)?;
            (data, shard_even(*n, p.workers, p.shard_seed)?)
        }
        DataSpec::SyntheticConditioned { d, rows_per_shard, mu, lip, sparsity, noise, seed } => {
            let (data, plan, _) =
                generate_conditioned::<f64>(*d, *rows_per_shard, p.workers, *mu, *lip, *sparsity, *noise, *seed)?;
            (data, plan)
        }
        DataSpec::Libsvm { path, dim, scale } => {
            let mut data = load_libsvm::<f64>(path, &LibsvmOptions { dim: *dim })?;
            if *scale {
                data = data.max_abs_scaled();
            }
            let n = data.n();
            (data, shard_even(n, p.workers, p.shard_seed)?)
        }
    };
    let loss = match p.loss {
        Loss::LeastSquares => LossSpec::LeastSquares,
        Loss::Logistic => LossSpec::Logistic { l2: p.lambda2 },
    };
    let base = build_problem(&data, &plan, loss, Regularizer::None)?;
    let lambda1 = match (p.lambda1, p.support_target) {
        (Some(l), _) => l,
        (None, Some(s)) => {
            let cal = calibrate_l1(&base, s, cfg.reference_tol)?;
            if cal.support != s {
                warn!("calibration reached {} nonzeros instead of {s}", cal.support);
            }
            cal.lambda
        }
        (None, None) => unreachable!("validated"),
    };
    let reg = if lambda1 > 0.0 { Regularizer::l1(lambda1)? } else { Regularizer::None };
    let problem = base.with_reg(reg);
    let reference = reference_solution_cached(&problem, cfg.reference_tol, None)?;
    info!(
        "problem d = {}, M = {}, L = {:.4e}, μ = {:.4e}, λ₁ = {lambda1:.6e}, s⋆ = {}",
        problem.dim(),
        problem.num_shards(),
        problem.lip(),
        problem.mu(),
        reference.support_size()
    );
    let fingerprint = fingerprint_hex(&problem);
    Ok(Prepared { problem, reference, lambda1, fingerprint })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "detail")]
pub enum Status {
    Reached,
    NotReached,
    Diverged(usize),
    Failed(String),
}

/// One logged point on the cumulative axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub iter: usize,
    pub exchanges: u64,
    pub support: usize,
    pub objective: f64,
    pub subopt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseCost {
    pub iterations: usize,
    pub exchanges: u64,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub status: Status,
    pub points: Vec<Point>,
    pub records: Vec<IterRecord>,
    pub loops: Vec<LoopRecord>,
    /// arrivals after which the support changed; 0 stands for the initial support
    pub support_changes: Vec<usize>,
    pub final_x: Vec<f64>,
    pub iterations: usize,
    pub exchanges: u64,
    pub warmstart: Option<PhaseCost>,
}

impl SeedRun {
    fn failed(seed: u64, status: Status) -> Self {
        Self {
            seed,
            status,
            points: Vec::new(),
            records: Vec::new(),
            loops: Vec::new(),
            support_changes: Vec::new(),
            final_x: Vec::new(),
            iterations: 0,
            exchanges: 0,
            warmstart: None,
        }
    }

    /// First logged exchange count with `F − F⋆ ≤ eps`.
    pub fn exchanges_to(&self, eps: f64) -> Option<u64> {
        self.points.iter().find(|p| p.subopt <= eps).map(|p| p.exchanges)
    }

    pub fn iterations_to(&self, eps: f64) -> Option<usize> {
        self.points.iter().find(|p| p.subopt <= eps).map(|p| p.iter)
    }

    pub fn identification(&self, reference: &Reference) -> Option<usize> {
        if self.final_x.is_empty() {
            return None;
        }
        identification_time(&self.support_changes, &self.final_x, reference)
    }

    pub fn final_subopt(&self) -> Option<f64> {
        self.points.last().map(|p| p.subopt)
    }
}

fn schedule(spec: &ScheduleSpec, seed: u64) -> DelaySchedule {
    match spec {
        ScheduleSpec::RoundRobin => DelaySchedule::RoundRobin,
        ScheduleSpec::Random { seed: s } => DelaySchedule::RandomUniform { seed: s.unwrap_or(seed) },
        ScheduleSpec::Heterogeneous { speeds, seed: s } => {
            DelaySchedule::Heterogeneous { speeds: speeds.clone(), seed: s.unwrap_or(seed) }
        }
    }
}

fn exec_mode(m: Mode) -> ExecMode {
    match m {
        Mode::Sim => ExecMode::Sim,
        Mode::Concurrent => ExecMode::Concurrent,
    }
}

fn down_count(d: Down) -> DownCount {
    match d {
        Down::Sparse => DownCount::Sparse,
        Down::Dense => DownCount::Dense,
    }
}

/// A single run's output before offsets are applied.
struct Leg {
    points: Vec<Point>,
    records: Vec<IterRecord>,
    loops: Vec<LoopRecord>,
    support_changes: Vec<usize>,
    initial_x: Vec<f64>,
    final_x: Vec<f64>,
    iterations: usize,
    exchanges: u64,
    up: u64,
    stop: Option<StopReason>,
}

fn points(obj: &[ObjPoint<f64>], records: &[IterRecord], x0: &[f64], f_star: f64) -> Vec<Point> {
    let s0 = support_size(x0);
    obj.iter()
        .map(|p| Point {
            iter: p.iter,
            exchanges: p.exchanges,
            support: if p.iter == 0 { s0 } else { records[p.iter - 1].support_size },
            objective: p.value,
            subopt: p.value - f_star,
        })
        .collect()
}

fn single_level(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    alg: &AlgorithmSpec,
    seed: u64,
    init: &[f64],
    max_epochs: usize,
    done: impl Fn(&[f64]) -> bool,
) -> spy_core::Result<Leg> {
    let p = &prep.problem;
    let variant = match alg {
        AlgorithmSpec::Davepg => Variant::DavePg,
        AlgorithmSpec::SpyUniform { pi } => Variant::Spy(uniform_distribution(p.dim(), *pi)?),
        AlgorithmSpec::SpySlowdown { pi } => Variant::Slowdown { pi: *pi },
        _ => unreachable!("outer methods handled separately"),
    };
    let objective = if cfg.log_stride == 0 { ObjectiveLog::Epochs } else { ObjectiveLog::Stride(cfg.log_stride) };
    let ecfg = EngineConfig {
        gamma: p.max_stepsize(),
        schedule: schedule(&cfg.schedule, seed),
        seed,
        down: down_count(cfg.down),
        mode: exec_mode(cfg.mode),
        log: LogOptions { objective, epoch_iterates: false, snapshot_stride: None },
    };
    let stop = StopRule::epochs(max_epochs).with_check(|v| done(v.x));
    let t = engine::run(p, &variant, &ecfg, Start::Prime(init.to_vec()), stop)?;
    Ok(Leg {
        points: points(&t.objective, &t.records, &t.initial_x, prep.reference.f),
        iterations: t.iterations(),
        exchanges: t.total_exchanges(),
        up: t.total_up(),
        stop: Some(t.stop),
        support_changes: t.support_changes,
        initial_x: t.initial_x,
        final_x: t.final_x,
        records: t.records,
        loops: Vec::new(),
    })
}

fn criterion(c: InnerCriterion, epochs: usize) -> Criterion {
    match c {
        InnerCriterion::C1 => Criterion::C1,
        InnerCriterion::C2 => Criterion::C2,
        InnerCriterion::C3 => Criterion::C3,
        InnerCriterion::C1Simple => Criterion::C1Simple { epochs },
        InnerCriterion::C2Prime => Criterion::C2Prime,
        InnerCriterion::C3Prime => Criterion::C3Prime,
    }
}

/// `c` for an outer method, resolving `c_factor` against the optimal support size.
pub fn resolve_c(c: Option<f64>, c_factor: Option<f64>, s_star: usize) -> f64 {
    c.unwrap_or_else(|| c_factor.unwrap_or(1.0) * s_star.max(1) as f64)
}

fn outer(cfg: &ExperimentConfig, prep: &Prepared, seed: u64, init: &[f64]) -> spy_core::Result<Leg> {
    let p = &prep.problem;
    let (c, crit, delta, start, catalyst) = match &cfg.algorithm {
        AlgorithmSpec::Reconditioned { c, c_factor, criterion: k, epochs, delta, inner_start } => {
            (resolve_c(*c, *c_factor, prep.s_star()), criterion(*k, *epochs), *delta, *inner_start, false)
        }
        AlgorithmSpec::Catalyst { c, c_factor, criterion: k, delta, inner_start } => {
            (resolve_c(*c, *c_factor, prep.s_star()), criterion(*k, 1), *delta, *inner_start, true)
        }
        _ => unreachable!("single-level methods handled separately"),
    };
    let params = ReconditionParams::for_problem(p, c, delta)?;
    let opts = OuterOptions {
        criterion: crit,
        target: cfg.target,
        f_star: Some(prep.reference.f),
        outer_budget: cfg.outer_budget,
        inner_start: match start {
            InnerStartSpec::Continue => InnerStart::Continue,
            InnerStartSpec::Prime => InnerStart::Prime,
        },
        schedule: schedule(&cfg.schedule, seed),
        seed,
        mode: exec_mode(cfg.mode),
        down: down_count(cfg.down),
        ..Default::default()
    };
    let t = if catalyst {
        run_catalyst_spy(p, &params, &opts, init)?
    } else {
        run_reconditioned_spy(p, &params, &opts, init)?
    };
    Ok(Leg {
        points: points(&t.objective, &t.records, &t.initial_x, prep.reference.f),
        iterations: t.iterations(),
        exchanges: t.total_exchanges(),
        up: t.ledger.up,
        stop: None,
        support_changes: t.support_changes,
        initial_x: t.initial_x,
        final_x: t.final_x,
        records: t.records,
        loops: t.loops,
    })
}

fn main_leg(cfg: &ExperimentConfig, prep: &Prepared, seed: u64, init: &[f64]) -> spy_core::Result<Leg> {
    if cfg.algorithm.is_outer() {
        outer(cfg, prep, seed, init)
    } else {
        let f_star = prep.reference.f;
        let p = &prep.problem;
        single_level(cfg, prep, &cfg.algorithm, seed, init, cfg.max_epochs, |x| {
            p.eval_objective(x).is_ok_and(|f| f - f_star <= cfg.target)
        })
    }
}

fn status_of(err: spy_core::Error, seed: u64) -> SeedRun {
    match err {
        spy_core::Error::Diverged { iteration } => {
            warn!("seed {seed} diverged at iteration {iteration}");
            SeedRun::failed(seed, Status::Diverged(iteration))
        }
        e => {
            warn!("seed {seed} failed: {e}");
            SeedRun::failed(seed, Status::Failed(e.to_string()))
        }
    }
}

fn finish(seed: u64, leg: Leg, target: f64, warmstart: Option<PhaseCost>) -> SeedRun {
    let reached = leg.points.iter().any(|p| p.subopt <= target);
    SeedRun {
        seed,
        status: if reached { Status::Reached } else { Status::NotReached },
        points: leg.points,
        records: leg.records,
        loops: leg.loops,
        support_changes: leg.support_changes,
        final_x: leg.final_x,
        iterations: leg.iterations,
        exchanges: leg.exchanges,
        warmstart,
    }
}

/// Runs one seed from zero.
pub fn run_seed(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> SeedRun {
    let init = vec![0.0; prep.problem.dim()];
    match main_leg(cfg, prep, seed, &init) {
        Ok(leg) => finish(seed, leg, cfg.target, None),
        Err(e) => status_of(e, seed),
    }
}

/// Shifts a later leg so its counters continue from the first one.
fn append(mut first: Leg, second: Leg) -> Leg {
    let (k0, e0, up0) = (first.iterations, first.exchanges, first.up);
    let down0 = e0 - up0;
    first.points.extend(second.points.into_iter().map(|p| Point { iter: p.iter + k0, exchanges: p.exchanges + e0, ..p }));
    let epoch0 = first.records.last().map_or(0, |r| r.epoch);
    first.records.extend(second.records.into_iter().map(|r| IterRecord { k: r.k + k0, epoch: r.epoch + epoch0, ..r }));
    first.loops.extend(second.loops.into_iter().map(|l| LoopRecord {
        cum_up: l.cum_up + up0,
        cum_down: l.cum_down + down0,
        cum_iters: l.cum_iters + k0,
        ..l
    }));
    let restart_changed = first.final_x.iter().zip(&second.initial_x).any(|(a, b)| (*a == 0.0) != (*b == 0.0));
    if restart_changed {
        first.support_changes.push(k0);
    }
    first.support_changes.extend(second.support_changes.into_iter().skip(1).map(|k| k + k0));
    first.final_x = second.final_x;
    first.iterations += second.iterations;
    first.exchanges += second.exchanges;
    first.up += second.up;
    first.stop = second.stop;
    first
}

/// Phase 1 with the warmstart algorithm until the trigger holds, then the configured method.
pub fn run_warmstart_seed(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> SeedRun {
    let w = cfg.warmstart.as_ref().expect("validated");
    let p = &prep.problem;
    let d = p.dim() as f64;
    let f_star = prep.reference.f;
    let trigger = |x: &[f64]| {
        support_size(x) as f64 <= w.density * d && p.eval_objective(x).is_ok_and(|f| f - f_star <= w.subopt)
    };
    let init = vec![0.0; p.dim()];
    let phase1 = if trigger(&init) {
        None
    } else {
        match single_level(cfg, prep, &w.algorithm, seed, &init, w.max_epochs, trigger) {
            Ok(leg) if leg.stop == Some(StopReason::Criterion) => Some(leg),
            Ok(leg) => {
                let best = leg.points.iter().map(|p| p.subopt).fold(f64::INFINITY, f64::min);
                let mut run = finish(seed, leg, cfg.target, None);
                run.status = Status::Failed(format!(
                    "warmstart trigger not reached within {} epochs (best suboptimality {best:e})",
                    w.max_epochs
                ));
                return run;
            }
            Err(e) => return status_of(e, seed),
        }
    };
    let start = phase1.as_ref().map_or(init.clone(), |l| l.final_x.clone());
    let cost = phase1.as_ref().map_or(PhaseCost { iterations: 0, exchanges: 0, skipped: true }, |l| PhaseCost {
        iterations: l.iterations,
        exchanges: l.exchanges,
        skipped: false,
    });
    match main_leg(cfg, prep, seed, &start) {
        Ok(leg) => {
            let leg = match phase1 {
                Some(first) => append(first, leg),
                None => leg,
            };
            finish(seed, leg, cfg.target, Some(cost))
        }
        Err(e) => status_of(e, seed),
    }
}

/// Runs every seed in parallel.
pub fn run_all(cfg: &ExperimentConfig, prep: &Prepared, warm: bool) -> Vec<SeedRun> {
    cfg.seeds
        .par_iter()
        .map(|&s| {
            let run = if warm { run_warmstart_seed(cfg, prep, s) } else { run_seed(cfg, prep, s) };
            info!("{}: seed {s} {:?} after {} exchanges", cfg.name, run.status, run.exchanges);
            run
        })
        .collect()
}

/// 0 when every seed reached the target, 3 when all diverged, 4 otherwise.
pub fn exit_code(runs: &[SeedRun]) -> i32 {
    if !runs.is_empty() && runs.iter().all(|r| matches!(r.status, Status::Diverged(_))) {
        3
    } else if runs.iter().all(|r| r.status == Status::Reached) {
        0
    } else {
        4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(status: Status) -> SeedRun {
        SeedRun::failed(0, status)
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&[with(Status::Reached), with(Status::Reached)]), 0);
        assert_eq!(exit_code(&[with(Status::Diverged(3)), with(Status::Diverged(9))]), 3);
        assert_eq!(exit_code(&[with(Status::Diverged(3)), with(Status::Reached)]), 4);
        assert_eq!(exit_code(&[with(Status::NotReached), with(Status::Reached)]), 4);
        assert_eq!(exit_code(&[with(Status::Failed("x".into()))]), 4);
    }

    #[test]
    fn c_resolution() {
        assert_eq!(resolve_c(Some(7.0), None, 12), 7.0);
        assert_eq!(resolve_c(None, Some(3.0), 12), 36.0);
        assert_eq!(resolve_c(None, Some(2.0), 0), 2.0);
    }
}
