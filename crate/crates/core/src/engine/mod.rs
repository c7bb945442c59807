//! Asynchronous coordinator/worker execution of DAve-PG, Spy and the slowdown variant.

mod concurrent;
pub mod epochs;
pub mod schedule;
mod sim;
pub mod trace;

use log::warn;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::norm_sq;
use crate::problem::{CompositeProblem, Workspace};
use crate::rng::{stream, StreamRng};
use crate::scalar::Scalar;
use crate::sparsifier::{draw_mask, CoordinateMask, SelectorDistribution};

pub use epochs::{epoch_boundaries, EpochTracker};
pub use schedule::{Arrivals, DelaySchedule};
pub use trace::{IterRecord, ObjPoint, RunTrace, StopReason};

/// Norm above which an iterate is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum Variant<T> {
    DavePg,
    Spy(SelectorDistribution<T>),
    /// probability 1 on `supp(x)` and `pi` elsewhere, with the update on `supp(x)` damped by `pi`
    Slowdown { pi: T },
}

impl<T: Scalar> Variant<T> {
    fn uses_mask(&self) -> bool {
        match self {
            Variant::DavePg => false,
            Variant::Spy(d) => !d.is_full(),
            Variant::Slowdown { pi } => *pi < T::one(),
        }
    }

    fn slowdown(&self) -> Option<T> {
        match self {
            Variant::Slowdown { pi } if *pi < T::one() => Some(*pi),
            _ => None,
        }
    }
}

/// How the downward message is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DownCount {
    /// `|supp(x)|` plus the mask size when a mask is sent
    #[default]
    Sparse,
    /// `d` plus the mask size when a mask is sent
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Sim,
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveLog {
    #[default]
    Off,
    /// at every epoch boundary
    Epochs,
    /// every n arrivals
    Stride(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogOptions {
    pub objective: ObjectiveLog,
    pub epoch_iterates: bool,
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig<T> {
    pub gamma: T,
    pub schedule: DelaySchedule,
    pub seed: u64,
    pub down: DownCount,
    pub mode: ExecMode,
    pub log: LogOptions,
}

impl<T: Scalar> EngineConfig<T> {
    pub fn new(gamma: T) -> Self {
        Self {
            gamma,
            schedule: DelaySchedule::RoundRobin,
            seed: 0,
            down: DownCount::Sparse,
            mode: ExecMode::Sim,
            log: LogOptions::default(),
        }
    }
}

/// State handed to the stop check at every epoch boundary.
#[derive(Debug)]
pub struct EpochView<'a, T> {
    pub epoch: usize,
    pub iterations: usize,
    pub x: &'a [T],
}

impl<T> Clone for EpochView<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for EpochView<'_, T> {}

type Check<'a, T> = Box<dyn FnMut(EpochView<'_, T>) -> bool + 'a>;

/// Budgets plus an optional predicate, all evaluated at epoch boundaries (including `k_0`)
/// except `max_iters`, which is checked before every arrival.
#[derive(Default)]
pub struct StopRule<'a, T> {
    pub max_epochs: Option<usize>,
    pub max_iters: Option<usize>,
    pub check: Option<Check<'a, T>>,
}

impl<'a, T> StopRule<'a, T> {
    pub fn epochs(m: usize) -> Self {
        Self { max_epochs: Some(m), max_iters: None, check: None }
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = Some(n);
        self
    }

    pub fn with_check(mut self, f: impl FnMut(EpochView<'_, T>) -> bool + 'a) -> Self {
        self.check = Some(Box::new(f));
        self
    }

    fn at_boundary(&mut self, view: EpochView<'_, T>) -> Option<StopReason> {
        if let Some(c) = self.check.as_mut() {
            if c(view) {
                return Some(StopReason::Criterion);
            }
        }
        if self.max_epochs.is_some_and(|m| view.epoch >= m) {
            return Some(StopReason::EpochBudget);
        }
        None
    }
}

impl<T> std::fmt::Debug for StopRule<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StopRule")
            .field("max_epochs", &self.max_epochs)
            .field("max_iters", &self.max_iters)
            .field("check", &self.check.is_some())
            .finish()
    }
}

/// Worker points and aggregate carried from one run to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmState<T> {
    pub xbar: Vec<T>,
    pub workers: Vec<Vec<T>>,
}

impl<T: Scalar> WarmState<T> {
    pub fn from_trace(t: &RunTrace<T>) -> Self {
        Self { xbar: t.final_xbar.clone(), workers: t.worker_points.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start<T> {
    /// one synchronous dense round from this point
    Prime(Vec<T>),
    Continue(WarmState<T>),
}

pub fn validate_stepsize<T: Scalar>(problem: &CompositeProblem<T>, gamma: T) -> Result<()> {
    let max = problem.max_stepsize();
    if !(gamma > T::zero()) || gamma > max * T::of(1.0 + 1e-9) {
        return Err(Error::InvalidStepsize { gamma: gamma.as_f64(), max: max.as_f64() });
    }
    Ok(())
}

fn validate<T: Scalar>(
    problem: &CompositeProblem<T>,
    variant: &Variant<T>,
    cfg: &EngineConfig<T>,
    start: &Start<T>,
) -> Result<()> {
    validate_stepsize(problem, cfg.gamma)?;
    let (d, m) = (problem.dim(), problem.num_shards());
    cfg.schedule.validate(m)?;
    match variant {
        Variant::DavePg => {}
        Variant::Spy(dist) => {
            if dist.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: dist.dim() });
            }
            if !dist.satisfies_gap(cfg.gamma, problem.mu()) {
                warn!(
                    "p_min/p_max = {} below (1-γμ)² = {}; no contraction guarantee",
                    (dist.p_min() / dist.p_max()).as_f64(),
                    (T::one() - cfg.gamma * problem.mu()).powi(2).as_f64()
                );
            }
        }
        Variant::Slowdown { pi } => {
            if !(*pi > T::zero() && *pi <= T::one()) {
                return Err(invalid(format!("π = {pi} outside (0, 1]")));
            }
        }
    }
    if let ObjectiveLog::Stride(0) = cfg.log.objective {
        return Err(invalid("objective stride must be positive"));
    }
    if cfg.log.snapshot_stride == Some(0) {
        return Err(invalid("snapshot stride must be positive"));
    }
    match start {
        Start::Prime(x) if x.len() != d => Err(Error::DimensionMismatch { expected: d, found: x.len() }),
        Start::Continue(w) => {
            if w.workers.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: w.workers.len() });
            }
            if let Some(bad) = std::iter::once(&w.xbar).chain(&w.workers).find(|v| v.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Runs one asynchronous solve of `problem` (including its shift, if any).
pub fn run<T: Scalar>(
    problem: &CompositeProblem<T>,
    variant: &Variant<T>,
    cfg: &EngineConfig<T>,
    start: Start<T>,
    stop: StopRule<'_, T>,
) -> Result<RunTrace<T>> {
    validate(problem, variant, cfg, &start)?;
    match cfg.mode {
        ExecMode::Sim => sim::run(problem, variant, cfg, start, stop),
        ExecMode::Concurrent => concurrent::run(problem, variant, cfg, start, stop),
    }
}

pub fn run_davepg<T: Scalar>(
    problem: &CompositeProblem<T>,
    cfg: &EngineConfig<T>,
    init: &[T],
    stop: StopRule<'_, T>,
) -> Result<RunTrace<T>> {
    run(problem, &Variant::DavePg, cfg, Start::Prime(init.to_vec()), stop)
}

pub fn run_spy<T: Scalar>(
    problem: &CompositeProblem<T>,
    dist: &SelectorDistribution<T>,
    cfg: &EngineConfig<T>,
    init: &[T],
    stop: StopRule<'_, T>,
) -> Result<RunTrace<T>> {
    run(problem, &Variant::Spy(dist.clone()), cfg, Start::Prime(init.to_vec()), stop)
}

pub fn run_adaptive_spy_slowdown<T: Scalar>(
    problem: &CompositeProblem<T>,
    pi: T,
    cfg: &EngineConfig<T>,
    init: &[T],
    stop: StopRule<'_, T>,
) -> Result<RunTrace<T>> {
    run(problem, &Variant::Slowdown { pi }, cfg, Start::Prime(init.to_vec()), stop)
}

/// Local step of worker `i` from the model it holds: returns `x_i⁺` on `mask`.
pub(crate) fn worker_update<T: Scalar>(
    problem: &CompositeProblem<T>,
    gamma: T,
    i: usize,
    model: &[T],
    mask: &[usize],
    slowdown: Option<T>,
    xi: &[T],
    out: &mut [T],
    ws: &mut Workspace<T>,
) {
    let full = mask.len() == model.len();
    problem.grad_shard_into(i, model, if full { None } else { Some(mask) }, out, ws);
    for (o, &j) in out.iter_mut().zip(mask) {
        let mut v = model[j] - gamma * *o;
        if let Some(pi) = slowdown {
            if model[j] != T::zero() {
                v = pi * v + (T::one() - pi) * xi[j];
            }
        }
        *o = v;
    }
}

/// Coordinator state shared by both execution modes.
pub(crate) struct Coordinator<'p, T> {
    problem: &'p CompositeProblem<T>,
    gamma: T,
    variant: Variant<T>,
    down: DownCount,
    pub xbar: Vec<T>,
    pub x: Vec<T>,
    pub nnz: usize,
    rngs: Vec<StreamRng>,
    uses_mask: bool,
}

impl<'p, T: Scalar> Coordinator<'p, T> {
    pub fn new(problem: &'p CompositeProblem<T>, variant: &Variant<T>, cfg: &EngineConfig<T>) -> Self {
        let d = problem.dim();
        Self {
            problem,
            gamma: cfg.gamma,
            variant: variant.clone(),
            down: cfg.down,
            xbar: vec![T::zero(); d],
            x: vec![T::zero(); d],
            nnz: 0,
            rngs: (0..problem.num_shards()).map(|i| stream(cfg.seed, i as u64)).collect(),
            uses_mask: variant.uses_mask(),
        }
    }

    pub fn set_xbar(&mut self, xbar: Vec<T>) {
        self.x = xbar.iter().enumerate().map(|(j, &v)| self.problem.reg().prox_coord(self.gamma, j, v)).collect();
        self.nnz = crate::problem::support_size(&self.x);
        self.xbar = xbar;
    }

    /// Adds `α_i Δ` on `mask`; returns whether the support changed.
    pub fn apply(&mut self, i: usize, mask: &[usize], delta: &[T], k: usize) -> Result<bool> {
        let a = self.problem.alphas()[i];
        let reg = self.problem.reg();
        let mut changed = false;
        let big = T::of(DIVERGENCE_NORM);
        for (&j, &dj) in mask.iter().zip(delta) {
            self.xbar[j] += a * dj;
            let old = self.x[j];
            let new = reg.prox_coord(self.gamma, j, self.xbar[j]);
            if !new.is_finite() || new.abs() > big {
                return Err(Error::Diverged { iteration: k });
            }
            if (old == T::zero()) != (new == T::zero()) {
                changed = true;
                if new == T::zero() {
                    self.nnz -= 1;
                } else {
                    self.nnz += 1;
                }
            }
            self.x[j] = new;
        }
        Ok(changed)
    }

    pub fn check_norm(&self, k: usize) -> Result<()> {
        let n = norm_sq(&self.x);
        if !n.is_finite() || n.as_f64().sqrt() > DIVERGENCE_NORM {
            return Err(Error::Diverged { iteration: k });
        }
        Ok(())
    }

    /// Mask for the next computation of worker `i`, drawn from its own stream.
    pub fn draw(&mut self, i: usize) -> CoordinateMask {
        let d = self.x.len();
        match &self.variant {
            Variant::DavePg => CoordinateMask::full(d),
            Variant::Spy(dist) => draw_mask(dist, &mut self.rngs[i]),
            Variant::Slowdown { pi } => {
                if *pi >= T::one() {
                    return CoordinateMask::full(d);
                }
                let p = pi.as_f64();
                let rng = &mut self.rngs[i];
                let idx = (0..d).filter(|&j| self.x[j] != T::zero() || rng.random::<f64>() < p).collect();
                CoordinateMask::from_sorted(idx)
            }
        }
    }

    /// Cost of sending the current model plus `mask`.
    pub fn down_cost(&self, mask: &CoordinateMask) -> usize {
        let model = match self.down {
            DownCount::Sparse => self.nnz,
            DownCount::Dense => self.x.len(),
        };
        model + if self.uses_mask { mask.len() } else { 0 }
    }

    /// Extra cost of telling workers about a shift center that differs from the model.
    pub fn center_cost(&self) -> usize {
        match self.problem.shift() {
            Some(s) if s.center != self.x => match self.down {
                DownCount::Sparse => crate::problem::support_size(&s.center),
                DownCount::Dense => self.x.len(),
            },
            _ => 0,
        }
    }

    pub fn slowdown(&self) -> Option<T> {
        self.variant.slowdown()
    }
}

/// Dense priming point of worker `i`.
pub(crate) fn prime_point<T: Scalar>(problem: &CompositeProblem<T>, gamma: T, i: usize, init: &[T]) -> Vec<T> {
    let g = problem.grad_shard(i, init).expect("dimension validated");
    init.iter().zip(&g).map(|(&x, &gj)| x - gamma * gj).collect()
}

/// `Σ α_i x_i` accumulated in worker order.
pub(crate) fn weighted_sum<T: Scalar>(alphas: &[T], points: &[Vec<T>]) -> Vec<T> {
    let mut out = vec![T::zero(); points[0].len()];
    for (a, p) in alphas.iter().zip(points) {
        crate::linalg::axpy(*a, p, &mut out);
    }
    out
}

/// Shared bookkeeping for both drivers.
pub(crate) struct Logger<'a, T> {
    problem: &'a CompositeProblem<T>,
    opts: LogOptions,
    pub trace: RunTrace<T>,
    pub tracker: EpochTracker,
    exchanges: u64,
}

impl<'a, T: Scalar> Logger<'a, T> {
    pub fn new(problem: &'a CompositeProblem<T>, opts: &LogOptions, x0: &[T], setup_up: u64, setup_down: u64) -> Self {
        let mut trace = RunTrace {
            records: Vec::new(),
            epochs: vec![0],
            epoch_iterates: Vec::new(),
            snapshots: Vec::new(),
            objective: Vec::new(),
            support_changes: vec![0],
            initial_x: x0.to_vec(),
            final_x: Vec::new(),
            final_xbar: Vec::new(),
            worker_points: Vec::new(),
            worker_up: Vec::new(),
            setup_up,
            setup_down,
            stop: StopReason::IterBudget,
        };
        if opts.epoch_iterates {
            trace.epoch_iterates.push(x0.to_vec());
        }
        let exchanges = setup_up + setup_down;
        if opts.objective != ObjectiveLog::Off {
            trace.objective.push(ObjPoint { iter: 0, exchanges, value: base_objective(problem, x0) });
        }
        if opts.snapshot_stride.is_some() {
            trace.snapshots.push((0, x0.to_vec()));
        }
        Self { problem, opts: opts.clone(), trace, tracker: EpochTracker::new(problem.num_shards()), exchanges }
    }

    /// Logs one processed arrival; returns true at an epoch boundary.
    pub fn arrival(&mut self, rec: IterRecord, x: &[T], support_changed: bool) -> bool {
        let k = rec.k;
        self.exchanges += (rec.coords_up + rec.coords_down) as u64;
        let boundary = self.tracker.record(k, rec.worker);
        let epoch = self.tracker.epoch();
        self.trace.records.push(IterRecord { epoch, ..rec });
        let done = k + 1;
        if support_changed {
            self.trace.support_changes.push(done);
        }
        if boundary {
            self.trace.epochs.push(k);
            if self.opts.epoch_iterates {
                self.trace.epoch_iterates.push(x.to_vec());
            }
        }
        let log_obj = match self.opts.objective {
            ObjectiveLog::Off => false,
            ObjectiveLog::Epochs => boundary,
            ObjectiveLog::Stride(s) => done % s == 0,
        };
        if log_obj {
            let value = base_objective(self.problem, x);
            self.trace.objective.push(ObjPoint { iter: done, exchanges: self.exchanges, value });
        }
        if self.opts.snapshot_stride.is_some_and(|s| done % s == 0) {
            self.trace.snapshots.push((done, x.to_vec()));
        }
        boundary
    }

    pub fn finish(mut self, stop: StopReason, x: Vec<T>, xbar: Vec<T>, workers: Vec<Vec<T>>) -> RunTrace<T> {
        // make sure the last point is present in the objective log
        if self.opts.objective != ObjectiveLog::Off {
            let n = self.trace.records.len();
            if self.trace.objective.last().is_none_or(|p| p.iter != n) {
                let value = base_objective(self.problem, &x);
                self.trace.objective.push(ObjPoint { iter: n, exchanges: self.exchanges, value });
            }
        }
        self.trace.stop = stop;
        self.trace.final_x = x;
        self.trace.final_xbar = xbar;
        let mut up = vec![0u64; workers.len()];
        for r in &self.trace.records {
            up[r.worker] += r.coords_up as u64;
        }
        self.trace.worker_up = up;
        self.trace.worker_points = workers;
        self.trace
    }
}

/// Objective of the problem with its shift removed.
pub fn base_objective<T: Scalar>(problem: &CompositeProblem<T>, x: &[T]) -> T {
    let smooth: T = problem
        .shards()
        .iter()
        .zip(problem.alphas())
        .map(|(s, &a)| a * s.value(x).expect("dimension validated"))
        .sum();
    smooth + problem.reg().value(x)
}

#[cfg(debug_assertions)]
pub(crate) fn debug_check_average<T: Scalar>(alphas: &[T], workers: &[Vec<T>], xbar: &[T]) {
    let avg = weighted_sum(alphas, workers);
    let scale = T::one() + crate::linalg::max_abs(xbar);
    let tol = T::of(1e4) * T::epsilon() * scale;
    for (a, b) in avg.iter().zip(xbar) {
        debug_assert!((*a - *b).abs() <= tol, "x̄ drifted from Σα_i x_i: {a} vs {b}");
    }
}
