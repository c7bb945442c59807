//! Outer proximal-point loops around Spy: reconditioned and Catalyst-accelerated variants.
//!
//! Loop `ℓ` solves `H_ℓ(x) = F(x) + ρ/2‖x − z_ℓ‖²` inexactly with Spy, the selector putting
//! probability one on `supp(z_ℓ)` and `π_ℓ = min(c/|null(z_ℓ)|, 1)` elsewhere. The center `z_ℓ`
//! is the last outer iterate, or its extrapolation when momentum is on.

use log::debug;

use crate::engine::{
    self, DelaySchedule, DownCount, EngineConfig, EpochView, ExecMode, IterRecord, LogOptions, ObjPoint, ObjectiveLog, RunTrace,
    Start, StopReason, StopRule, Variant, WarmState,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::dist_sq;
use crate::metrics::{certify, fista, CommLedger};
use crate::problem::{support_of, support_size, CompositeProblem};
use crate::scalar::Scalar;
use crate::sparsifier::{adaptive_distribution, adaptive_level};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconditionParams<T> {
    pub c: T,
    pub pi: T,
    pub alpha: T,
    pub kappa: T,
    pub rho: T,
    pub gamma: T,
    pub delta: T,
    pub mu: T,
    pub lip: T,
    /// `κL < μ`: the problem is already better conditioned than needed and `ρ = 0`
    pub unshifted: bool,
}

/// `π = c/d`, `α = π/2`, `κ = (1−√(π−α))/(1+√(π−α))`, `ρ = (κL−μ)/(1−κ)`, `γ = 2/(μ+L+2ρ)`.
pub fn make_params<T: Scalar>(mu: T, lip: T, c: T, d: usize, delta: T) -> Result<ReconditionParams<T>> {
    if d == 0 {
        return Err(invalid("d must be positive"));
    }
    let dd = T::of_usize(d);
    if !(c > T::zero() && c <= dd) {
        return Err(invalid(format!("exploration budget c = {c} outside (0, {d}]")));
    }
    // eigenvalue estimates of a perfectly conditioned problem can cross by roundoff
    let mu = if mu > lip && mu <= lip * (T::one() + T::of(1e-9)) { lip } else { mu };
    if !(lip > T::zero()) || !(mu >= T::zero() && mu <= lip) {
        return Err(invalid(format!("need 0 ≤ μ ≤ L with L > 0, got μ = {mu}, L = {lip}")));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(invalid(format!("δ = {delta} outside (0, 1)")));
    }
    let pi = c / dd;
    let alpha = c / (T::of(2.0) * dd);
    let s = (pi - alpha).sqrt();
    let kappa = (T::one() - s) / (T::one() + s);
    let (rho, unshifted) = if kappa * lip < mu { (T::zero(), true) } else { ((kappa * lip - mu) / (T::one() - kappa), false) };
    let gamma = T::of(2.0) / (mu + lip + T::of(2.0) * rho);
    Ok(ReconditionParams { c, pi, alpha, kappa, rho, gamma, delta, mu, lip, unshifted })
}

impl<T: Scalar> ReconditionParams<T> {
    pub fn for_problem(problem: &CompositeProblem<T>, c: T, delta: T) -> Result<Self> {
        let base = problem.unshifted();
        make_params(base.mu(), base.lip(), c, base.dim(), delta)
    }

    /// Per-epoch contraction `1 − α + π − π_ℓ` of the inner solve.
    pub fn inner_rate(&self, pi_l: T) -> T {
        T::one() - self.alpha + self.pi - pi_l
    }

    /// Checks `π_ℓ ≥ (1 − γ(μ+ρ))²`, the inner contraction condition.
    pub fn check_level(&self, pi_l: T) -> Result<()> {
        let q = T::one() - self.gamma * (self.mu + self.rho);
        let need = q * q;
        if pi_l < need * (T::one() - T::of(1e-12)) {
            return Err(invalid(format!("π_ℓ = {pi_l} below (1 − γ(μ+ρ))² = {need}")));
        }
        Ok(())
    }
}

/// Inner epochs `M_ℓ` guaranteeing the relative accuracy needed at loop `ℓ` (1-based).
pub fn epoch_budget<T: Scalar>(l: usize, params: &ReconditionParams<T>, pi_l: T) -> Result<usize> {
    if l == 0 {
        return Err(invalid("loops are numbered from 1"));
    }
    if !(params.rho > T::zero()) {
        return Err(Error::Unsupported("epoch budget needs ρ > 0".into()));
    }
    let rate = params.inner_rate(pi_l).as_f64();
    if !(rate > 0.0 && rate < 1.0) {
        return Err(invalid(format!("inner rate {rate} outside (0, 1)")));
    }
    let (mu, rho, delta) = (params.mu.as_f64(), params.rho.as_f64(), params.delta.as_f64());
    let num = (1.0 + delta) * (l as f64).ln() + ((2.0 * mu + rho) / ((1.0 - delta) * rho)).ln();
    let m = (num / (1.0 / rate).ln()).ceil();
    Ok(if m.is_finite() && m >= 1.0 { m as usize } else { 1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxPoint<T> {
    pub x: Vec<T>,
    /// `H(x)` including the shift
    pub value: T,
}

const ORACLE_ROUNDS: usize = 12;

/// Minimizer of `F(x) + ρ/2‖x − center‖²`, certified to distance `tol`.
pub fn prox_oracle<T: Scalar>(problem: &CompositeProblem<T>, rho: T, center: &[T], tol: f64) -> Result<ProxPoint<T>> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let h = problem.unshifted().shifted(rho, center.to_vec())?;
    if !(h.mu() > T::zero()) {
        return Err(Error::Refused("proximal subproblem is not strongly convex".into()));
    }
    let gamma = T::one() / h.lip();
    let mut resid = 0.5 * tol * (h.mu() / h.lip()).as_f64();
    let mut x = center.to_vec();
    let mut best = f64::INFINITY;
    for _ in 0..ORACLE_ROUNDS {
        x = match fista(&h, &x, resid, 200_000) {
            Ok((x, _)) => x,
            Err(Error::BudgetExhausted { .. }) => x,
            Err(e) => return Err(e),
        };
        if let Some(b) = certify(&h, gamma, &x)? {
            best = best.min(b);
            if b <= tol {
                let value = h.eval_objective(&x)?;
                return Ok(ProxPoint { x, value });
            }
        }
        resid *= 0.01;
    }
    Err(Error::BudgetExhausted { achieved: best })
}

/// When an inner solve stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// the precomputed epoch budget `M_ℓ`
    C1,
    /// `‖x − x̂‖² ≤ (1−δ)ρ/((2μ+ρ)ℓ^{1+δ}) ‖z_ℓ − x̂‖²`
    C2,
    /// `‖x − x̂‖² ≤ ρ/(4(2μ+ρ)ℓ^{2+2δ}) ‖x − z_ℓ‖²`
    C3,
    /// a fixed number of epochs per loop
    C1Simple { epochs: usize },
    /// `H(x) − H⋆ ≤ ε_ℓ` with `ε_ℓ` decaying geometrically (`μ > 0`) or as `ℓ^{-(4+δ)}`
    C2Prime,
    /// `H(x) − H⋆ ≤ c_ℓ ρ/2 ‖x − z_ℓ‖²`
    C3Prime,
}

impl Criterion {
    fn needs_oracle(self) -> bool {
        matches!(self, Criterion::C2 | Criterion::C3 | Criterion::C2Prime | Criterion::C3Prime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Momentum {
    #[default]
    None,
    /// `β = (1−√q)/(1+√q)` with `q = μ/(μ+ρ)`, or `(ℓ−1)/(ℓ+2)` when `μ = 0`
    Catalyst,
    Fixed(f64),
}

/// How inner runs start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerStart {
    /// workers keep their points across loops and only receive the new center
    #[default]
    Continue,
    /// one dense priming round from the center at every loop
    Prime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterOptions<T> {
    pub criterion: Criterion,
    pub momentum: Momentum,
    /// stop once `F(x_ℓ) − F⋆ ≤ target` (needs `f_star`)
    pub target: f64,
    pub f_star: Option<T>,
    pub outer_budget: usize,
    pub inner_start: InnerStart,
    pub oracle_tol: f64,
    /// safety cap for oracle-based criteria
    pub max_inner_epochs: usize,
    pub schedule: DelaySchedule,
    pub seed: u64,
    pub mode: ExecMode,
    pub down: DownCount,
    /// override of the inner stepsize
    pub gamma: Option<T>,
    /// keep every inner trace (with epoch iterates)
    pub keep_inner: bool,
}

impl<T: Scalar> Default for OuterOptions<T> {
    fn default() -> Self {
        Self {
            criterion: Criterion::C1,
            momentum: Momentum::None,
            target: 1e-10,
            f_star: None,
            outer_budget: 500,
            inner_start: InnerStart::Continue,
            oracle_tol: 1e-10,
            max_inner_epochs: 100_000,
            schedule: DelaySchedule::RoundRobin,
            seed: 0,
            mode: ExecMode::Sim,
            down: DownCount::Sparse,
            gamma: None,
            keep_inner: false,
        }
    }
}

/// One outer loop: `π_ℓ`, `supp` and `F − F⋆` describe the center `z_ℓ`; the counters are
/// cumulative through the end of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    pub l: usize,
    pub inner_epochs: usize,
    pub inner_iters: usize,
    pub pi_l: f64,
    pub budget: Option<usize>,
    pub support_size: usize,
    pub objective: f64,
    pub subopt: Option<f64>,
    pub beta: f64,
    pub cum_up: u64,
    pub cum_down: u64,
    pub cum_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterStop {
    Target,
    Budget,
    /// the center is a fixed point of the proximal-gradient map
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterTrace<T> {
    pub params: ReconditionParams<T>,
    pub loops: Vec<LoopRecord>,
    /// objective at every inner epoch, on cumulative iteration/exchange axes
    pub objective: Vec<ObjPoint<T>>,
    /// cumulative arrival counts after which `supp(x)` changed; 0 is the initial support
    pub support_changes: Vec<usize>,
    /// `x_1, x_2, …` (the outer iterates, not the extrapolated centers)
    pub iterates: Vec<Vec<T>>,
    /// inner minimizers when an oracle was consulted
    pub prox_points: Vec<Option<Vec<T>>>,
    /// cumulative iteration offset at the start of every loop
    pub offsets: Vec<usize>,
    /// inner iteration records with `k` and `epoch` made cumulative
    pub records: Vec<IterRecord>,
    /// `x` at the start of the first inner run, after its setup
    pub initial_x: Vec<T>,
    pub inner: Vec<RunTrace<T>>,
    pub ledger: CommLedger,
    pub final_x: Vec<T>,
    pub warm: Option<WarmState<T>>,
    pub stop: OuterStop,
}

impl<T: Scalar> OuterTrace<T> {
    pub fn iterations(&self) -> usize {
        self.ledger.iterations as usize
    }

    pub fn total_exchanges(&self) -> u64 {
        self.ledger.total()
    }
}

fn loop_seed(seed: u64, l: usize) -> u64 {
    let mut z = seed ^ (l as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn loop_schedule(s: &DelaySchedule, l: usize) -> DelaySchedule {
    match s {
        DelaySchedule::RandomUniform { seed } => DelaySchedule::RandomUniform { seed: loop_seed(*seed, l) },
        DelaySchedule::Heterogeneous { speeds, seed } => {
            DelaySchedule::Heterogeneous { speeds: speeds.clone(), seed: loop_seed(*seed, l) }
        }
        other => other.clone(),
    }
}

fn same_support<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.iter().zip(b).all(|(x, y)| (*x == T::zero()) == (*y == T::zero()))
}

fn is_fixed_point<T: Scalar>(problem: &CompositeProblem<T>, x: &[T]) -> Result<bool> {
    let tx = problem.prox_grad_step(T::one() / problem.lip(), x)?;
    let scale = 1.0 + crate::linalg::norm_sq(x).as_f64().sqrt();
    Ok(dist_sq(x, &tx).as_f64().sqrt() <= 1e-15 * scale)
}

/// Generic outer driver behind [`run_reconditioned_spy`] and [`run_catalyst_spy`].
pub fn run_outer<T: Scalar>(
    problem: &CompositeProblem<T>,
    params: &ReconditionParams<T>,
    opts: &OuterOptions<T>,
    start: Start<T>,
) -> Result<OuterTrace<T>> {
    let base = problem.unshifted();
    let d = base.dim();
    if opts.outer_budget == 0 {
        return Err(invalid("outer budget must be positive"));
    }
    if opts.criterion.needs_oracle() && !(params.rho > T::zero() || base.mu() > T::zero()) {
        return Err(Error::Refused("inexactness criteria need a strongly convex subproblem".into()));
    }
    if matches!(opts.criterion, Criterion::C1Simple { epochs: 0 }) {
        return Err(invalid("C1-simple needs at least one epoch"));
    }
    if opts.criterion == Criterion::C2Prime && opts.f_star.is_none() {
        return Err(invalid("this criterion needs F⋆"));
    }
    let gamma = opts.gamma.unwrap_or(params.gamma);
    let (mu, rho, delta) = (params.mu.as_f64(), params.rho.as_f64(), params.delta.as_f64());

    let (mut x, mut warm) = match start {
        Start::Prime(x0) => {
            if x0.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: x0.len() });
            }
            (x0, None)
        }
        Start::Continue(w) => {
            let x0 = base.prox_reg(gamma, &w.xbar)?;
            (x0, Some(w))
        }
    };
    let mut center = x.clone();
    let f_y1 = base.eval_objective(&x)?.as_f64();

    let mut out = OuterTrace {
        params: *params,
        loops: Vec::new(),
        objective: Vec::new(),
        support_changes: vec![0],
        iterates: vec![x.clone()],
        prox_points: Vec::new(),
        offsets: Vec::new(),
        records: Vec::new(),
        initial_x: x.clone(),
        inner: Vec::new(),
        ledger: CommLedger::default(),
        final_x: Vec::new(),
        warm: None,
        stop: OuterStop::Budget,
    };
    let mut last_x = x.clone();

    for l in 1..=opts.outer_budget {
        let fx = base.eval_objective(&x)?.as_f64();
        let subopt = opts.f_star.map(|f| fx - f.as_f64());
        if subopt.is_some_and(|s| s <= opts.target) {
            out.stop = OuterStop::Target;
            break;
        }
        if is_fixed_point(&base, &center)? && is_fixed_point(&base, &x)? {
            out.stop = OuterStop::FixedPoint;
            break;
        }
        let pi_l = adaptive_level(&center, params.c);
        params.check_level(pi_l)?;
        let dist = adaptive_distribution(&center, params.c)?;
        let h = base.shifted(params.rho, center.clone())?;
        let xhat = if opts.criterion.needs_oracle() { Some(prox_oracle(&base, params.rho, &center, opts.oracle_tol)?) } else { None };
        let budget = match opts.criterion {
            Criterion::C1 => Some(epoch_budget(l, params, pi_l)?),
            Criterion::C1Simple { epochs } => Some(epochs),
            _ => None,
        };

        let lf = l as f64;
        let center_ref = &center;
        let hh = &h;
        let stop = match (opts.criterion, &xhat) {
            (Criterion::C1 | Criterion::C1Simple { .. }, _) => StopRule::epochs(budget.expect("set above")),
            (Criterion::C2, Some(p)) => {
                let thr = (1.0 - delta) * rho / ((2.0 * mu + rho) * lf.powf(1.0 + delta)) * sq(center_ref, &p.x);
                let px = p.x.clone();
                StopRule::epochs(opts.max_inner_epochs).with_check(move |v: EpochView<'_, T>| sq(v.x, &px) <= thr)
            }
            (Criterion::C3, Some(p)) => {
                let coef = rho / (4.0 * (2.0 * mu + rho) * lf.powf(2.0 + 2.0 * delta));
                let px = p.x.clone();
                StopRule::epochs(opts.max_inner_epochs)
                    .with_check(move |v: EpochView<'_, T>| v.epoch > 0 && sq(v.x, &px) <= coef * sq(v.x, center_ref))
            }
            (Criterion::C2Prime, Some(p)) => {
                let gap0 = 2.0 * (f_y1 - opts.f_star.expect("checked").as_f64()) / 9.0;
                let eps = if mu > 0.0 {
                    (1.0 - (mu / (4.0 * (mu + rho))).sqrt()).powf(lf) * gap0
                } else {
                    gap0 / lf.powf(4.0 + delta)
                };
                let hstar = p.value.as_f64();
                StopRule::epochs(opts.max_inner_epochs).with_check(move |v: EpochView<'_, T>| {
                    hh.eval_objective(v.x).map(|hv| hv.as_f64() - hstar <= eps).unwrap_or(false)
                })
            }
            (Criterion::C3Prime, Some(p)) => {
                let coef = if mu > 0.0 { mu.sqrt() / (2.0 * (mu + rho).sqrt() - mu.sqrt()) } else { 1.0 / (lf * lf) };
                let hstar = p.value.as_f64();
                StopRule::epochs(opts.max_inner_epochs).with_check(move |v: EpochView<'_, T>| {
                    v.epoch > 0
                        && hh
                            .eval_objective(v.x)
                            .map(|hv| hv.as_f64() - hstar <= coef * rho / 2.0 * sq(v.x, center_ref))
                            .unwrap_or(false)
                })
            }
            _ => unreachable!("oracle computed for oracle criteria"),
        };

        let cfg = EngineConfig {
            gamma,
            schedule: loop_schedule(&opts.schedule, l),
            seed: loop_seed(opts.seed, l),
            down: opts.down,
            mode: opts.mode,
            log: LogOptions { objective: ObjectiveLog::Epochs, epoch_iterates: opts.keep_inner, snapshot_stride: None },
        };
        let inner_start = match (opts.inner_start, warm.take()) {
            (InnerStart::Continue, Some(w)) => Start::Continue(w),
            _ => Start::Prime(center.clone()),
        };
        let trace = engine::run(&h, &Variant::Spy(dist), &cfg, inner_start, stop)?;
        if opts.criterion.needs_oracle() && trace.stop != StopReason::Criterion {
            return Err(Error::BudgetExhausted { achieved: f64::NAN });
        }

        if l == 1 {
            out.initial_x = trace.initial_x.clone();
        }
        let offset = out.ledger.iterations as usize;
        let exch = out.ledger.total();
        out.offsets.push(offset);
        let epoch_offset = out.ledger.epochs as usize;
        out.records.extend(trace.records.iter().map(|r| IterRecord { k: r.k + offset, epoch: r.epoch + epoch_offset, ..*r }));
        out.objective
            .extend(trace.objective.iter().map(|p| ObjPoint { iter: p.iter + offset, exchanges: p.exchanges + exch, value: p.value }));
        if !same_support(&trace.initial_x, &last_x) {
            out.support_changes.push(offset);
        }
        out.support_changes.extend(trace.support_changes.iter().skip(1).map(|k| k + offset));
        out.ledger.add(CommLedger::from_trace(&trace));

        let next = trace.final_x.clone();
        let beta = match opts.momentum {
            Momentum::None => 0.0,
            Momentum::Fixed(b) => b,
            Momentum::Catalyst if mu > 0.0 => {
                let q = (mu / (mu + rho)).sqrt();
                (1.0 - q) / (1.0 + q)
            }
            Momentum::Catalyst => (lf - 1.0) / (lf + 2.0),
        };
        debug!("loop {l}: π_ℓ = {}, {} epochs, F = {fx}", pi_l.as_f64(), trace.num_epochs());
        out.loops.push(LoopRecord {
            l,
            inner_epochs: trace.num_epochs(),
            inner_iters: trace.iterations(),
            pi_l: pi_l.as_f64(),
            budget,
            support_size: support_size(&center),
            objective: fx,
            subopt,
            beta,
            cum_up: out.ledger.up,
            cum_down: out.ledger.down,
            cum_iters: out.ledger.iterations as usize,
        });
        out.prox_points.push(xhat.map(|p| p.x));

        let b = T::of(beta);
        center = next.iter().zip(&x).map(|(&n, &p)| n + b * (n - p)).collect();
        last_x = next.clone();
        x = next;
        out.iterates.push(x.clone());
        warm = Some(WarmState::from_trace(&trace));
        if opts.keep_inner {
            out.inner.push(trace);
        }
    }
    out.final_x = x;
    out.warm = warm;
    Ok(out)
}


fn sq<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    dist_sq(a, b).as_f64()
}

pub fn run_reconditioned_spy<T: Scalar>(
    problem: &CompositeProblem<T>,
    params: &ReconditionParams<T>,
    opts: &OuterOptions<T>,
    init: &[T],
) -> Result<OuterTrace<T>> {
    let opts = OuterOptions { momentum: Momentum::None, ..opts.clone() };
    run_outer(problem, params, &opts, Start::Prime(init.to_vec()))
}

pub fn run_catalyst_spy<T: Scalar>(
    problem: &CompositeProblem<T>,
    params: &ReconditionParams<T>,
    opts: &OuterOptions<T>,
    init: &[T],
) -> Result<OuterTrace<T>> {
    let mut opts = opts.clone();
    if opts.momentum == Momentum::None {
        opts.momentum = Momentum::Catalyst;
    }
    run_outer(problem, params, &opts, Start::Prime(init.to_vec()))
}

/// Support of the last outer iterate.
pub fn final_support<T: Scalar>(t: &OuterTrace<T>) -> Vec<usize> {
    support_of(&t.final_x, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_problem, generate_conditioned, generate_lasso, shard_even, LossSpec};
    use crate::linalg::Design;
    use crate::linalg::DenseMatrix;
    use crate::metrics::reference_solution;
    use crate::problem::{LossShard, Regularizer};

    fn half_norm(d: usize) -> CompositeProblem<f64> {
        // ‖Ax‖²/n with A = √(n/2)·I gives ½‖x‖²
        let s = (d as f64 / 2.0).sqrt();
        let mut a = DenseMatrix::zeros(d, d);
        for j in 0..d {
            a.set(j, j, s);
        }
        let shard = LossShard::least_squares(Design::Dense(a), vec![0.0; d]).unwrap();
        CompositeProblem::new(vec![shard], Regularizer::None).unwrap()
    }

    #[test]
    fn params_example() {
        let p = make_params(0.0f64, 1.0, 5.0, 10, 0.5).unwrap();
        assert!((p.pi - 0.5).abs() < 1e-15);
        assert!((p.alpha - 0.25).abs() < 1e-15);
        assert!((p.kappa - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.rho - 0.5).abs() < 1e-12);
        assert!((p.gamma - 1.0).abs() < 1e-12);
        assert!(!p.unshifted);
    }

    #[test]
    fn well_conditioned_falls_back_to_no_shift() {
        let p = make_params(0.9f64, 1.0, 5.0, 10, 0.5).unwrap();
        assert!(p.unshifted);
        assert_eq!(p.rho, 0.0);
        assert!((p.gamma - 2.0 / 1.9).abs() < 1e-12);
    }

    #[test]
    fn params_reject_bad_input() {
        assert!(make_params(0.0, 1.0, 0.0, 10, 0.5).is_err());
        assert!(make_params(0.0, 1.0, 11.0, 10, 0.5).is_err());
        assert!(make_params(2.0, 1.0, 1.0, 10, 0.5).is_err());
        assert!(make_params(0.0, 1.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn budget_grows_logarithmically() {
        let p = make_params(0.1f64, 1.0, 2.0, 100, 0.5).unwrap();
        let pi_l = 0.03;
        let b: Vec<usize> = [1, 2, 4, 8, 16].iter().map(|&l| epoch_budget(l, &p, pi_l).unwrap()).collect();
        assert!(b.windows(2).all(|w| w[1] >= w[0]));
        let rate = 1.0 - p.alpha + p.pi - pi_l;
        let step = 1.5 * 2f64.ln() / (1.0 / rate).ln();
        for w in b.windows(2) {
            assert!(((w[1] - w[0]) as f64 - step).abs() <= 1.0);
        }
        assert!(epoch_budget(0, &p, pi_l).is_err());
    }

    #[test]
    fn oracle_on_half_norm() {
        let prob = half_norm(4);
        let c = vec![1.0, -2.0, 0.5, 3.0];
        let p = prox_oracle(&prob, 1.0, &c, 1e-10).unwrap();
        for (a, b) in p.x.iter().zip(&c) {
            assert!((a - b / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_with_negligible_smooth_part_matches_soft_threshold() {
        // f = ε‖x‖²/2 is negligible next to the shift
        let d = 5;
        let eps = 1e-9;
        let s = (d as f64 * eps / 2.0).sqrt();
        let mut a = DenseMatrix::zeros(d, d);
        for j in 0..d {
            a.set(j, j, s);
        }
        let shard = LossShard::least_squares(Design::Dense(a), vec![0.0; d]).unwrap();
        let prob = CompositeProblem::new(vec![shard], Regularizer::l1(0.3).unwrap()).unwrap();
        let c = vec![1.0, -0.2, 0.5, -3.0, 0.1];
        let rho = 2.0;
        let p = prox_oracle(&prob, rho, &c, 1e-12).unwrap();
        let expect = prob.prox_reg(1.0 / rho, &c).unwrap();
        for (a, b) in p.x.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn fixed_point_stops_immediately() {
        let prob = half_norm(3).with_reg(Regularizer::l1(0.1).unwrap());
        let p = ReconditionParams::for_problem(&prob, 1.0, 0.5).unwrap();
        let t = run_reconditioned_spy(&prob, &p, &OuterOptions::default(), &[0.0; 3]).unwrap();
        assert_eq!(t.stop, OuterStop::FixedPoint);
        assert!(t.loops.is_empty());
        assert_eq!(t.total_exchanges(), 0);
    }

    fn small_lasso() -> (CompositeProblem<f64>, f64) {
        let data = generate_lasso::<f64>(40, 60, 0.1, 0.01, 3).unwrap();
        let plan = shard_even(60, 3, 1).unwrap();
        let prob = build_problem(&data.0, &plan, LossSpec::LeastSquares, Regularizer::l1(0.05).unwrap()).unwrap();
        let r = reference_solution(&prob, 1e-11).unwrap();
        (prob, r.f)
    }

    #[test]
    fn reconditioned_criteria_reach_target() {
        let (prob, f_star) = small_lasso();
        let p = ReconditionParams::for_problem(&prob, 4.0, 0.5).unwrap();
        for criterion in [Criterion::C1, Criterion::C2, Criterion::C3, Criterion::C1Simple { epochs: 1 }] {
            let opts = OuterOptions { criterion, f_star: Some(f_star), target: 1e-8, outer_budget: 5000, ..Default::default() };
            let t = run_reconditioned_spy(&prob, &p, &opts, &[0.0; 40]).unwrap();
            assert_eq!(t.stop, OuterStop::Target, "{criterion:?}");
            assert!(t.objective.windows(2).all(|w| w[1].exchanges >= w[0].exchanges && w[1].iter >= w[0].iter));
            let last = t.loops.last().unwrap();
            assert_eq!(last.cum_up + last.cum_down, t.total_exchanges());
        }
    }

    #[test]
    fn catalyst_with_zero_momentum_is_reconditioned() {
        let (prob, f_star) = small_lasso();
        let p = ReconditionParams::for_problem(&prob, 4.0, 0.5).unwrap();
        let opts = OuterOptions { f_star: Some(f_star), outer_budget: 15, seed: 9, ..Default::default() };
        let a = run_reconditioned_spy(&prob, &p, &opts, &[0.0; 40]).unwrap();
        let b = run_catalyst_spy(&prob, &p, &OuterOptions { momentum: Momentum::Fixed(0.0), ..opts }, &[0.0; 40]).unwrap();
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.loops, b.loops);
    }

    #[test]
    fn catalyst_criteria_reach_target() {
        let (prob, f_star) = small_lasso();
        let p = ReconditionParams::for_problem(&prob, 4.0, 0.5).unwrap();
        for criterion in [Criterion::C2Prime, Criterion::C3Prime] {
            let opts = OuterOptions { criterion, f_star: Some(f_star), target: 1e-8, outer_budget: 3000, ..Default::default() };
            let t = run_catalyst_spy(&prob, &p, &opts, &[0.0; 40]).unwrap();
            assert_eq!(t.stop, OuterStop::Target, "{criterion:?}");
        }
    }

    #[test]
    fn strongly_convex_c1_contracts() {
        let (data, plan, _) = generate_conditioned::<f64>(30, 40, 3, 0.2, 1.0, 0.15, 0.0, 5).unwrap();
        let prob = build_problem(&data, &plan, LossSpec::LeastSquares, Regularizer::l1(0.01).unwrap()).unwrap();
        let r = reference_solution(&prob, 1e-11).unwrap();
        let p = ReconditionParams::for_problem(&prob, 3.0, 0.5).unwrap();
        let opts = OuterOptions { outer_budget: 8, inner_start: InnerStart::Prime, ..Default::default() };
        let t = run_reconditioned_spy(&prob, &p, &opts, &[0.0; 30]).unwrap();
        let errs: Vec<f64> = t.iterates.iter().map(|x| sq(x, &r.x)).collect();
        assert!(errs.last().unwrap() < &(errs[0] * 1e-2));
    }
}
