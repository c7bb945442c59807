//! Reference solutions, identification, communication accounting and complexity measures.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::engine::{self, EngineConfig, ObjPoint, RunTrace, StopRule};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dist_sq, dot, max_abs, norm_sq, symmetric_eigenvalues};
use crate::problem::{support_of, CompositeProblem, LossKind, Regularizer};
use crate::scalar::Scalar;

/// Environment variable naming the reference-solution cache directory.
pub const CACHE_ENV: &str = "SPY_CACHE_DIR";

pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// SHA-256 over data, weights, regularizer and shift.
pub fn fingerprint<T: Scalar>(problem: &CompositeProblem<T>) -> [u8; 32] {
    let mut h = Sha256::new();
    let mut feed = |b: &[u8]| h.update(b);
    feed(&(problem.num_shards() as u64).to_le_bytes());
    for (s, a) in problem.shards().iter().zip(problem.alphas()) {
        match s.kind() {
            LossKind::LeastSquares => feed(b"ls"),
            LossKind::Logistic { l2 } => {
                feed(b"logistic");
                feed(&l2.as_f64().to_le_bytes());
            }
        }
        feed(&a.as_f64().to_le_bytes());
        s.design().hash_into(&mut feed);
        for t in s.targets() {
            feed(&t.as_f64().to_le_bytes());
        }
    }
    match problem.reg() {
        Regularizer::None => feed(b"none"),
        Regularizer::L1 { lambda } => {
            feed(b"l1");
            feed(&lambda.as_f64().to_le_bytes());
        }
        Regularizer::WeightedL1 { lambda, weights } => {
            feed(b"wl1");
            feed(&lambda.as_f64().to_le_bytes());
            for w in weights {
                feed(&w.as_f64().to_le_bytes());
            }
        }
    }
    if let Some(s) = problem.shift() {
        feed(b"shift");
        feed(&s.rho.as_f64().to_le_bytes());
        for c in &s.center {
            feed(&c.as_f64().to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn fingerprint_hex<T: Scalar>(problem: &CompositeProblem<T>) -> String {
    fingerprint(problem).iter().map(|b| format!("{b:02x}")).collect()
}

/// Strong convexity of the smooth part restricted to coordinates `support`, least-squares only.
fn restricted_mu<T: Scalar>(problem: &CompositeProblem<T>, support: &[usize]) -> Option<f64> {
    let k = support.len();
    let base = problem.shift().map_or(0.0, |s| s.rho.as_f64());
    if k == 0 {
        return Some(f64::INFINITY);
    }
    let mut gram = vec![0.0; k * k];
    for (s, &a) in problem.shards().iter().zip(problem.alphas()) {
        if s.kind() != LossKind::LeastSquares {
            return None;
        }
        let sub = s.design().select_cols_dense(support);
        let w = 2.0 * a.as_f64() / s.rows() as f64;
        for p in 0..k {
            for q in p..k {
                let v = w * dot(sub.col(p), sub.col(q)).as_f64();
                gram[p * k + q] += v;
                if p != q {
                    gram[q * k + p] += v;
                }
            }
        }
    }
    Some(symmetric_eigenvalues(gram, k)[0].max(0.0) + base)
}

/// Upper bound on `‖x − x⋆‖` from one synchronous proximal-gradient step at stepsize `gamma`,
/// or `None` when no bound can be certified at `x`.
///
/// With `μ > 0` this is `‖x − T(x)‖/(γμ)`. Without strong convexity the same bound is used with
/// the modulus restricted to `supp(T(x))`, and accepted only if the optimality margin on the
/// remaining coordinates exceeds what a point within the bound could close.
pub fn certify<T: Scalar>(problem: &CompositeProblem<T>, gamma: T, x: &[T]) -> Result<Option<f64>> {
    let tx = problem.prox_grad_step(gamma, x)?;
    let step = dist_sq(x, &tx).as_f64().sqrt();
    let g = gamma.as_f64();
    let mu = problem.mu().as_f64();
    if mu > 0.0 {
        return Ok(Some(step / (g * mu)));
    }
    if !problem.reg().is_l1_type() {
        return Ok(None);
    }
    let support = support_of(&tx, T::zero());
    let Some(mu_s) = restricted_mu(problem, &support) else { return Ok(None) };
    if !(mu_s > 0.0) {
        return Ok(None);
    }
    let est = step / (g * mu_s);
    let grad = problem.smooth_grad(&tx)?;
    let margin = (0..tx.len())
        .filter(|&j| tx[j] == T::zero())
        .map(|j| problem.reg().level(j).as_f64() - grad[j].as_f64().abs())
        .fold(f64::INFINITY, f64::min);
    let lip = problem.lip().as_f64();
    if margin > 2.0 * lip * (est + step) {
        Ok(Some(est))
    } else {
        Ok(None)
    }
}

fn check_referable<T: Scalar>(problem: &CompositeProblem<T>) -> Result<()> {
    if problem.mu() > T::zero() {
        return Ok(());
    }
    let ls = problem.shards().iter().all(|s| s.kind() == LossKind::LeastSquares);
    if ls && problem.reg().is_l1_type() {
        return Ok(());
    }
    Err(Error::Refused(
        "smooth part is not strongly convex and no restricted certificate applies \
         (needs least-squares shards with an ℓ1 penalty); uniqueness of the minimizer cannot be checked"
            .into(),
    ))
}

/// Accelerated synchronous proximal gradient with adaptive restart; returns the last
/// proximal-gradient point and the number of iterations. Stops once `‖x − T(x)‖ ≤ tol`.
pub fn fista<T: Scalar>(problem: &CompositeProblem<T>, init: &[T], tol: f64, max_iter: usize) -> Result<(Vec<T>, usize)> {
    let gamma = T::one() / problem.lip();
    let mut x = problem.prox_grad_step(gamma, init)?;
    let mut y = x.clone();
    let mut t = T::one();
    for it in 1..=max_iter {
        let next = problem.prox_grad_step(gamma, &y)?;
        let resid = dist_sq(&next, &y).as_f64().sqrt();
        if resid <= tol {
            return Ok((next, it));
        }
        if !resid.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        let t_next = (T::one() + (T::one() + T::of(4.0) * t * t).sqrt()) / T::of(2.0);
        // restart momentum when it points against the last step
        let align: T = y.iter().zip(&next).zip(&x).map(|((&yj, &nj), &xj)| (yj - nj) * (nj - xj)).sum();
        let beta = if align > T::zero() {
            t = T::one();
            T::zero()
        } else {
            let b = (t - T::one()) / t_next;
            t = t_next;
            b
        };
        for j in 0..y.len() {
            y[j] = next[j] + beta * (next[j] - x[j]);
        }
        x = next;
    }
    Err(Error::BudgetExhausted { achieved: dist_sq(&x, &problem.prox_grad_step(gamma, &x)?).as_f64().sqrt() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution<T> {
    pub x: Vec<T>,
    pub f: T,
    pub support: Vec<usize>,
    pub tol: f64,
    pub fingerprint: [u8; 32],
}

impl<T: Scalar> ReferenceSolution<T> {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn subopt(&self, value: T) -> f64 {
        (value - self.f).as_f64()
    }
}

const MAX_REFERENCE_EPOCHS: usize = 200_000;

/// High-accuracy minimizer: a warm start from [`fista`], then DAve-PG under round-robin until
/// [`certify`] bounds the distance to the minimizer by `tol` at an epoch boundary.
pub fn reference_solution<T: Scalar>(problem: &CompositeProblem<T>, tol: f64) -> Result<ReferenceSolution<T>> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    check_referable(problem)?;
    let d = problem.dim();
    let warm = match fista(problem, &vec![T::zero(); d], tol * 1e-3, 100_000) {
        Ok((x, _)) => x,
        Err(Error::BudgetExhausted { .. }) => vec![T::zero(); d],
        Err(e) => return Err(e),
    };
    let gamma = problem.max_stepsize();
    let cert_gamma = T::one() / problem.lip();
    let mut best = f64::INFINITY;
    let mut every = 1usize;
    let stop = StopRule::epochs(MAX_REFERENCE_EPOCHS).with_check(|v: engine::EpochView<'_, T>| {
        if v.epoch % every != 0 {
            return false;
        }
        match certify(problem, cert_gamma, v.x) {
            Ok(Some(b)) => {
                best = best.min(b);
                b <= tol
            }
            _ => {
                // an uncertifiable point: look less often to keep the cost bounded
                every = (every * 2).min(64);
                false
            }
        }
    });
    let trace = engine::run_davepg(problem, &EngineConfig::new(gamma), &warm, stop)?;
    if trace.stop != engine::StopReason::Criterion {
        return Err(Error::BudgetExhausted { achieved: best });
    }
    let x = trace.final_x;
    Ok(ReferenceSolution {
        f: problem.eval_objective(&x)?,
        support: support_of(&x, T::zero()),
        x,
        tol,
        fingerprint: fingerprint(problem),
    })
}

const MAGIC: &[u8; 8] = b"SPYREF\0\0";
const VERSION: u32 = 1;

fn cache_path(dir: &Path, fp: &[u8; 32]) -> PathBuf {
    let hex: String = fp.iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{hex}.ref"))
}

pub fn save_reference<T: Scalar>(r: &ReferenceSolution<T>, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, &r.fingerprint);
    let mut buf = Vec::with_capacity(64 + 8 * r.x.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&r.fingerprint);
    buf.extend_from_slice(&r.tol.to_le_bytes());
    buf.extend_from_slice(&(r.x.len() as u64).to_le_bytes());
    buf.extend_from_slice(&r.f.as_f64().to_le_bytes());
    for v in &r.x {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Cached reference for `problem`, if present, current and at least as accurate as `tol`.
pub fn load_reference<T: Scalar>(problem: &CompositeProblem<T>, tol: f64, dir: &Path) -> Result<Option<ReferenceSolution<T>>> {
    let fp = fingerprint(problem);
    let path = cache_path(dir, &fp);
    let mut bytes = Vec::new();
    match fs::File::open(&path) {
        Ok(mut f) => f.read_to_end(&mut bytes)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let bad = || Error::Parse { line: 0, message: format!("corrupt reference cache {}", path.display()) };
    let take = |bytes: &[u8], at: usize, n: usize| bytes.get(at..at + n).map(<[u8]>::to_vec);
    let head = take(&bytes, 0, 8).ok_or_else(bad)?;
    if head != MAGIC {
        return Err(bad());
    }
    let version = u32::from_le_bytes(take(&bytes, 8, 4).ok_or_else(bad)?.try_into().unwrap());
    if version != VERSION {
        return Ok(None);
    }
    if take(&bytes, 12, 32).ok_or_else(bad)? != fp {
        return Ok(None);
    }
    let f64_at = |at: usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(&bytes, at, 8).ok_or_else(bad)?.try_into().unwrap()))
    };
    let stored_tol = f64_at(44)?;
    let d = u64::from_le_bytes(take(&bytes, 52, 8).ok_or_else(bad)?.try_into().unwrap()) as usize;
    if d != problem.dim() || bytes.len() != 68 + 8 * d {
        return Err(bad());
    }
    if stored_tol > tol {
        return Ok(None);
    }
    let f = f64_at(60)?;
    let x: Vec<T> = (0..d).map(|j| f64_at(68 + 8 * j).map(T::of)).collect::<Result<_>>()?;
    Ok(Some(ReferenceSolution { support: support_of(&x, T::zero()), x, f: T::of(f), tol: stored_tol, fingerprint: fp }))
}

/// [`reference_solution`] through the on-disk cache in `dir` (or [`CACHE_ENV`] when `None`).
pub fn reference_solution_cached<T: Scalar>(
    problem: &CompositeProblem<T>,
    tol: f64,
    dir: Option<&Path>,
) -> Result<ReferenceSolution<T>> {
    let env = cache_dir_from_env();
    let dir = dir.map(Path::to_path_buf).or(env);
    if let Some(dir) = &dir {
        if let Some(r) = load_reference(problem, tol, dir)? {
            return Ok(r);
        }
    }
    let r = reference_solution(problem, tol)?;
    if let Some(dir) = &dir {
        save_reference(&r, dir)?;
    }
    Ok(r)
}

/// `λ₁ − max_{j ∈ null(x⋆)} |Σ α_i ∇_j f_i(x⋆)|` (weighted per coordinate for weighted ℓ1).
pub fn check_nondegeneracy<T: Scalar>(problem: &CompositeProblem<T>, reference: &ReferenceSolution<T>) -> Result<T> {
    if !problem.reg().is_l1_type() {
        return Err(Error::Unsupported("nondegeneracy margin needs an ℓ1-type regularizer".into()));
    }
    let g = problem.smooth_grad(&reference.x)?;
    let margin = (0..g.len())
        .filter(|&j| reference.x[j] == T::zero())
        .map(|j| problem.reg().level(j) - g[j].abs())
        .fold(T::infinity(), T::min);
    Ok(if margin.is_infinite() { problem.reg().level(0) } else { margin })
}

/// Index after which the support never changes again and equals `supp(x⋆)`.
///
/// `changes` lists the indices at which the support changed (starting with 0 for the initial
/// point) and `final_x` is the last logged iterate.
pub fn identification_time<T: Scalar>(changes: &[usize], final_x: &[T], reference: &ReferenceSolution<T>) -> Option<usize> {
    if support_of(final_x, T::zero()) != reference.support {
        return None;
    }
    Some(changes.last().copied().unwrap_or(0))
}

/// [`identification_time`] for a single engine run, in processed arrivals.
pub fn run_identification_time<T: Scalar>(trace: &RunTrace<T>, reference: &ReferenceSolution<T>) -> Option<usize> {
    identification_time(&trace.support_changes, &trace.final_x, reference)
}

/// `(L−μ)/μ · √(d s) · max(√(c/s), √(s/c)) · ln(1/ε)`, without hidden constants.
pub fn theoretical_complexity(mu: f64, lip: f64, d: usize, s: usize, c: f64, eps: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid("complexity bound needs μ > 0"));
    }
    if s == 0 || s > d || !(c > 0.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("need 0 < s⋆ ≤ d, c > 0 and ε ∈ (0, 1)"));
    }
    let (d, s) = (d as f64, s as f64);
    let ratio = (c / s).sqrt().max((s / c).sqrt());
    Ok((lip - mu) / mu * (d * s).sqrt() * ratio * (1.0 / eps).ln())
}

/// Predicted advantage over DAve-PG: `(1+κ)/(1−κ) · min(√(c/s), √(s/c)) · (d+s)/√(d s)`.
pub fn gain_ratio(kappa: f64, d: usize, s: usize, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&kappa) || s == 0 || s > d || !(c > 0.0) {
        return Err(invalid("need κ ∈ [0, 1), 0 < s⋆ ≤ d and c > 0"));
    }
    let (d, s) = (d as f64, s as f64);
    Ok((1.0 + kappa) / (1.0 - kappa) * (c / s).sqrt().min((s / c).sqrt()) * (d + s) / (d * s).sqrt())
}

/// Cumulative exchanges at the first logged point with `F − F⋆ ≤ eps`.
pub fn empirical_complexity<T: Scalar>(points: &[ObjPoint<T>], f_star: T, eps: f64) -> Result<u64> {
    let mut best = f64::INFINITY;
    for p in points {
        let gap = (p.value - f_star).as_f64();
        if gap <= eps {
            return Ok(p.exchanges);
        }
        best = best.min(gap);
    }
    Err(Error::TargetNotReached { best })
}

/// Cumulative communication of one or more runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub up: u64,
    pub down: u64,
    pub iterations: u64,
    pub epochs: u64,
}

impl CommLedger {
    pub fn from_trace<T: Scalar>(t: &RunTrace<T>) -> Self {
        Self {
            up: t.total_up(),
            down: t.total_down(),
            iterations: t.iterations() as u64,
            epochs: t.num_epochs() as u64,
        }
    }

    pub fn add(&mut self, other: CommLedger) {
        self.up += other.up;
        self.down += other.down;
        self.iterations += other.iterations;
        self.epochs += other.epochs;
    }

    pub fn total(&self) -> u64 {
        self.up + self.down
    }

    /// Measured iterations per epoch (K).
    pub fn iters_per_epoch(&self) -> Option<f64> {
        (self.epochs > 0).then(|| self.iterations as f64 / self.epochs as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub lambda: T,
    pub support: usize,
    /// approximate edges of the λ interval giving the target support
    pub lower: T,
    pub upper: T,
    pub solution: Vec<T>,
}

/// λ₁ for which the ℓ1-penalized version of `problem` has exactly `target` nonzeros: the
/// geometric midpoint of the interval of such λ₁, found by bisection in log λ₁.
pub fn calibrate_l1<T: Scalar>(problem: &CompositeProblem<T>, target: usize, tol: f64) -> Result<Calibration<T>> {
    let d = problem.dim();
    if target == 0 || target > d {
        return Err(invalid("target support must lie in 1..=d"));
    }
    let zero = vec![T::zero(); d];
    let g0 = problem.smooth_grad(&zero)?;
    let lambda_max = max_abs(&g0).as_f64();
    if !(lambda_max > 0.0) {
        return Err(invalid("zero is optimal for every λ₁"));
    }
    let mut warm = zero.clone();
    let solve = |lam: f64, warm: &mut Vec<T>| -> Result<usize> {
        let p = problem.with_reg(Regularizer::l1(T::of(lam))?);
        let (x, _) = fista(&p, warm, tol, 200_000)?;
        let s = support_of(&x, T::zero()).len();
        *warm = x;
        Ok(s)
    };
    // (log λ, support) with support > target at `lo` and < target at `hi`
    let mut hi = lambda_max.ln();
    let mut lo = (lambda_max * 1e-2).ln();
    let mut hit: Option<(f64, Vec<T>)> = None;
    let mut tries = 0;
    loop {
        let s = solve(lo.exp(), &mut warm)?;
        if s == target && hit.is_none() {
            hit = Some((lo, warm.clone()));
        }
        if s > target {
            break;
        }
        lo -= 4.0_f64.ln();
        tries += 1;
        if tries > 20 {
            return Err(invalid(format!("support {target} not reachable for any λ₁")));
        }
    }
    if hit.is_none() {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let s = solve(mid.exp(), &mut warm)?;
            match s.cmp(&target) {
                std::cmp::Ordering::Equal => {
                    hit = Some((mid, warm.clone()));
                    break;
                }
                std::cmp::Ordering::Greater => lo = mid,
                std::cmp::Ordering::Less => hi = mid,
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
    }
    let Some((at, sol)) = hit else {
        return Err(invalid(format!("support jumps over {target}; no λ₁ attains it")));
    };
    let (mut a, mut b) = (lo, at);
    let mut w = sol.clone();
    for _ in 0..14 {
        let mid = 0.5 * (a + b);
        if solve(mid.exp(), &mut w)? == target {
            b = mid;
        } else {
            a = mid;
        }
    }
    let lower = b;
    let (mut a, mut b) = (at, hi);
    let mut w = sol.clone();
    for _ in 0..14 {
        let mid = 0.5 * (a + b);
        if solve(mid.exp(), &mut w)? == target {
            a = mid;
        } else {
            b = mid;
        }
    }
    let upper = a;
    let mut mid = 0.5 * (lower + upper);
    let mut w = sol.clone();
    if solve(mid.exp(), &mut w)? != target {
        mid = at;
        w = sol;
    }
    Ok(Calibration {
        lambda: T::of(mid.exp()),
        support: target,
        lower: T::of(lower.exp()),
        upper: T::of(upper.exp()),
        solution: w,
    })
}

/// Fitted geometric factor `r` of `values[i] ≈ C rⁱ` by least squares on the logs.
pub fn fitted_rate(values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        values.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, v)| (i as f64, v.ln())).collect();
    log_slope(&pts).map(f64::exp)
}

/// Least-squares slope of `(x, y)` pairs.
pub fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `‖x − y‖²` in `f64`.
pub fn sq_dist<T: Scalar>(x: &[T], y: &[T]) -> f64 {
    dist_sq(x, y).as_f64()
}

/// `‖x‖²` in `f64`.
pub fn sq_norm<T: Scalar>(x: &[T]) -> f64 {
    norm_sq(x).as_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseMatrix, Design};
    use crate::problem::LossShard;

    fn scalar_problem(a: f64, b: f64, lambda: f64) -> CompositeProblem<f64> {
        let d = Design::Dense(DenseMatrix::from_rows(&[vec![a]]).unwrap());
        let reg = if lambda > 0.0 { Regularizer::l1(lambda).unwrap() } else { Regularizer::None };
        CompositeProblem::new(vec![LossShard::least_squares(d, vec![b]).unwrap()], reg).unwrap()
    }

    #[test]
    fn quadratic_reference() {
        // ½(x−3)² as (x/√2 − 3/√2)²
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = scalar_problem(s, 3.0 * s, 0.0);
        let r = reference_solution(&p, 1e-12).unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-11);
        assert!(r.f.abs() < 1e-20);
    }

    #[test]
    fn margin_of_scalar_problem() {
        // f(x) = ½x² with λ₁ = 1: x⋆ = 0, margin 1
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = scalar_problem(s, 0.0, 1.0);
        let r = reference_solution(&p, 1e-12).unwrap();
        assert_eq!(r.x, vec![0.0]);
        assert!((check_nondegeneracy(&p, &r).unwrap() - 1.0).abs() < 1e-12);
        let q = scalar_problem(s, 0.0, 0.0);
        let rq = reference_solution(&q, 1e-12).unwrap();
        assert!(matches!(check_nondegeneracy(&q, &rq), Err(Error::Unsupported(_))));
    }

    #[test]
    fn refuses_without_curvature() {
        let a = Design::Dense(DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let s = LossShard::logistic(a, vec![1.0], 0.0).unwrap();
        let p = CompositeProblem::new(vec![s], Regularizer::l1(0.1).unwrap()).unwrap();
        assert!(matches!(reference_solution(&p, 1e-8), Err(Error::Refused(_))));
    }

    #[test]
    fn cache_round_trip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let p = scalar_problem(1.0, 2.0, 0.5);
        let r = reference_solution_cached(&p, 1e-10, Some(dir.path())).unwrap();
        let back = load_reference(&p, 1e-10, dir.path()).unwrap().unwrap();
        assert_eq!(back.x, r.x);
        assert_eq!(back.f, r.f);
        assert!(load_reference(&p, 1e-14, dir.path()).unwrap().is_none());
        let other = scalar_problem(1.0, 2.5, 0.5);
        assert!(load_reference(&other, 1e-10, dir.path()).unwrap().is_none());
        assert_ne!(fingerprint(&p), fingerprint(&other));
    }

    #[test]
    fn complexity_formulas() {
        let base = theoretical_complexity(0.1, 1.0, 100, 4, 4.0, 1e-3).unwrap();
        let expected = 9.0 * 20.0 * (1e3f64).ln();
        assert!((base - expected).abs() < 1e-9);
        let doubled = theoretical_complexity(0.1, 1.0, 200, 4, 4.0, 1e-3).unwrap();
        assert!((doubled / base - 2f64.sqrt()).abs() < 1e-12);
        assert!(theoretical_complexity(0.0, 1.0, 10, 1, 1.0, 0.1).is_err());
        let g = gain_ratio(0.0, 100, 4, 4.0).unwrap();
        assert!((g - 104.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_complexity_thresholds() {
        let pts: Vec<ObjPoint<f64>> = [(0, 0, 1.0), (5, 10, 0.1), (9, 30, 0.001)]
            .iter()
            .map(|&(iter, exchanges, value)| ObjPoint { iter, exchanges, value })
            .collect();
        assert_eq!(empirical_complexity(&pts, 0.0, 1.0).unwrap(), 0);
        assert_eq!(empirical_complexity(&pts, 0.0, 0.05).unwrap(), 30);
        match empirical_complexity(&pts, 0.0, 1e-6) {
            Err(Error::TargetNotReached { best }) => assert_eq!(best, 0.001),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identification_examples() {
        let r = ReferenceSolution { x: vec![1.0, 0.0], f: 0.0, support: vec![0], tol: 0.0, fingerprint: [0; 32] };
        assert_eq!(identification_time(&[0], &[2.0, 0.0], &r), Some(0));
        assert_eq!(identification_time(&[0, 4, 9], &[2.0, 0.0], &r), Some(9));
        assert_eq!(identification_time(&[0, 4, 9], &[2.0, 1.0], &r), None);
    }

    #[test]
    fn rate_fit() {
        let v: Vec<f64> = (0..10).map(|i| 3.0 * 0.5f64.powi(i)).collect();
        assert!((fitted_rate(&v).unwrap() - 0.5).abs() < 1e-12);
    }
}
