//! Composite objectives `F = Σ α_i f_i + r`.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dist_sq, gram_extreme_eigenvalues, norm_sq, Design};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind<T> {
    /// `f(x) = ‖Ax − b‖² / n`
    LeastSquares,
    /// `f(x) = Σ log(1 + exp(−y aᵀx)) / n + λ₂/2 ‖x‖²`
    Logistic { l2: T },
}

/// One worker's smooth local loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossShard<T> {
    kind: LossKind<T>,
    a: Design<T>,
    targets: Vec<T>,
}

/// Per-thread buffers for gradient evaluation on one shard.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    rows: Vec<T>,
    cols: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn for_shard(shard: &LossShard<T>) -> Self {
        Self { rows: vec![T::zero(); shard.rows()], cols: vec![T::zero(); shard.cols()] }
    }
}

#[inline]
fn softplus<T: Scalar>(t: T) -> T {
    // log(1 + e^t) without overflow
    if t > T::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> LossShard<T> {
    pub fn least_squares(a: Design<T>, b: Vec<T>) -> Result<Self> {
        Self::checked(LossKind::LeastSquares, a, b)
    }

    pub fn logistic(a: Design<T>, y: Vec<T>, l2: T) -> Result<Self> {
        if !(l2 >= T::zero()) {
            return Err(invalid("λ₂ must be nonnegative"));
        }
        if let Some(bad) = y.iter().find(|&&v| v != T::one() && v != -T::one()) {
            return Err(invalid(format!("logistic labels must be ±1, found {bad}")));
        }
        Self::checked(LossKind::Logistic { l2 }, a, y)
    }

    fn checked(kind: LossKind<T>, a: Design<T>, targets: Vec<T>) -> Result<Self> {
        if a.rows() == 0 {
            return Err(Error::Empty("shard has no rows"));
        }
        if a.cols() == 0 {
            return Err(Error::Empty("shard has no features"));
        }
        if targets.len() != a.rows() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: targets.len() });
        }
        Ok(Self { kind, a, targets })
    }

    pub fn kind(&self) -> LossKind<T> {
        self.kind
    }

    pub fn design(&self) -> &Design<T> {
        &self.a
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), found: x.len() });
        }
        Ok(())
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        let mut z = vec![T::zero(); self.rows()];
        self.a.mul_vec(x, &mut z);
        let n = T::of_usize(self.rows());
        Ok(match self.kind {
            LossKind::LeastSquares => {
                z.iter().zip(&self.targets).map(|(&zi, &bi)| (zi - bi) * (zi - bi)).sum::<T>() / n
            }
            LossKind::Logistic { l2 } => {
                z.iter().zip(&self.targets).map(|(&zi, &yi)| softplus(-yi * zi)).sum::<T>() / n
                    + l2 * norm_sq(x) / T::of(2.0)
            }
        })
    }

    pub fn grad(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let mut ws = Workspace::for_shard(self);
        let mut g = vec![T::zero(); self.cols()];
        self.grad_into(x, None, &mut g, &mut ws);
        Ok(g)
    }

    /// Gradient restricted to `mask` (all coordinates when `None`); `out[p]` receives
    /// the partial derivative for the p-th masked coordinate. Dimensions are not checked.
    pub fn grad_into(&self, x: &[T], mask: Option<&[usize]>, out: &mut [T], ws: &mut Workspace<T>) {
        let n = T::of_usize(self.rows());
        self.a.mul_vec(x, &mut ws.rows);
        match self.kind {
            LossKind::LeastSquares => {
                let two_n = T::of(2.0) / n;
                for (r, &b) in ws.rows.iter_mut().zip(&self.targets) {
                    *r = (*r - b) * two_n;
                }
            }
            LossKind::Logistic { .. } => {
                for (r, &y) in ws.rows.iter_mut().zip(&self.targets) {
                    *r = -y * sigmoid(-y * *r) / n;
                }
            }
        }
        match mask {
            Some(m) => self.a.tmul_masked(&ws.rows, m, out, &mut ws.cols),
            None => self.a.tmul_vec(&ws.rows, out),
        }
        if let LossKind::Logistic { l2 } = self.kind {
            if l2 != T::zero() {
                match mask {
                    Some(m) => out.iter_mut().zip(m).for_each(|(o, &j)| *o += l2 * x[j]),
                    None => out.iter_mut().zip(x).for_each(|(o, &xj)| *o += l2 * xj),
                }
            }
        }
    }

    /// `(μ_i, L_i)` of this shard.
    pub fn constants(&self) -> (T, T) {
        let (lmin, lmax) = gram_extreme_eigenvalues(&self.a);
        let n = T::of_usize(self.rows());
        match self.kind {
            LossKind::LeastSquares => (T::of(2.0) * lmin / n, T::of(2.0) * lmax / n),
            LossKind::Logistic { l2 } => (l2, lmax / (T::of(4.0) * n) + l2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer<T> {
    None,
    L1 { lambda: T },
    WeightedL1 { lambda: T, weights: Vec<T> },
}

impl<T: Scalar> Regularizer<T> {
    pub fn l1(lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) {
            return Err(invalid("λ₁ must be nonnegative"));
        }
        Ok(Regularizer::L1 { lambda })
    }

    pub fn weighted_l1(lambda: T, weights: Vec<T>) -> Result<Self> {
        if !(lambda >= T::zero()) {
            return Err(invalid("λ₁ must be nonnegative"));
        }
        if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(invalid("ℓ1 weights must be positive and finite"));
        }
        Ok(Regularizer::WeightedL1 { lambda, weights })
    }

    pub fn is_l1_type(&self) -> bool {
        !matches!(self, Regularizer::None)
    }

    /// `λ₁·w_j` (zero for `None`).
    #[inline]
    pub fn level(&self, j: usize) -> T {
        match self {
            Regularizer::None => T::zero(),
            Regularizer::L1 { lambda } => *lambda,
            Regularizer::WeightedL1 { lambda, weights } => *lambda * weights[j],
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        match self {
            Regularizer::None => T::zero(),
            Regularizer::L1 { lambda } => *lambda * x.iter().map(|v| v.abs()).sum::<T>(),
            Regularizer::WeightedL1 { lambda, weights } => {
                *lambda * x.iter().zip(weights).map(|(v, &w)| w * v.abs()).sum::<T>()
            }
        }
    }

    /// Scalar prox of `γ r_j` at `u`. No validation.
    #[inline]
    pub fn prox_coord(&self, gamma: T, j: usize, u: T) -> T {
        match self {
            Regularizer::None => u,
            _ => {
                let t = gamma * self.level(j);
                if u > t {
                    u - t
                } else if u < -t {
                    u + t
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn prox(&self, gamma: T, u: &[T]) -> Result<Vec<T>> {
        if !(gamma > T::zero()) {
            return Err(Error::InvalidStepsize { gamma: gamma.as_f64(), max: f64::INFINITY });
        }
        if let Regularizer::WeightedL1 { weights, .. } = self {
            if weights.len() != u.len() {
                return Err(Error::DimensionMismatch { expected: weights.len(), found: u.len() });
            }
        }
        Ok(u.iter().enumerate().map(|(j, &v)| self.prox_coord(gamma, j, v)).collect())
    }
}

/// Proximal shift `ρ/2 ‖x − center‖²` added to every shard.
#[derive(Debug, Clone, PartialEq)]
pub struct Shift<T> {
    pub rho: T,
    pub center: Vec<T>,
}

/// `F(x) = Σ α_i f_i(x) + r(x)`, optionally shifted by `ρ/2 ‖x − center‖²`.
#[derive(Debug, Clone)]
pub struct CompositeProblem<T> {
    shards: Arc<[LossShard<T>]>,
    alphas: Vec<T>,
    reg: Regularizer<T>,
    base_mu: T,
    base_lip: T,
    shift: Option<Shift<T>>,
}

impl<T: Scalar> CompositeProblem<T> {
    /// Weights are set to `α_i = n_i / n`.
    pub fn new(shards: Vec<LossShard<T>>, reg: Regularizer<T>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Empty("no shards"));
        }
        let d = shards[0].cols();
        for s in &shards {
            if s.cols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: s.cols() });
            }
        }
        if let Regularizer::WeightedL1 { weights, .. } = &reg {
            if weights.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: weights.len() });
            }
        }
        let n: usize = shards.iter().map(LossShard::rows).sum();
        let alphas = shards.iter().map(|s| T::of_usize(s.rows()) / T::of_usize(n)).collect();
        let (mut mu, mut lip) = (T::infinity(), T::zero());
        for s in &shards {
            let (m, l) = s.constants();
            mu = mu.min(m);
            lip = lip.max(l);
        }
        if !(lip > T::zero()) {
            return Err(invalid("smooth part has zero curvature"));
        }
        Ok(Self { shards: shards.into(), alphas, reg, base_mu: mu, base_lip: lip, shift: None })
    }

    pub fn dim(&self) -> usize {
        self.shards[0].cols()
    }

    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[LossShard<T>] {
        &self.shards
    }

    pub fn shard(&self, i: usize) -> &LossShard<T> {
        &self.shards[i]
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn reg(&self) -> &Regularizer<T> {
        &self.reg
    }

    pub fn shift(&self) -> Option<&Shift<T>> {
        self.shift.as_ref()
    }

    /// Same data and regularizer, smooth parts shifted by `ρ/2 ‖· − center‖²`.
    pub fn shifted(&self, rho: T, center: Vec<T>) -> Result<Self> {
        if !(rho >= T::zero()) {
            return Err(invalid("ρ must be nonnegative"));
        }
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: center.len() });
        }
        Ok(Self { shift: Some(Shift { rho, center }), ..self.unshifted() })
    }

    pub fn unshifted(&self) -> Self {
        Self { shift: None, ..self.clone() }
    }

    /// Replace the regularizer (constants are unaffected).
    pub fn with_reg(&self, reg: Regularizer<T>) -> Self {
        Self { reg, ..self.clone() }
    }

    fn rho(&self) -> T {
        self.shift.as_ref().map_or(T::zero(), |s| s.rho)
    }

    /// `(μ, L)` including the shift.
    pub fn smoothness_constants(&self) -> (T, T) {
        (self.base_mu + self.rho(), self.base_lip + self.rho())
    }

    pub fn mu(&self) -> T {
        self.smoothness_constants().0
    }

    pub fn lip(&self) -> T {
        self.smoothness_constants().1
    }

    pub fn condition(&self) -> T {
        let (mu, l) = self.smoothness_constants();
        mu / l
    }

    /// Largest stepsize covered by the convergence theory, `2/(μ+L)`.
    pub fn max_stepsize(&self) -> T {
        let (mu, l) = self.smoothness_constants();
        T::of(2.0) / (mu + l)
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    pub fn shard_value(&self, i: usize, x: &[T]) -> Result<T> {
        let v = self.shards[i].value(x)?;
        Ok(match &self.shift {
            Some(s) => v + s.rho * dist_sq(x, &s.center) / T::of(2.0),
            None => v,
        })
    }

    pub fn smooth_value(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        let mut acc = T::zero();
        for i in 0..self.num_shards() {
            acc += self.alphas[i] * self.shard_value(i, x)?;
        }
        Ok(acc)
    }

    pub fn eval_objective(&self, x: &[T]) -> Result<T> {
        Ok(self.smooth_value(x)? + self.reg.value(x))
    }

    pub fn grad_shard(&self, i: usize, x: &[T]) -> Result<Vec<T>> {
        let mut g = self.shards[i].grad(x)?;
        if let Some(s) = &self.shift {
            for ((gj, &xj), &cj) in g.iter_mut().zip(x).zip(&s.center) {
                *gj += s.rho * (xj - cj);
            }
        }
        Ok(g)
    }

    /// Masked shard gradient including the shift, no dimension checks.
    pub fn grad_shard_into(
        &self,
        i: usize,
        x: &[T],
        mask: Option<&[usize]>,
        out: &mut [T],
        ws: &mut Workspace<T>,
    ) {
        self.shards[i].grad_into(x, mask, out, ws);
        if let Some(s) = &self.shift {
            match mask {
                Some(m) => {
                    for (o, &j) in out.iter_mut().zip(m) {
                        *o += s.rho * (x[j] - s.center[j]);
                    }
                }
                None => {
                    for ((o, &xj), &cj) in out.iter_mut().zip(x).zip(&s.center) {
                        *o += s.rho * (xj - cj);
                    }
                }
            }
        }
    }

    /// `Σ α_i ∇f_i(x)`.
    pub fn smooth_grad(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let mut g = vec![T::zero(); self.dim()];
        for i in 0..self.num_shards() {
            let gi = self.grad_shard(i, x)?;
            crate::linalg::axpy(self.alphas[i], &gi, &mut g);
        }
        Ok(g)
    }

    /// Synchronous proximal-gradient map `prox_{γr}(x − γ∇(Σα_i f_i)(x))`.
    pub fn prox_grad_step(&self, gamma: T, x: &[T]) -> Result<Vec<T>> {
        let g = self.smooth_grad(x)?;
        let u: Vec<T> = x.iter().zip(&g).map(|(&xj, &gj)| xj - gamma * gj).collect();
        self.reg.prox(gamma, &u)
    }

    pub fn prox_reg(&self, gamma: T, u: &[T]) -> Result<Vec<T>> {
        self.check_dim(u)?;
        self.reg.prox(gamma, u)
    }
}

/// Indices with `|x_j| > tol`.
pub fn support_of<T: Scalar>(x: &[T], tol: T) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| v.abs() > tol).map(|(j, _)| j).collect()
}

/// Complement of [`support_of`].
pub fn null_of<T: Scalar>(x: &[T], tol: T) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| v.abs() <= tol).map(|(j, _)| j).collect()
}

pub fn support_size<T: Scalar>(x: &[T]) -> usize {
    x.iter().filter(|v| **v != T::zero()).count()
}
