// SPDX-License-Identifier: Apache-2.0

//! Chernoff functions and the product formula `F(t/n)^n h -> exp(tZ) h`.
//!
//! A [`ChernoffFn`] is a map `s -> F(s)` with `F(0) = I`. Its iterated
//! products converge to the semigroup generated by its (effective) derivative
//! at zero, provided the powers `F(step)^m` stay uniformly bounded on compact
//! time ranges. This module evaluates the products, probes the derivative,
//! estimates the stability constants `(M, a)` in
//! `||F(step)^m|| <= M exp(a m step)` and runs the small-step consistency
//! diagnostics that underpin the convergence argument.

use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::lcs::{LatticeSpec, SeminormFamily, StateVector};
use crate::operators::{LinOp, Resolvent, SemigroupEvaluator};
use crate::rate::{self, RateFit, RateFlag};
use crate::{rng, C64};

/// Tolerance on the Hermitian-part eigenvalue, relative to the operator
/// scale, below which a generator counts as dissipative.
pub const DISSIPATIVE_TOL: f64 = 1e-12;

/// Constants `(M, a)` of the bound `||F(step)^m|| <= M exp(a m step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub m: f64,
    pub a: f64,
}

impl Stability {
    pub const CONTRACTION: Stability = Stability { m: 1.0, a: 0.0 };

    pub fn new(m: f64, a: f64) -> Result<Self> {
        if !(m >= 1.0) || !m.is_finite() || !a.is_finite() {
            return Err(Error::InvalidArgument("stability constants need M >= 1 and finite a"));
        }
        Ok(Stability { m, a })
    }

    /// `M exp(a tau)`.
    pub fn bound(&self, tau: f64) -> f64 {
        self.m * libm::exp(self.a * tau)
    }
}

/// `F(s)` for one fixed `s`, ready to be applied repeatedly.
#[derive(Debug, Clone)]
pub enum StepOperator {
    Identity(usize),
    Linear(LinOp),
    /// `(I - sL)^{-1}`.
    Resolvent(Resolvent),
    /// `(I - sL*)^{-1}`.
    ResolventAdjoint(Resolvent),
    /// Product of factors applied right to left.
    Product(Vec<StepOperator>),
}

impl StepOperator {
    pub fn dim(&self) -> usize {
        match self {
            StepOperator::Identity(n) => *n,
            StepOperator::Linear(op) => op.dim(),
            StepOperator::Resolvent(r) | StepOperator::ResolventAdjoint(r) => r.dim(),
            StepOperator::Product(ops) => ops.first().map_or(0, StepOperator::dim),
        }
    }

    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        match self {
            StepOperator::Identity(n) => {
                x.check_dim(*n)?;
                Ok(x.clone())
            }
            StepOperator::Linear(op) => op.apply(x),
            StepOperator::Resolvent(r) => r.apply(x),
            StepOperator::ResolventAdjoint(r) => r.apply_adjoint(x),
            StepOperator::Product(ops) => {
                let mut y = x.clone();
                for op in ops.iter().rev() {
                    y = op.apply(&y)?;
                }
                Ok(y)
            }
        }
    }

    /// Entries of `F^n` when the step is diagonal. Powers are taken in
    /// closed form, which avoids the `n`-fold accumulation of rounding.
    pub fn diagonal_power(&self, n: u64) -> Option<Vec<C64>> {
        let e = n as f64;
        match self {
            StepOperator::Linear(LinOp::Diagonal(d)) => Some(d.iter().map(|&v| real_aware_pow(v, e)).collect()),
            StepOperator::Resolvent(r) => match r.operator() {
                LinOp::Diagonal(d) => {
                    let s = r.step();
                    Some(d.iter().map(|&v| real_aware_pow(C64::new(1.0, 0.0) - v * s, -e)).collect())
                }
                _ => None,
            },
            _ => None,
        }
    }

    pub fn adjoint(&self) -> StepOperator {
        match self {
            StepOperator::Identity(n) => StepOperator::Identity(*n),
            StepOperator::Linear(op) => StepOperator::Linear(op.adjoint()),
            StepOperator::Resolvent(r) => StepOperator::ResolventAdjoint(r.clone()),
            StepOperator::ResolventAdjoint(r) => StepOperator::Resolvent(r.clone()),
            StepOperator::Product(ops) => StepOperator::Product(ops.iter().rev().map(StepOperator::adjoint).collect()),
        }
    }
}

fn real_aware_pow(z: C64, e: f64) -> C64 {
    if z.im == 0.0 {
        C64::new(libm::pow(z.re, e), 0.0)
    } else {
        z.powf(e)
    }
}

type StepBuilder = Arc<dyn Fn(f64) -> Result<StepOperator> + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Identity,
    Semigroup(SemigroupEvaluator),
    LieTrotter(SemigroupEvaluator, SemigroupEvaluator),
    ImplicitEuler(LinOp),
    Custom(StepBuilder),
}

/// A map `[0, inf) -> L(E)` with `F(0) = I`.
#[derive(Clone)]
pub struct ChernoffFn {
    label: String,
    dim: usize,
    kind: Kind,
    claimed_derivative: Option<LinOp>,
    stability: Option<Stability>,
}

impl fmt::Debug for ChernoffFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChernoffFn")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("stability", &self.stability)
            .finish_non_exhaustive()
    }
}

impl ChernoffFn {
    /// `F(s) = I` for every `s`.
    pub fn identity(dim: usize) -> Self {
        ChernoffFn {
            label: "identity".to_string(),
            dim,
            kind: Kind::Identity,
            claimed_derivative: Some(LinOp::zero(dim)),
            stability: Some(Stability::CONTRACTION),
        }
    }

    /// `F(s) = exp(sZ)`, the semigroup itself.
    pub fn exact(semigroup: SemigroupEvaluator) -> Self {
        ChernoffFn {
            label: "exact".to_string(),
            dim: semigroup.dim(),
            claimed_derivative: Some(semigroup.generator().clone()),
            stability: semigroup.stability(),
            kind: Kind::Semigroup(semigroup),
        }
    }

    /// A Chernoff function given by an arbitrary step builder.
    /// `F(0)` is always the identity regardless of what `build(0)` returns.
    pub fn custom(
        label: &str,
        dim: usize,
        build: impl Fn(f64) -> Result<StepOperator> + Send + Sync + 'static,
    ) -> Self {
        ChernoffFn {
            label: label.to_string(),
            dim,
            kind: Kind::Custom(Arc::new(build)),
            claimed_derivative: None,
            stability: None,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn with_stability(mut self, stability: Stability) -> Self {
        self.stability = Some(stability);
        self
    }

    pub fn with_claimed_derivative(mut self, z: LinOp) -> Result<Self> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: z.dim() });
        }
        self.claimed_derivative = Some(z);
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn claimed_derivative(&self) -> Option<&LinOp> {
        self.claimed_derivative.as_ref()
    }

    pub fn stability(&self) -> Option<Stability> {
        self.stability
    }

    /// `F(s)` as an operator.
    pub fn step(&self, s: f64) -> Result<StepOperator> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::NegativeTime(s));
        }
        if s == 0.0 {
            return Ok(StepOperator::Identity(self.dim));
        }
        let op = match &self.kind {
            Kind::Identity => StepOperator::Identity(self.dim),
            Kind::Semigroup(sg) => StepOperator::Linear(sg.operator_at(s)?),
            Kind::LieTrotter(a, b) => {
                StepOperator::Product(vec![StepOperator::Linear(a.operator_at(s)?), StepOperator::Linear(b.operator_at(s)?)])
            }
            Kind::ImplicitEuler(z) => StepOperator::Resolvent(Resolvent::new(z, s)?),
            Kind::Custom(build) => build(s)?,
        };
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: op.dim() });
        }
        Ok(op)
    }

    /// `F(s) x`.
    pub fn eval(&self, s: f64, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim)?;
        if s == 0.0 {
            return Ok(x.clone());
        }
        self.step(s)?.apply(x)
    }
}

/// `F(s) = exp(sA) exp(sB)`, whose products converge to `exp(t(A + B))`.
pub fn lie_trotter(a: SemigroupEvaluator, b: SemigroupEvaluator) -> Result<ChernoffFn> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let stability = match (a.stability(), b.stability()) {
        (Some(sa), Some(sb)) if sa.m == 1.0 && sb.m == 1.0 => Some(Stability { m: 1.0, a: sa.a + sb.a }),
        _ => None,
    };
    Ok(ChernoffFn {
        label: "lie-trotter".to_string(),
        dim: a.dim(),
        claimed_derivative: Some(LinOp::sum(vec![a.generator().clone(), b.generator().clone()])?),
        stability,
        kind: Kind::LieTrotter(a, b),
    })
}

/// `F(s) = (I - sZ)^{-1}`. Declared a contraction when `Z` is dissipative.
pub fn implicit_euler(z: LinOp) -> Result<ChernoffFn> {
    let (lambda, _) = z.max_hermitian_part_eigenpair()?;
    let stability = (lambda <= DISSIPATIVE_TOL * operator_scale(&z)?).then_some(Stability::CONTRACTION);
    Ok(ChernoffFn {
        label: "implicit-euler".to_string(),
        dim: z.dim(),
        claimed_derivative: Some(z.clone()),
        stability,
        kind: Kind::ImplicitEuler(z),
    })
}

fn operator_scale(z: &LinOp) -> Result<f64> {
    let scale = match z {
        LinOp::Diagonal(d) => d.iter().map(|v| v.norm()).fold(0.0, f64::max),
        LinOp::Spectral(m) => m.symbol().iter().map(|v| v.norm()).fold(0.0, f64::max),
        _ => z.to_dense()?.norm_one(),
    };
    Ok(scale.max(1.0))
}

/// Result of iterating a Chernoff step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOutcome {
    pub state: StateVector,
    /// Number of applications of `F(t/n)` performed.
    pub applications: u64,
}

fn apply_checked(op: &StepOperator, x: &StateVector, step: u64) -> Result<StateVector> {
    let y = op.apply(x)?;
    if !y.is_finite() {
        return Err(Error::NonFinite { step: step as usize });
    }
    Ok(y)
}

/// `F(t/n)^n h`.
pub fn product_apply(f: &ChernoffFn, t: f64, n: u64, h: &StateVector) -> Result<ProductOutcome> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("product needs n >= 1"));
    }
    h.check_dim(f.dim())?;
    let op = f.step(t / n as f64)?;
    if let Some(p) = op.diagonal_power(n) {
        let y = h.map(|i, v| v * p[i]);
        if y.is_finite() {
            return Ok(ProductOutcome { state: y, applications: n });
        }
        // fall through to locate the first non-finite step
    }
    let mut y = h.clone();
    for k in 1..=n {
        y = apply_checked(&op, &y, k)?;
    }
    Ok(ProductOutcome { state: y, applications: n })
}

/// `[s n / t]`, robust to the rounding of `s / t` when `s n / t` is an
/// integer in exact arithmetic.
pub fn path_power(s: f64, t: f64, n: u64) -> u64 {
    if t == 0.0 || s <= 0.0 {
        return 0;
    }
    let x = s / t * n as f64;
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        libm::floor(x) as u64
    }
}

/// `F(t/n)^{[s n / t]} h` for every `s` in `s_grid`, from one sweep.
pub fn product_path(f: &ChernoffFn, t: f64, n: u64, s_grid: &[f64], h: &StateVector) -> Result<Vec<StateVector>> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("product needs n >= 1"));
    }
    if let Some(&bad) = s_grid.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::NegativeTime(bad));
    }
    h.check_dim(f.dim())?;
    let powers: Vec<u64> = s_grid.iter().map(|&s| path_power(s, t, n)).collect();
    let mut order: Vec<usize> = (0..s_grid.len()).collect();
    order.sort_by_key(|&i| powers[i]);
    let op = f.step(t / n as f64)?;
    if op.diagonal_power(1).is_some() {
        let closed: Vec<StateVector> = powers
            .iter()
            .map(|&p| match op.diagonal_power(p) {
                Some(d) if p > 0 => h.map(|i, v| v * d[i]),
                _ => h.clone(),
            })
            .collect();
        if closed.iter().all(StateVector::is_finite) {
            return Ok(closed);
        }
    }
    let mut out = vec![StateVector::zeros(0); s_grid.len()];
    let mut y = h.clone();
    let mut done = 0u64;
    for i in order {
        while done < powers[i] {
            done += 1;
            y = apply_checked(&op, &y, done)?;
        }
        out[i] = y.clone();
    }
    Ok(out)
}

/// The product path applied to `Zh`; tracks `Z f(s)`.
pub fn derivative_path(
    f: &ChernoffFn,
    z: &LinOp,
    t: f64,
    n: u64,
    s_grid: &[f64],
    h: &StateVector,
) -> Result<Vec<StateVector>> {
    product_path(f, t, n, s_grid, &z.closure().apply(h)?)
}

type FamilyBuilder = Arc<dyn Fn(f64) -> Result<StateVector> + Send + Sync>;

/// A family `s -> f_s` with `f_s -> f`, used to probe `F'_ef(0) f = g`.
#[derive(Clone)]
pub struct ApproximatingFamily {
    build: FamilyBuilder,
    target: StateVector,
    claimed_limit: StateVector,
}

impl ApproximatingFamily {
    pub fn new(
        build: impl Fn(f64) -> Result<StateVector> + Send + Sync + 'static,
        target: StateVector,
        claimed_limit: StateVector,
    ) -> Result<Self> {
        claimed_limit.check_dim(target.dim())?;
        Ok(ApproximatingFamily { build: Arc::new(build), target, claimed_limit })
    }

    /// `f_s = f` for every `s` (the strong-derivative case).
    pub fn constant(target: StateVector, claimed_limit: StateVector) -> Result<Self> {
        let f = target.clone();
        Self::new(move |_| Ok(f.clone()), target, claimed_limit)
    }

    pub fn at(&self, s: f64) -> Result<StateVector> {
        let v = (self.build)(s)?;
        v.check_dim(self.target.dim())?;
        Ok(v)
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn claimed_limit(&self) -> &StateVector {
        &self.claimed_limit
    }
}

/// `s^{-1} (F(s) - I) x`.
pub fn difference_quotient(f: &ChernoffFn, s: f64, x: &StateVector) -> Result<StateVector> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument("difference quotient needs s > 0"));
    }
    Ok(f.eval(s, x)?.sub(x).scale_real(1.0 / s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub s_grid: Vec<f64>,
    /// `||f_s - f||_alpha`, indexed `[alpha][i]`.
    pub approx_errors: Vec<Vec<f64>>,
    /// `||s^{-1}(F(s) - I) f_s - g||_alpha`, indexed `[alpha][i]`.
    pub quotient_errors: Vec<Vec<f64>>,
    /// `1e-6 (1 + ||g||_alpha)`.
    pub tolerances: Vec<f64>,
    pub pass: bool,
}

/// Checks numerically that `g` is the effective derivative of `F` at zero
/// along the family `f_s`.
///
/// Passes when, for every seminorm, both error curves are non-increasing
/// over the last three grid points and end below `1e-6 (1 + ||g||)`.
pub fn effective_derivative_probe(
    f: &ChernoffFn,
    fam: &ApproximatingFamily,
    s_grid: &[f64],
    family: &SeminormFamily,
) -> Result<ProbeReport> {
    if s_grid.is_empty() || s_grid.iter().any(|s| !(*s > 0.0)) || s_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("probe grid must be positive and strictly decreasing"));
    }
    let g = fam.claimed_limit();
    let tolerances: Vec<f64> = family.eval_all(g)?.into_iter().map(|v| 1e-6 * (1.0 + v)).collect();
    let mut approx_errors = vec![Vec::with_capacity(s_grid.len()); family.len()];
    let mut quotient_errors = vec![Vec::with_capacity(s_grid.len()); family.len()];
    for &s in s_grid {
        let fs = fam.at(s)?;
        let q = difference_quotient(f, s, &fs)?;
        let e1 = family.eval_all(&fs.sub(fam.target()))?;
        let e2 = family.eval_all(&q.sub(g))?;
        for alpha in 0..family.len() {
            approx_errors[alpha].push(e1[alpha]);
            quotient_errors[alpha].push(e2[alpha]);
        }
    }
    let k = s_grid.len().min(3);
    let pass = (0..family.len()).all(|alpha| {
        let ok = |curve: &[f64]| {
            (k < 2 || rate::tail_nonincreasing(curve, k)) && *curve.last().unwrap() <= tolerances[alpha]
        };
        ok(&approx_errors[alpha]) && ok(&quotient_errors[alpha])
    });
    Ok(ProbeReport { s_grid: s_grid.to_vec(), approx_errors, quotient_errors, tolerances, pass })
}

/// Maximum deviation per seminorm at each `eps`, with `eps` sorted
/// decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub eps: Vec<f64>,
    /// Indexed `[alpha][eps index]`.
    pub max_deviation: Vec<Vec<f64>>,
    pub pass: bool,
}

const STEP_DIVISORS: [f64; 9] = [1.0, 1.5, 2.0, 3.0, 4.5, 5.0, 8.0, 13.0, 21.0];
const DIFFERENCE_DIVISORS: [f64; 5] = [1.0, 2.0, 3.0, 5.0, 8.0];
const MAX_SWEEP_POWERS: u64 = 200_000;

fn sorted_eps(eps_grid: &[f64]) -> Result<Vec<f64>> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument("eps grid must be nonempty and positive"));
    }
    let mut eps = eps_grid.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    Ok(eps)
}

fn consistency_verdict(max_deviation: &[Vec<f64>]) -> bool {
    max_deviation.iter().all(|curve| {
        let k = curve.len().min(3);
        k < 2 || rate::tail_decreasing(curve, k)
    })
}

/// Samples `||(F^i(t/k) - I) g||` over `t i / k <= eps`.
///
/// Only the step `u = t/k` and the power `i` matter, so the sample uses
/// steps `eps / d` for a fixed set of divisors `d` and every power with
/// `i u <= eps`.
pub fn small_step_consistency(
    f: &ChernoffFn,
    g: &StateVector,
    eps_grid: &[f64],
    family: &SeminormFamily,
) -> Result<ConsistencyReport> {
    g.check_dim(f.dim())?;
    let eps = sorted_eps(eps_grid)?;
    let mut max_deviation = vec![vec![0.0f64; eps.len()]; family.len()];
    for (j, &e) in eps.iter().enumerate() {
        for d in STEP_DIVISORS {
            let u = e / d;
            let op = f.step(u)?;
            let cap = libm::floor(d) as u64;
            let mut y = g.clone();
            for i in 1..=cap {
                y = apply_checked(&op, &y, i)?;
                for (alpha, v) in family.eval_all(&y.sub(g))?.into_iter().enumerate() {
                    max_deviation[alpha][j] = max_deviation[alpha][j].max(v);
                }
            }
        }
    }
    let pass = consistency_verdict(&max_deviation);
    Ok(ConsistencyReport { eps, max_deviation, pass })
}

/// Samples `||(F^i(t/k) - F^l(t/k)) g||` over `|t (i - l) / k| <= eps` with
/// `t i / k <= s` and `t l / k <= s`.
pub fn step_difference_consistency(
    f: &ChernoffFn,
    g: &StateVector,
    s: f64,
    eps_grid: &[f64],
    family: &SeminormFamily,
) -> Result<ConsistencyReport> {
    g.check_dim(f.dim())?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument("step-difference horizon must be positive"));
    }
    let eps = sorted_eps(eps_grid)?;
    let mut max_deviation = vec![vec![0.0f64; eps.len()]; family.len()];
    for (j, &e) in eps.iter().enumerate() {
        for d in DIFFERENCE_DIVISORS {
            let u = e / d;
            let cap = libm::floor(s / u * (1.0 + 1e-12)) as u64;
            if cap > MAX_SWEEP_POWERS {
                continue;
            }
            let window = d as usize;
            let op = f.step(u)?;
            let mut recent: VecDeque<StateVector> = VecDeque::with_capacity(window + 1);
            let mut y = g.clone();
            recent.push_back(y.clone());
            for m in 1..=cap {
                y = apply_checked(&op, &y, m)?;
                for prev in recent.iter() {
                    for (alpha, v) in family.eval_all(&y.sub(prev))?.into_iter().enumerate() {
                        max_deviation[alpha][j] = max_deviation[alpha][j].max(v);
                    }
                }
                recent.push_back(y.clone());
                if recent.len() > window {
                    recent.pop_front();
                }
            }
        }
    }
    let pass = consistency_verdict(&max_deviation);
    Ok(ConsistencyReport { eps, max_deviation, pass })
}

/// What the products are compared against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Semigroup(&'a SemigroupEvaluator),
    /// Successive differences between consecutive `n` values.
    SelfConvergence,
}

/// One `(seminorm, t, n)` error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCell {
    pub seminorm: usize,
    pub t: f64,
    pub n: u64,
    pub error: f64,
}

/// Error curves of a product-formula run over an `n` grid and a `t` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub labels: Vec<String>,
    /// `n` values carrying errors; in self-convergence mode the first grid
    /// value is dropped.
    pub n_grid: Vec<u64>,
    pub t_grid: Vec<f64>,
    /// Ordered by seminorm, then `t`, then `n`.
    pub errors: Vec<ErrorCell>,
    /// `max_t errors(alpha, t, n)`, indexed `[alpha][n index]`.
    pub uniform_errors: Vec<Vec<f64>>,
    pub fitted_rates: Vec<core::result::Result<RateFit, RateFlag>>,
    pub stability_estimate: Option<Stability>,
    pub self_referenced: bool,
}

impl ConvergenceReport {
    pub fn uniform(&self, alpha: usize) -> &[f64] {
        &self.uniform_errors[alpha]
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().map(|c| c.error).fold(0.0, f64::max)
    }

    pub fn with_stability_estimate(mut self, stability: Stability) -> Self {
        self.stability_estimate = Some(stability);
        self
    }
}

/// Runs `F(t/n)^n h` over the grids and measures the distance to the
/// reference in every seminorm.
pub fn chernoff_converge(
    f: &ChernoffFn,
    reference: Reference<'_>,
    h: &StateVector,
    t0: f64,
    n_grid: &[u64],
    t_grid: &[f64],
    family: &SeminormFamily,
) -> Result<ConvergenceReport> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("n grid must be positive and strictly increasing"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0 && *t <= t0)) {
        return Err(Error::InvalidArgument("t grid must be nonempty and inside [0, t0]"));
    }
    h.check_dim(f.dim())?;
    let self_referenced = matches!(reference, Reference::SelfConvergence);
    if self_referenced && n_grid.len() < 2 {
        return Err(Error::InvalidArgument("self-convergence needs at least two n values"));
    }
    let n_axis: Vec<u64> = if self_referenced { n_grid[1..].to_vec() } else { n_grid.to_vec() };
    // table[t][n][alpha]
    let mut table = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut row = Vec::with_capacity(n_axis.len());
        match reference {
            Reference::Semigroup(sg) => {
                let exact = sg.expm_reference(t, h)?;
                for &n in n_grid {
                    let approx = product_apply(f, t, n, h)?.state;
                    row.push(family.eval_all(&approx.sub(&exact))?);
                }
            }
            Reference::SelfConvergence => {
                let mut prev = product_apply(f, t, n_grid[0], h)?.state;
                for &n in &n_grid[1..] {
                    let cur = product_apply(f, t, n, h)?.state;
                    row.push(family.eval_all(&cur.sub(&prev))?);
                    prev = cur;
                }
            }
        }
        table.push(row);
    }
    let mut errors = Vec::with_capacity(family.len() * t_grid.len() * n_axis.len());
    let mut uniform_errors = vec![vec![0.0f64; n_axis.len()]; family.len()];
    for alpha in 0..family.len() {
        for (ti, &t) in t_grid.iter().enumerate() {
            for (ni, &n) in n_axis.iter().enumerate() {
                let error = table[ti][ni][alpha];
                errors.push(ErrorCell { seminorm: alpha, t, n, error });
                uniform_errors[alpha][ni] = uniform_errors[alpha][ni].max(error);
            }
        }
    }
    let fitted_rates = uniform_errors.iter().map(|u| rate::fit_rate(u, &n_axis)).collect();
    Ok(ConvergenceReport {
        labels: family.labels().map(ToString::to_string).collect(),
        n_grid: n_axis,
        t_grid: t_grid.to_vec(),
        errors,
        uniform_errors,
        fitted_rates,
        stability_estimate: None,
        self_referenced,
    })
}

/// Sampled operator norms and the fitted stability constants.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEstimate {
    pub stability: Stability,
    /// `(m * step, ||F(step)^m||)` samples.
    pub samples: Vec<(f64, f64)>,
}

/// Lower estimate of `||B||_2` by power iteration on `B* B`.
fn power_norm(
    forward: &StepOperator,
    backward: &StepOperator,
    power: u64,
    iterations: usize,
    stream: &mut rng::StreamRng,
) -> Result<f64> {
    let n = forward.dim();
    let apply_pow = |op: &StepOperator, x: &StateVector| -> Result<StateVector> {
        let mut y = x.clone();
        for k in 1..=power {
            y = apply_checked(op, &y, k)?;
        }
        Ok(y)
    };
    let x = StateVector::from_fn(n, |_| rng::complex_normal(stream))?;
    let mut x = x.scale_real(1.0 / x.norm_l2());
    let mut best = 0.0f64;
    for _ in 0..iterations.max(1) {
        let y = apply_pow(forward, &x)?;
        best = best.max(y.norm_l2());
        let z = apply_pow(backward, &y)?;
        let nz = z.norm_l2();
        if nz == 0.0 {
            break;
        }
        x = z.scale_real(1.0 / nz);
    }
    Ok(best)
}

/// Powers sampled per step: `1, 2, 4, ...` and the cap itself.
fn sampled_powers(cap: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut m = 1;
    while m < cap {
        out.push(m);
        m *= 2;
    }
    if cap > 0 {
        out.push(cap);
    }
    out
}

/// Estimates `(M, a)` with `||F(step)^m|| <= M exp(a m step)` over the
/// lattice. Norms come from `iterations` rounds of power iteration.
pub fn stability_estimate(
    f: &ChernoffFn,
    lattice: &LatticeSpec,
    iterations: usize,
    seed: u64,
) -> Result<StabilityEstimate> {
    let mut stream = rng::stream(seed, "stability");
    let mut samples = Vec::new();
    for &n in lattice.denominators() {
        let step = lattice.horizon() / n as f64;
        let cap = lattice.power_cap(n, lattice.horizon());
        if cap == 0 || step == 0.0 {
            continue;
        }
        let forward = f.step(step)?;
        let backward = forward.adjoint();
        for m in sampled_powers(cap) {
            let norm = power_norm(&forward, &backward, m, iterations, &mut stream)?;
            samples.push((m as f64 * step, norm));
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("stability lattice has no positive steps"));
    }
    Ok(StabilityEstimate { stability: fit_growth_bound(&samples), samples })
}

/// Fits `(M, a)` so that every sample obeys `N <= M exp(a tau)`.
///
/// Two certificates are computed: the tightest rate with `M = 1` and the
/// pair minimizing the bound at the largest sampled `tau`. The `M = 1`
/// certificate is returned when it is no looser at the horizon. Rates are
/// clamped at zero: a family of contractions reports `(1, 0)`.
pub fn fit_growth_bound(samples: &[(f64, f64)]) -> Stability {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(tau, _)| *tau > 0.0)
        .map(|&(tau, norm)| (tau, libm::log(norm.max(f64::MIN_POSITIVE))))
        .collect();
    if pts.is_empty() {
        return Stability::CONTRACTION;
    }
    let tau_max = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let lift = |a: f64| pts.iter().map(|&(tau, y)| y - a * tau).fold(0.0, f64::max);

    let unit_rate = pts.iter().map(|&(tau, y)| y / tau).fold(f64::NEG_INFINITY, f64::max);
    let unit_objective = unit_rate * tau_max;

    let mut best = (f64::INFINITY, 0.0, unit_rate);
    let mut consider = |a: f64| {
        if !a.is_finite() {
            return;
        }
        let c = lift(a);
        let obj = c + a * tau_max;
        if obj < best.0 || (obj == best.0 && c < best.1) {
            best = (obj, c, a);
        }
    };
    for (i, &(ti, yi)) in pts.iter().enumerate() {
        consider(yi / ti);
        for &(tj, yj) in &pts[i + 1..] {
            if tj != ti {
                consider((yi - yj) / (ti - tj));
            }
        }
    }
    let slack = 1.0 + 4.0 * f64::EPSILON;
    if unit_rate <= 0.0 {
        return Stability { m: slack, a: 0.0 };
    }
    if unit_objective <= best.0 + 1e-12 * (1.0 + libm::fabs(best.0)) {
        Stability { m: slack, a: unit_rate }
    } else {
        Stability { m: libm::exp(best.1) * slack, a: best.2 }
    }
}

/// Checks a declared stability bound on sampled powers and probe vectors:
/// `||F(step)^m x|| <= M e^{a m step} ||x|| (1 + 1e-8)`.
pub fn verify_declared_stability(f: &ChernoffFn, lattice: &LatticeSpec, probes: &[StateVector]) -> Result<bool> {
    let Some(st) = f.stability() else {
        return Ok(true);
    };
    for &n in lattice.denominators() {
        let step = lattice.horizon() / n as f64;
        let cap = lattice.power_cap(n, lattice.horizon());
        if cap == 0 {
            continue;
        }
        let op = f.step(step)?;
        for x in probes {
            let base = x.norm_l2();
            let mut y = x.clone();
            for m in 1..=cap {
                y = apply_checked(&op, &y, m)?;
                if y.norm_l2() > st.bound(m as f64 * step) * base * (1.0 + 1e-8) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Pairwise deviations between product paths of several Chernoff
/// functions sharing a derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub max_deviation: f64,
    /// `(i, j, max over t and seminorms)` for every pair `i < j`.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Compares `F_i(t0/n)^{[s n / t0]} h` across all functions and every
/// `s` in `s_grid`.
pub fn uniqueness_cross_check(
    fs: &[&ChernoffFn],
    h: &StateVector,
    t0: f64,
    n_big: u64,
    s_grid: &[f64],
    family: &SeminormFamily,
) -> Result<CrossCheck> {
    if fs.len() < 2 {
        return Err(Error::InvalidArgument("uniqueness check needs at least two Chernoff functions"));
    }
    let dim = fs[0].dim();
    for f in fs {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: f.dim() });
        }
    }
    check_shared_derivative(fs)?;
    let paths = fs.iter().map(|f| product_path(f, t0, n_big, s_grid, h)).collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    let mut max_deviation = 0.0f64;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            let mut dev = 0.0f64;
            for (a, b) in paths[i].iter().zip(&paths[j]) {
                for v in family.eval_all(&a.sub(b))? {
                    dev = dev.max(v);
                }
            }
            max_deviation = max_deviation.max(dev);
            pairs.push((i, j, dev));
        }
    }
    Ok(CrossCheck { max_deviation, pairs })
}

fn check_shared_derivative(fs: &[&ChernoffFn]) -> Result<()> {
    let claimed: Vec<&LinOp> = fs.iter().filter_map(|f| f.claimed_derivative()).collect();
    let Some(first) = claimed.first() else {
        return Ok(());
    };
    let reference = first.to_dense()?;
    let tol = 1e-9 * (1.0 + reference.norm_max());
    for z in &claimed[1..] {
        if z.to_dense()?.sub(&reference).norm_max() > tol {
            return Err(Error::InvalidArgument("Chernoff functions claim different derivatives"));
        }
    }
    Ok(())
}

/// Modulus of continuity of `t -> Z f(t)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityTable {
    /// Largest spacing of the grid.
    pub spacing: f64,
    /// `max_i ||Z f(t_i) - Z f(t_{i+1})||_alpha` per seminorm.
    pub moduli: Vec<f64>,
}

/// Evaluates the derivative path on `t_grid` (increasing) and reports the
/// largest jump per seminorm.
pub fn regularity_check(
    f: &ChernoffFn,
    z: &LinOp,
    h: &StateVector,
    t0: f64,
    n: u64,
    t_grid: &[f64],
    family: &SeminormFamily,
) -> Result<RegularityTable> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("regularity grid must have two or more increasing points"));
    }
    let path = derivative_path(f, z, t0, n, t_grid, h)?;
    let mut moduli = vec![0.0f64; family.len()];
    for w in path.windows(2) {
        for (alpha, v) in family.eval_all(&w[1].sub(&w[0]))?.into_iter().enumerate() {
            moduli[alpha] = moduli[alpha].max(v);
        }
    }
    let spacing = t_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(RegularityTable { spacing, moduli })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityRefinement {
    pub tables: Vec<RegularityTable>,
    pub pass: bool,
}

/// Runs [`regularity_check`] on uniform grids of `[0, t0]` with the given
/// interval counts and passes when each modulus shrinks at least in
/// proportion to the spacing (30% slack).
pub fn regularity_refinement(
    f: &ChernoffFn,
    z: &LinOp,
    h: &StateVector,
    t0: f64,
    n: u64,
    intervals: &[usize],
    family: &SeminormFamily,
) -> Result<RegularityRefinement> {
    let mut tables = Vec::with_capacity(intervals.len());
    for &k in intervals {
        if k == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interval"));
        }
        let grid: Vec<f64> = (0..=k).map(|i| t0 * i as f64 / k as f64).collect();
        tables.push(regularity_check(f, z, h, t0, n, &grid, family)?);
    }
    let pass = tables.windows(2).all(|w| {
        let ratio = w[1].spacing / w[0].spacing;
        w[0].moduli.iter().zip(&w[1].moduli).all(|(coarse, fine)| {
            *fine <= rate::ERROR_FLOOR || *fine <= coarse * ratio * 1.3
        })
    });
    Ok(RegularityRefinement { tables, pass })
}

/// Scalar helper used by scenario builders: `F(s) = c(s) I`.
pub fn scalar_family(label: &str, dim: usize, factor: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ChernoffFn {
    ChernoffFn::custom(label, dim, move |s| {
        Ok(StepOperator::Linear(LinOp::Diagonal(vec![C64::new(factor(s), 0.0); dim])))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn rx(v: &[f64]) -> StateVector {
        StateVector::real(v).unwrap()
    }

    fn decay() -> LinOp {
        LinOp::real_diagonal(&[-1.0])
    }

    fn nil_pair() -> (SemigroupEvaluator, SemigroupEvaluator) {
        let a = LinOp::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let b = LinOp::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        (SemigroupEvaluator::new(a).unwrap(), SemigroupEvaluator::new(b).unwrap())
    }

    #[test]
    fn identity_family_products_are_trivial() {
        let h = rx(&[1.0, -3.0]);
        let id = ChernoffFn::identity(2);
        let out = product_apply(&id, 1.0, 7, &h).unwrap();
        assert_eq!(out.state, h);
        assert_eq!(out.applications, 7);
    }

    #[test]
    fn implicit_euler_scalar_products() {
        let f = implicit_euler(decay()).unwrap();
        let y = product_apply(&f, 1.0, 10, &rx(&[1.0])).unwrap().state;
        let expected = libm::pow(1.1, -10.0);
        assert!((y.coords()[0].re - expected).abs() < 1e-15);
        assert!((expected - 0.385_543_3).abs() < 1e-7);

        let path = product_path(&f, 1.0, 100, &[0.0, 0.5, 1.0], &rx(&[1.0])).unwrap();
        assert_eq!(path[0], rx(&[1.0]));
        assert!((path[1].coords()[0].re - libm::pow(1.01, -50.0)).abs() < 1e-15);
        assert!((path[1].coords()[0].re - 0.608_038_8).abs() < 1e-7);
        assert_eq!(path[2], product_apply(&f, 1.0, 100, &rx(&[1.0])).unwrap().state);

        let dpath = derivative_path(&f, &decay(), 1.0, 100, &[0.0, 1.0], &rx(&[1.0])).unwrap();
        assert_eq!(dpath[0], rx(&[-1.0]));
        assert!((dpath[1].coords()[0].re + libm::pow(1.01, -100.0)).abs() < 1e-15);
        assert!((dpath[1].coords()[0].re + 0.369_711_2).abs() < 1e-7);
    }

    #[test]
    fn lie_product_of_nilpotent_pair() {
        let (a, b) = nil_pair();
        let f = lie_trotter(a, b).unwrap();
        let y = product_apply(&f, 1.0, 1, &rx(&[1.0, 0.0])).unwrap().state;
        // exp(A) = [[1,1],[0,1]], exp(B) = [[1,0],[1,1]]
        assert!((y.coords()[0].re - 2.0).abs() < 1e-15);
        assert!((y.coords()[1].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lie_with_zero_factor_is_exact() {
        let z = LinOp::from_real_rows(&[&[-1.0, 2.0], &[0.5, -3.0]]).unwrap();
        let exact = SemigroupEvaluator::new(z.clone()).unwrap();
        let f = lie_trotter(SemigroupEvaluator::new(LinOp::zero(2)).unwrap(), exact.clone()).unwrap();
        let h = rx(&[1.0, 1.0]);
        for n in [1, 3, 17] {
            let y = product_apply(&f, 1.0, n, &h).unwrap().state;
            assert!(y.sub(&exact.expm_reference(1.0, &h).unwrap()).norm_l2() < 1e-12);
        }
    }

    #[test]
    fn non_finite_step_is_reported() {
        let f = scalar_family("blowup", 1, |s| if s > 0.0 { f64::MAX } else { 1.0 });
        let err = product_apply(&f, 1.0, 5, &rx(&[2.0])).unwrap_err();
        assert_eq!(err, Error::NonFinite { step: 1 });
    }

    #[test]
    fn product_apply_validates_inputs() {
        let f = ChernoffFn::identity(1);
        assert_eq!(product_apply(&f, -1.0, 2, &rx(&[1.0])).unwrap_err(), Error::NegativeTime(-1.0));
        assert!(product_apply(&f, 1.0, 0, &rx(&[1.0])).is_err());
        assert!(matches!(product_apply(&f, 1.0, 1, &rx(&[1.0, 2.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn probe_examples() {
        let f = implicit_euler(decay()).unwrap();
        let q = difference_quotient(&f, 0.01, &rx(&[1.0])).unwrap();
        assert!((q.coords()[0].re - (1.0 / 1.01 - 1.0) / 0.01).abs() < 1e-13);
        assert!((q.coords()[0].re + 0.990_099_0).abs() < 1e-7);

        let fam = SeminormFamily::standard(1);
        let grid: Vec<f64> = (2..=7).map(|k| libm::pow(10.0, -(k as f64))).collect();
        let good = ApproximatingFamily::constant(rx(&[1.0]), rx(&[-1.0])).unwrap();
        assert!(effective_derivative_probe(&f, &good, &grid, &fam).unwrap().pass);
        let bad = ApproximatingFamily::constant(rx(&[1.0]), rx(&[1.0])).unwrap();
        assert!(!effective_derivative_probe(&f, &bad, &grid, &fam).unwrap().pass);

        let id = ChernoffFn::identity(1);
        let zero = ApproximatingFamily::constant(rx(&[1.0]), rx(&[0.0])).unwrap();
        let rep = effective_derivative_probe(&id, &zero, &grid, &fam).unwrap();
        assert!(rep.pass);
        assert!(rep.quotient_errors.iter().flatten().all(|&e| e == 0.0));
    }

    #[test]
    fn probe_rejects_bad_grid() {
        let id = ChernoffFn::identity(1);
        let fam = ApproximatingFamily::constant(rx(&[1.0]), rx(&[0.0])).unwrap();
        let sn = SeminormFamily::standard(1);
        assert!(effective_derivative_probe(&id, &fam, &[0.1, 0.2], &sn).is_err());
    }

    #[test]
    fn probe_with_moving_family() {
        // f_s = f + s w still converges to f and gives the same quotient limit.
        let z = LinOp::from_real_rows(&[&[-1.0, 1.0], &[0.0, -2.0]]).unwrap();
        let f = implicit_euler(z.clone()).unwrap();
        let target = rx(&[1.0, 2.0]);
        let g = z.apply(&target).unwrap();
        let t2 = target.clone();
        let fam = ApproximatingFamily::new(move |s| Ok(t2.axpy(C64::new(s, 0.0), &rx(&[3.0, -1.0]))), target, g)
            .unwrap();
        let grid: Vec<f64> = (2..=8).map(|k| libm::pow(10.0, -(k as f64))).collect();
        assert!(effective_derivative_probe(&f, &fam, &grid, &SeminormFamily::standard(2)).unwrap().pass);
    }

    #[test]
    fn consistency_examples() {
        let fam = SeminormFamily::standard(1);
        let g = rx(&[1.0]);
        let id = ChernoffFn::identity(1);
        let rep = small_step_consistency(&id, &g, &[0.1, 0.01], &fam).unwrap();
        assert!(rep.max_deviation.iter().flatten().all(|&v| v == 0.0));
        assert!(rep.pass);

        let f = implicit_euler(decay()).unwrap();
        let rep = small_step_consistency(&f, &g, &[0.001], &fam).unwrap();
        // oracle: |(1+u)^{-i} - 1| <= i u <= eps
        assert!(rep.max_deviation[0][0] <= 0.001);
        assert!(rep.max_deviation[0][0] > 0.0009);

        let rep = step_difference_consistency(&f, &g, 1.0, &[0.01], &fam).unwrap();
        assert!(rep.max_deviation[0][0] <= 0.011);
        let rep = step_difference_consistency(&id, &g, 1.0, &[0.1, 0.05, 0.01], &fam).unwrap();
        assert!(rep.max_deviation.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn implicit_euler_of_zero_is_identity_family() {
        let f = implicit_euler(LinOp::zero(2)).unwrap();
        let h = rx(&[0.3, -0.4]);
        for s in [0.0, 0.1, 5.0] {
            assert_eq!(f.eval(s, &h).unwrap(), h);
        }
        assert_eq!(f.stability(), Some(Stability::CONTRACTION));
    }

    #[test]
    fn implicit_euler_of_skew_contracts() {
        let f = implicit_euler(LinOp::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap()).unwrap();
        let h = rx(&[0.6, 0.8]);
        for s in [0.01, 0.5, 3.0, 100.0] {
            assert!(f.eval(s, &h).unwrap().norm_l2() <= h.norm_l2() + 1e-15);
        }
        assert_eq!(f.stability(), Some(Stability::CONTRACTION));
        let growth = implicit_euler(LinOp::real_diagonal(&[0.5])).unwrap();
        assert_eq!(growth.stability(), None);
    }

    #[test]
    fn stability_estimate_examples() {
        let lat = LatticeSpec::new(1.0, &[1, 2, 4, 8, 16, 32, 64]).unwrap();
        let id = stability_estimate(&ChernoffFn::identity(2), &lat, 20, 1).unwrap().stability;
        assert!((id.m - 1.0).abs() < 1e-12 && id.a.abs() < 1e-12);

        let z = LinOp::from_real_rows(&[&[-0.5, 1.0], &[-1.0, -0.1]]).unwrap();
        let ie = stability_estimate(&implicit_euler(z).unwrap(), &lat, 20, 1).unwrap().stability;
        assert!(ie.m <= 1.0 + 1e-8 && ie.a <= 1e-8, "{ie:?}");

        let grow = scalar_family("1+s", 1, |s| 1.0 + s);
        let est = stability_estimate(&grow, &lat, 20, 1).unwrap();
        assert!((est.stability.m - 1.0).abs() < 1e-8);
        // oracle: max over the lattice of log((1+u)^m)/(m u) = 64 log(1 + 1/64)
        let oracle = 64.0 * libm::log(1.0 + 1.0 / 64.0);
        assert!((est.stability.a - oracle).abs() < 1e-12);
        for (tau, norm) in est.samples {
            assert!(norm <= est.stability.bound(tau));
        }
    }

    #[test]
    fn growth_fit_prefers_offset_when_tighter() {
        // ||e^{tau A}|| for nilpotent A behaves like 1 + tau: an M > 1 fit wins at the horizon.
        let samples: Vec<(f64, f64)> = (1..=40).map(|k| (k as f64 * 0.25, 1.0 + k as f64 * 0.25)).collect();
        let st = fit_growth_bound(&samples);
        for &(tau, n) in &samples {
            assert!(n <= st.bound(tau));
        }
        assert!(st.m > 1.0);
        assert!(st.bound(10.0) < libm::exp(10.0 * libm::log(1.25) / 0.25));
    }

    #[test]
    fn declared_stability_holds_for_contractions() {
        let z = LinOp::from_real_rows(&[&[-0.5, 1.0], &[-1.0, -0.1]]).unwrap();
        let f = implicit_euler(z).unwrap();
        let lat = LatticeSpec::new(2.0, &[1, 3, 10, 40]).unwrap();
        assert!(verify_declared_stability(&f, &lat, &[rx(&[1.0, 0.0]), rx(&[0.3, -2.0])]).unwrap());
        let liar = scalar_family("liar", 1, |s| 1.0 + s).with_stability(Stability::CONTRACTION);
        assert!(!verify_declared_stability(&liar, &lat, &[rx(&[1.0])]).unwrap());
    }

    #[test]
    fn convergence_scalar_oracle() {
        let f = implicit_euler(decay()).unwrap();
        let sg = SemigroupEvaluator::new(decay()).unwrap();
        let ns = [10, 20, 40, 80, 160];
        let rep = chernoff_converge(&f, Reference::Semigroup(&sg), &rx(&[1.0]), 1.0, &ns, &[1.0], &SeminormFamily::standard(1))
            .unwrap();
        for (i, &n) in ns.iter().enumerate() {
            let oracle = libm::fabs(libm::pow(1.0 + 1.0 / n as f64, -(n as f64)) - libm::exp(-1.0));
            assert!((rep.uniform(0)[i] - oracle).abs() < 1e-14);
        }
        for w in rep.uniform(0).windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
        }
        let fit = rep.fitted_rates[0].unwrap();
        assert!((0.8..=1.2).contains(&fit.slope));
    }

    #[test]
    fn convergence_of_exact_semigroup_is_flat() {
        let z = LinOp::from_real_rows(&[&[-1.0, 2.0], &[0.0, -0.5]]).unwrap();
        let sg = SemigroupEvaluator::new(z).unwrap();
        let f = ChernoffFn::exact(sg.clone());
        let rep = chernoff_converge(&f, Reference::Semigroup(&sg), &rx(&[1.0, 1.0]), 1.0, &[1, 2, 4, 8], &[0.5, 1.0], &SeminormFamily::standard(2))
            .unwrap();
        assert!(rep.max_error() <= 1e-12);
        assert!(rep.fitted_rates.iter().all(|r| r.map_or(true, |fit| fit.flagged)));
    }

    #[test]
    fn uniform_errors_are_exact_maxima() {
        let (a, b) = nil_pair();
        let sum = LinOp::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let sg = SemigroupEvaluator::new(sum).unwrap();
        let f = lie_trotter(a, b).unwrap();
        let t_grid = [0.0, 0.25, 0.5, 1.0];
        let rep = chernoff_converge(&f, Reference::Semigroup(&sg), &rx(&[1.0, 0.0]), 1.0, &[2, 4, 8, 16], &t_grid, &SeminormFamily::standard(2))
            .unwrap();
        for alpha in 0..2 {
            for (ni, &n) in rep.n_grid.iter().enumerate() {
                let max = rep
                    .errors
                    .iter()
                    .filter(|c| c.seminorm == alpha && c.n == n)
                    .map(|c| c.error)
                    .fold(0.0, f64::max);
                assert_eq!(max, rep.uniform(alpha)[ni]);
            }
        }
        assert!(rep.errors.iter().all(|c| c.error >= 0.0));
    }

    #[test]
    fn self_convergence_drops_first_n() {
        let f = implicit_euler(decay()).unwrap();
        let rep = chernoff_converge(&f, Reference::SelfConvergence, &rx(&[1.0]), 1.0, &[8, 16, 32, 64, 128], &[1.0], &SeminormFamily::standard(1))
            .unwrap();
        assert_eq!(rep.n_grid, vec![16, 32, 64, 128]);
        assert!(rate::tail_decreasing(rep.uniform(0), 4));
    }

    #[test]
    fn convergence_validates_grids() {
        let f = ChernoffFn::identity(1);
        let r = Reference::SelfConvergence;
        let fam = SeminormFamily::standard(1);
        assert!(chernoff_converge(&f, r, &rx(&[1.0]), 1.0, &[4, 2], &[1.0], &fam).is_err());
        assert!(chernoff_converge(&f, r, &rx(&[1.0]), 1.0, &[2, 4], &[1.5], &fam).is_err());
    }

    #[test]
    fn uniqueness_examples() {
        let sg = SemigroupEvaluator::new(decay()).unwrap();
        let exact = ChernoffFn::exact(sg.clone());
        let fam = SeminormFamily::standard(1);
        let h = rx(&[1.0]);
        let same = uniqueness_cross_check(&[&exact, &exact.clone()], &h, 1.0, 100, &[0.5, 1.0], &fam).unwrap();
        assert!(same.max_deviation <= 1e-15);

        let ie = implicit_euler(decay()).unwrap();
        let rep = uniqueness_cross_check(&[&ie, &exact], &h, 1.0, 10_000, &[1.0], &fam).unwrap();
        let oracle = libm::fabs(libm::pow(1.0 + 1e-4, -1e4) - libm::exp(-1.0));
        assert!((rep.max_deviation - oracle).abs() < 1e-12);
        assert!((oracle - 1.8e-5).abs() < 1e-6);

        let other = implicit_euler(LinOp::real_diagonal(&[-2.0])).unwrap();
        assert!(uniqueness_cross_check(&[&ie, &other], &h, 1.0, 10, &[1.0], &fam).is_err());
        assert!(uniqueness_cross_check(&[&ie], &h, 1.0, 10, &[1.0], &fam).is_err());
    }

    #[test]
    fn regularity_examples() {
        let fam = SeminormFamily::standard(2);
        let h = rx(&[1.0, -1.0]);
        let zero = ChernoffFn::exact(SemigroupEvaluator::new(LinOp::zero(2)).unwrap());
        let table = regularity_check(&zero, &LinOp::zero(2), &h, 1.0, 8, &[0.0, 0.5, 1.0], &fam).unwrap();
        assert!(table.moduli.iter().all(|&m| m == 0.0));

        let sg = SemigroupEvaluator::new(decay()).unwrap();
        let f = ChernoffFn::exact(sg);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let table = regularity_check(&f, &decay(), &rx(&[1.0]), 1.0, 10, &grid, &SeminormFamily::standard(1)).unwrap();
        let delta = 0.1;
        assert!((table.moduli[0] - (1.0 - libm::exp(-delta))).abs() < 1e-13);
        assert!(table.moduli[0] <= delta);
    }

    #[test]
    fn regularity_modulus_bound_for_symmetric_generator() {
        let z = LinOp::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let sg = SemigroupEvaluator::new(z.clone()).unwrap();
        let f = ChernoffFn::exact(sg.clone());
        let h = rx(&[1.0, 0.0]);
        let fam = SeminormFamily::l2_only(2);
        let rep = regularity_refinement(&f, &z, &h, 1.0, 64, &[4, 8, 16, 32, 64], &fam).unwrap();
        assert!(rep.pass);
        // ||Z||_2 = 1, so the modulus is at most ||Z||^2 e^{||Z|| t0} delta ||h||
        for table in &rep.tables {
            assert!(table.moduli[0] <= libm::exp(1.0) * table.spacing);
        }
        // finite-difference oracle on the finest grid
        let dense = DenseMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let fine = rep.tables.last().unwrap();
        let mut oracle = 0.0f64;
        for i in 0..64 {
            let a = crate::linalg::expm(&dense.scale_real(i as f64 / 64.0)).unwrap();
            let b = crate::linalg::expm(&dense.scale_real((i + 1) as f64 / 64.0)).unwrap();
            let za = dense.matmul(&a).matvec(h.coords());
            let zb = dense.matmul(&b).matvec(h.coords());
            let d: f64 = za.iter().zip(&zb).map(|(x, y)| (x - y).norm_sqr()).sum();
            oracle = oracle.max(libm::sqrt(d));
        }
        assert!((fine.moduli[0] - oracle).abs() < 1e-12);
    }
}
