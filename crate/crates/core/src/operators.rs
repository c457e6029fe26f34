// SPDX-License-Identifier: Apache-2.0

//! Linear operators on state vectors, their adjoints, dissipativity tests,
//! resolvents and the reference semigroup `t -> exp(tZ)`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::chernoff::Stability;
use crate::error::{Error, Result};
use crate::lcs::{SeminormFamily, StateVector};
use crate::linalg::{self, DenseMatrix, LuFactors};
use crate::{fft, rng, C64};

/// Residual bound enforced on every resolvent solve, relative to `||x||`.
pub const RESOLVENT_RESIDUAL_TOL: f64 = 1e-10;

/// A Fourier multiplier on a periodic grid: `x -> F^{-1} (symbol * F x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMultiplier {
    symbol: Vec<C64>,
}

impl SpectralMultiplier {
    pub fn new(symbol: Vec<C64>) -> Result<Self> {
        if symbol.is_empty() || !symbol.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(symbol.len()));
        }
        Ok(SpectralMultiplier { symbol })
    }

    pub fn symbol(&self) -> &[C64] {
        &self.symbol
    }

    fn apply_symbol(&self, x: &[C64], f: impl Fn(C64) -> C64) -> Result<Vec<C64>> {
        let mut buf = x.to_vec();
        fft::forward(&mut buf)?;
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b *= f(*s);
        }
        fft::inverse(&mut buf)?;
        Ok(buf)
    }
}

/// Periodic finite-difference stencil `(Lx)_j = sum_o c_o x_{(j+o) mod n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStencil {
    n: usize,
    taps: Vec<(isize, C64)>,
}

impl GridStencil {
    pub fn new(n: usize, taps: Vec<(isize, C64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("stencil grid must be nonempty"));
        }
        Ok(GridStencil { n, taps })
    }

    pub fn taps(&self) -> &[(isize, C64)] {
        &self.taps
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n as isize;
        (0..n)
            .map(|j| {
                self.taps
                    .iter()
                    .fold(C64::new(0.0, 0.0), |acc, &(o, c)| acc + c * x[(j + o).rem_euclid(n) as usize])
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Dense,
    Diagonal,
    SpectralMultiplier,
    GridStencil,
    Composition,
    Sum,
}

/// A linear operator on a fixed-dimension space.
#[derive(Debug, Clone, PartialEq)]
pub enum LinOp {
    Dense(DenseMatrix),
    Diagonal(Vec<C64>),
    Spectral(SpectralMultiplier),
    Stencil(GridStencil),
    /// `L_0 L_1 ... L_k`; factors are applied right to left.
    Composition(Vec<LinOp>),
    Sum(Vec<LinOp>),
}

impl LinOp {
    pub fn identity(n: usize) -> Self {
        LinOp::Diagonal(vec![C64::new(1.0, 0.0); n])
    }

    pub fn zero(n: usize) -> Self {
        LinOp::Diagonal(vec![C64::new(0.0, 0.0); n])
    }

    pub fn dense(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        Ok(LinOp::Dense(m))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::dense(DenseMatrix::from_real_rows(rows)?)
    }

    pub fn real_diagonal(d: &[f64]) -> Self {
        LinOp::Diagonal(d.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn spectral(symbol: Vec<C64>) -> Result<Self> {
        Ok(LinOp::Spectral(SpectralMultiplier::new(symbol)?))
    }

    /// Spectral Laplacian on `n` points of a periodic interval of length
    /// `extent`: symbol `-k^2` with `k = 2 pi j / extent`.
    pub fn spectral_laplacian(n: usize, extent: f64) -> Result<Self> {
        let symbol = wavenumbers(n, extent)
            .into_iter()
            .map(|k| C64::new(-k * k, 0.0))
            .collect();
        Self::spectral(symbol)
    }

    /// Second-order periodic difference Laplacian.
    pub fn stencil_laplacian(n: usize, extent: f64) -> Result<Self> {
        let dx = extent / n as f64;
        let c = 1.0 / (dx * dx);
        Ok(LinOp::Stencil(GridStencil::new(
            n,
            vec![(-1, C64::new(c, 0.0)), (0, C64::new(-2.0 * c, 0.0)), (1, C64::new(c, 0.0))],
        )?))
    }

    /// Product `factors[0] * factors[1] * ...`.
    pub fn composition(factors: Vec<LinOp>) -> Result<Self> {
        Self::check_chain(&factors)?;
        Ok(LinOp::Composition(factors))
    }

    pub fn sum(terms: Vec<LinOp>) -> Result<Self> {
        Self::check_chain(&terms)?;
        Ok(LinOp::Sum(terms))
    }

    fn check_chain(ops: &[LinOp]) -> Result<()> {
        let Some(first) = ops.first() else {
            return Err(Error::InvalidArgument("empty operator list"));
        };
        let dim = first.dim();
        for op in ops {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: op.dim() });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> OpKind {
        match self {
            LinOp::Dense(_) => OpKind::Dense,
            LinOp::Diagonal(_) => OpKind::Diagonal,
            LinOp::Spectral(_) => OpKind::SpectralMultiplier,
            LinOp::Stencil(_) => OpKind::GridStencil,
            LinOp::Composition(_) => OpKind::Composition,
            LinOp::Sum(_) => OpKind::Sum,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinOp::Dense(m) => m.rows(),
            LinOp::Diagonal(d) => d.len(),
            LinOp::Spectral(s) => s.symbol.len(),
            LinOp::Stencil(s) => s.n,
            LinOp::Composition(ops) | LinOp::Sum(ops) => ops.first().map_or(0, LinOp::dim),
        }
    }

    /// The closure of the operator. Every operator on a finite-dimensional
    /// space is closed, so this is the operator itself.
    pub fn closure(&self) -> &LinOp {
        self
    }

    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim())?;
        let coords = self.apply_raw(x.coords())?;
        Ok(x.map(|i, _| coords[i]))
    }

    fn apply_raw(&self, x: &[C64]) -> Result<Vec<C64>> {
        Ok(match self {
            LinOp::Dense(m) => m.matvec(x),
            LinOp::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            LinOp::Spectral(s) => s.apply_symbol(x, |v| v)?,
            LinOp::Stencil(s) => s.apply(x),
            LinOp::Composition(ops) => {
                let mut y = x.to_vec();
                for op in ops.iter().rev() {
                    y = op.apply_raw(&y)?;
                }
                y
            }
            LinOp::Sum(ops) => {
                let mut acc = vec![C64::new(0.0, 0.0); x.len()];
                for op in ops {
                    for (a, v) in acc.iter_mut().zip(op.apply_raw(x)?) {
                        *a += v;
                    }
                }
                acc
            }
        })
    }

    /// Adjoint with respect to the coordinate pairing `<x, y> = sum x_i conj(y_i)`.
    pub fn adjoint(&self) -> LinOp {
        match self {
            LinOp::Dense(m) => LinOp::Dense(m.adjoint()),
            LinOp::Diagonal(d) => LinOp::Diagonal(d.iter().map(|v| v.conj()).collect()),
            LinOp::Spectral(s) => {
                LinOp::Spectral(SpectralMultiplier { symbol: s.symbol.iter().map(|v| v.conj()).collect() })
            }
            LinOp::Stencil(s) => LinOp::Stencil(GridStencil {
                n: s.n,
                taps: s.taps.iter().map(|&(o, c)| (-o, c.conj())).collect(),
            }),
            LinOp::Composition(ops) => LinOp::Composition(ops.iter().rev().map(LinOp::adjoint).collect()),
            LinOp::Sum(ops) => LinOp::Sum(ops.iter().map(LinOp::adjoint).collect()),
        }
    }

    /// Materializes the operator column by column.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        if let LinOp::Dense(m) = self {
            return Ok(m.clone());
        }
        if let LinOp::Diagonal(d) = self {
            return Ok(DenseMatrix::from_diag(d));
        }
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            let col = self.apply_raw(&e)?;
            e[j] = C64::new(0.0, 0.0);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: C64) -> LinOp {
        match self {
            LinOp::Dense(m) => LinOp::Dense(m.scale(c)),
            LinOp::Diagonal(d) => LinOp::Diagonal(d.iter().map(|v| v * c).collect()),
            LinOp::Spectral(s) => {
                LinOp::Spectral(SpectralMultiplier { symbol: s.symbol.iter().map(|v| v * c).collect() })
            }
            LinOp::Stencil(s) => {
                LinOp::Stencil(GridStencil { n: s.n, taps: s.taps.iter().map(|&(o, v)| (o, v * c)).collect() })
            }
            LinOp::Composition(ops) => {
                let mut ops = ops.clone();
                ops[0] = ops[0].scaled(c);
                LinOp::Composition(ops)
            }
            LinOp::Sum(ops) => LinOp::Sum(ops.iter().map(|op| op.scaled(c)).collect()),
        }
    }

    /// Largest eigenvalue of `(L + L*)/2` and a unit eigenvector.
    pub fn max_hermitian_part_eigenpair(&self) -> Result<(f64, StateVector)> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::InvalidArgument("operator on an empty space"));
        }
        match self {
            LinOp::Diagonal(d) => {
                let (k, v) = argmax(d.iter().map(|v| v.re));
                Ok((v, StateVector::basis(n, k)))
            }
            LinOp::Spectral(s) => {
                let (k, v) = argmax(s.symbol.iter().map(|v| v.re));
                let scale = 1.0 / libm::sqrt(n as f64);
                let mode = StateVector::from_fn(n, |j| {
                    let ang = 2.0 * PI * (j * k) as f64 / n as f64;
                    C64::new(libm::cos(ang) * scale, libm::sin(ang) * scale)
                })?;
                Ok((v, mode))
            }
            _ => {
                let (lambda, v) = linalg::hermitian_max_eigenpair(&self.to_dense()?);
                Ok((lambda, StateVector::new(v)?))
            }
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Wavenumbers `2 pi j / extent` in FFT order.
pub fn wavenumbers(n: usize, extent: f64) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI / extent * fft::signed_frequency(j, n)).collect()
}

/// Outcome of a dissipativity test.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipativity {
    pub dissipative: bool,
    /// Largest eigenvalue of the Hermitian part `(L + L*)/2`.
    pub max_symmetric_eigenvalue: f64,
    /// Largest `Re <Lx, x>` over the sampled unit vectors.
    pub max_sampled: f64,
    /// Maximizing eigenvector of the Hermitian part.
    pub witness: StateVector,
}

/// Checks `Re <Lx, x> <= tol ||x||^2` on `trials` random unit vectors and
/// exactly through the Hermitian part.
pub fn is_dissipative(
    op: &LinOp,
    family: &SeminormFamily,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<Dissipativity> {
    if family.l2_index().is_none() {
        return Err(Error::MissingInnerProduct);
    }
    let n = op.dim();
    if family.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: family.dim() });
    }
    let (lambda, witness) = op.max_hermitian_part_eigenpair()?;
    let mut stream = rng::stream(seed, "dissipativity");
    let mut max_sampled = f64::NEG_INFINITY;
    for _ in 0..trials {
        let x = StateVector::from_fn(n, |_| rng::complex_normal(&mut stream))?;
        let x = x.scale_real(1.0 / x.norm_l2());
        let value = op.apply(&x)?.inner(&x).re;
        max_sampled = max_sampled.max(value);
    }
    Ok(Dissipativity { dissipative: lambda <= tol && max_sampled <= tol, max_symmetric_eigenvalue: lambda, max_sampled, witness })
}

/// Factored solver for `(I - sL) y = x` with a mandatory residual check.
#[derive(Debug, Clone)]
pub struct Resolvent {
    op: LinOp,
    s: f64,
    solver: ResolventSolver,
}

#[derive(Debug, Clone)]
enum ResolventSolver {
    Identity,
    Diagonal(Vec<C64>),
    Spectral(SpectralMultiplier),
    Dense(Box<LuFactors>),
}

impl Resolvent {
    pub fn new(op: &LinOp, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument("resolvent step must be finite and nonnegative"));
        }
        let one = C64::new(1.0, 0.0);
        let invert = |d: &[C64]| -> Result<Vec<C64>> {
            d.iter()
                .map(|v| {
                    let denom = one - v * s;
                    if denom.norm() <= f64::EPSILON {
                        Err(Error::SingularResolvent { s })
                    } else {
                        Ok(one / denom)
                    }
                })
                .collect()
        };
        let solver = if s == 0.0 {
            ResolventSolver::Identity
        } else {
            match op {
                LinOp::Diagonal(d) => ResolventSolver::Diagonal(invert(d)?),
                LinOp::Spectral(m) => ResolventSolver::Spectral(SpectralMultiplier { symbol: invert(&m.symbol)? }),
                _ => {
                    let n = op.dim();
                    let system = DenseMatrix::identity(n).sub(&op.to_dense()?.scale_real(s));
                    let lu = LuFactors::new(&system).map_err(|_| Error::SingularResolvent { s })?;
                    ResolventSolver::Dense(Box::new(lu))
                }
            }
        };
        Ok(Resolvent { op: op.clone(), s, solver })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn step(&self) -> f64 {
        self.s
    }

    pub fn operator(&self) -> &LinOp {
        &self.op
    }

    /// `y = (I - sL)^{-1} x`, verified by `||(I - sL) y - x|| <= 1e-10 ||x||`.
    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim())?;
        let y = match &self.solver {
            ResolventSolver::Identity => return Ok(x.clone()),
            ResolventSolver::Diagonal(inv) => x.map(|i, v| v * inv[i]),
            ResolventSolver::Spectral(m) => {
                let c = m.apply_symbol(x.coords(), |v| v)?;
                x.map(|i, _| c[i])
            }
            ResolventSolver::Dense(lu) => {
                let c = lu.solve(x.coords());
                x.map(|i, _| c[i])
            }
        };
        self.verify(&self.op, &y, x)?;
        Ok(y)
    }

    /// `y = (I - sL*)^{-1} x`.
    pub fn apply_adjoint(&self, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim())?;
        let y = match &self.solver {
            ResolventSolver::Identity => return Ok(x.clone()),
            ResolventSolver::Diagonal(inv) => x.map(|i, v| v * inv[i].conj()),
            ResolventSolver::Spectral(m) => {
                let c = m.apply_symbol(x.coords(), |v| v.conj())?;
                x.map(|i, _| c[i])
            }
            ResolventSolver::Dense(lu) => {
                let c = lu.solve_adjoint(x.coords());
                x.map(|i, _| c[i])
            }
        };
        self.verify(&self.op.adjoint(), &y, x)?;
        Ok(y)
    }

    fn verify(&self, op: &LinOp, y: &StateVector, x: &StateVector) -> Result<()> {
        let image = y.axpy(C64::new(-self.s, 0.0), &op.apply(y)?);
        let residual = image.sub(x).norm_l2();
        if !y.is_finite() || residual > RESOLVENT_RESIDUAL_TOL * x.norm_l2() {
            return Err(Error::ResidualTooLarge { s: self.s, residual });
        }
        Ok(())
    }
}

/// Solves `(I - sL) y = x`.
pub fn resolvent_apply(op: &LinOp, s: f64, x: &StateVector) -> Result<StateVector> {
    Resolvent::new(op, s)?.apply(x)
}

/// How a semigroup evaluator computes `exp(tZ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpMethod {
    /// Padé scaling and squaring on the materialized generator.
    DenseExpm,
    /// Exponentiated symbol of a Fourier multiplier.
    Spectral,
    /// Entrywise exponential of a diagonal generator.
    ClosedForm,
}

/// The semigroup `t -> exp(tZ)` generated by a [`LinOp`].
#[derive(Debug, Clone)]
pub struct SemigroupEvaluator {
    generator: LinOp,
    method: ExpMethod,
    dense: Option<DenseMatrix>,
    stability: Option<Stability>,
}

impl SemigroupEvaluator {
    /// Picks the cheapest exact method for the generator's kind.
    pub fn new(generator: LinOp) -> Result<Self> {
        let method = match generator {
            LinOp::Diagonal(_) => ExpMethod::ClosedForm,
            LinOp::Spectral(_) => ExpMethod::Spectral,
            _ => ExpMethod::DenseExpm,
        };
        Self::with_method(generator, method)
    }

    pub fn with_method(generator: LinOp, method: ExpMethod) -> Result<Self> {
        let dense = match (method, &generator) {
            (ExpMethod::DenseExpm, _) => Some(generator.to_dense()?),
            (ExpMethod::Spectral, LinOp::Spectral(_)) | (ExpMethod::ClosedForm, LinOp::Diagonal(_)) => None,
            _ => return Err(Error::InvalidArgument("evaluation method does not match the generator kind")),
        };
        Ok(SemigroupEvaluator { generator, method, dense, stability: None })
    }

    /// Declares `||exp(tZ)|| <= M e^{at}`.
    pub fn with_stability(mut self, stability: Stability) -> Self {
        self.stability = Some(stability);
        self
    }

    pub fn generator(&self) -> &LinOp {
        &self.generator
    }

    pub fn method(&self) -> ExpMethod {
        self.method
    }

    pub fn stability(&self) -> Option<Stability> {
        self.stability
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// `exp(tZ)` as an operator.
    pub fn operator_at(&self, t: f64) -> Result<LinOp> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let exp_symbol = |d: &[C64]| -> Vec<C64> { d.iter().map(|v| (v * t).exp()).collect() };
        match (&self.generator, self.method) {
            (LinOp::Diagonal(d), ExpMethod::ClosedForm) => Ok(LinOp::Diagonal(exp_symbol(d))),
            (LinOp::Spectral(m), ExpMethod::Spectral) => {
                Ok(LinOp::Spectral(SpectralMultiplier { symbol: exp_symbol(&m.symbol) }))
            }
            _ => {
                let z = self.dense.as_ref().expect("dense generator cached for DenseExpm");
                Ok(LinOp::Dense(linalg::expm(&z.scale_real(t))?))
            }
        }
    }

    /// `exp(tZ) x`.
    pub fn expm_reference(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        x.check_dim(self.dim())?;
        self.operator_at(t)?.apply(x)
    }
}

/// `exp(tZ) x` through the evaluator's declared method.
pub fn expm_reference(semigroup: &SemigroupEvaluator, t: f64, x: &StateVector) -> Result<StateVector> {
    semigroup.expm_reference(t, x)
}
