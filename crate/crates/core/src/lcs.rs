// SPDX-License-Identifier: Apache-2.0

//! The discretized state space: vectors, seminorm families and the derived
//! seminorms `||x||_a^{F,s} = sup { ||F^m(d/n) x||_a : m d/n <= s }`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::chernoff::ChernoffFn;
use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarField {
    Real,
    Complex,
}

/// Identifies the discretization a vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceId {
    pub dim: usize,
    pub field: ScalarField,
}

/// An element of the discretized space.
///
/// Coordinates are always stored as complex numbers; real spaces are a
/// flag on the [`SpaceId`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coords: Vec<C64>,
    space: SpaceId,
}

impl StateVector {
    /// Rejects non-finite coordinates.
    pub fn new(coords: Vec<C64>) -> Result<Self> {
        if coords.iter().any(|c| !is_finite(*c)) {
            return Err(Error::InvalidArgument("state vector has non-finite coordinates"));
        }
        Ok(Self::from_coords_unchecked(coords))
    }

    pub(crate) fn from_coords_unchecked(coords: Vec<C64>) -> Self {
        let space = SpaceId { dim: coords.len(), field: ScalarField::Complex };
        StateVector { coords, space }
    }

    pub fn real(values: &[f64]) -> Result<Self> {
        let mut v = Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())?;
        v.space.field = ScalarField::Real;
        Ok(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_coords_unchecked(vec![C64::new(0.0, 0.0); dim])
    }

    /// The `k`-th standard basis vector.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.coords[k] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> C64) -> Result<Self> {
        Self::new((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn space(&self) -> SpaceId {
        self.space
    }

    pub fn coords(&self) -> &[C64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<C64> {
        self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| is_finite(*c))
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found: self.dim() })
        }
    }

    /// Coordinate-wise map preserving the space descriptor.
    pub fn map(&self, f: impl Fn(usize, C64) -> C64) -> StateVector {
        StateVector {
            coords: self.coords.iter().enumerate().map(|(i, c)| f(i, *c)).collect(),
            space: self.space,
        }
    }

    /// # Panics
    /// On dimension mismatch.
    pub fn add(&self, other: &StateVector) -> StateVector {
        self.zip(other, |a, b| a + b)
    }

    /// # Panics
    /// On dimension mismatch.
    pub fn sub(&self, other: &StateVector) -> StateVector {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: C64) -> StateVector {
        self.map(|_, v| v * c)
    }

    pub fn scale_real(&self, c: f64) -> StateVector {
        self.map(|_, v| v * c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: C64, other: &StateVector) -> StateVector {
        self.zip(other, |a, b| a + c * b)
    }

    fn zip(&self, other: &StateVector, f: impl Fn(C64, C64) -> C64) -> StateVector {
        assert_eq!(self.dim(), other.dim(), "state vector dimension mismatch");
        StateVector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| f(*a, *b)).collect(),
            space: self.space,
        }
    }

    /// `<self, other> = sum_i self_i conj(other_i)`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        assert_eq!(self.dim(), other.dim(), "state vector dimension mismatch");
        self.coords.iter().zip(&other.coords).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj())
    }

    pub fn norm_l2(&self) -> f64 {
        libm::sqrt(self.coords.iter().map(|c| c.norm_sqr()).sum())
    }

    pub fn norm_sup(&self) -> f64 {
        self.coords.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn is_finite(c: C64) -> bool {
    c.re.is_finite() && c.im.is_finite()
}

/// A single seminorm evaluator.
#[derive(Debug, Clone, PartialEq)]
pub enum Seminorm {
    L2,
    L1,
    Sup,
    /// Supremum over a subset of coordinates (e.g. grid points in a disc).
    SupOn(Vec<usize>),
}

impl Seminorm {
    fn eval(&self, x: &StateVector) -> f64 {
        match self {
            Seminorm::L2 => x.norm_l2(),
            Seminorm::L1 => x.coords.iter().map(|c| c.norm()).sum(),
            Seminorm::Sup => x.norm_sup(),
            Seminorm::SupOn(idx) => idx.iter().map(|&i| x.coords[i].norm()).fold(0.0, f64::max),
        }
    }
}

/// A finite indexed family of seminorms on one space.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormFamily {
    dim: usize,
    members: Vec<(String, Seminorm)>,
}

impl SeminormFamily {
    pub fn new(dim: usize, members: Vec<(String, Seminorm)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("seminorm family must be nonempty"));
        }
        for (_, m) in &members {
            if let Seminorm::SupOn(idx) = m {
                if let Some(&bad) = idx.iter().find(|&&i| i >= dim) {
                    return Err(Error::IndexOutOfRange { index: bad, len: dim });
                }
            }
        }
        Ok(SeminormFamily { dim, members })
    }

    /// `l2` and `sup`.
    pub fn standard(dim: usize) -> Self {
        SeminormFamily {
            dim,
            members: vec![("l2".to_string(), Seminorm::L2), ("sup".to_string(), Seminorm::Sup)],
        }
    }

    pub fn l2_only(dim: usize) -> Self {
        SeminormFamily { dim, members: vec![("l2".to_string(), Seminorm::L2)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(l, _)| l.as_str())
    }

    pub fn label(&self, alpha: usize) -> &str {
        &self.members[alpha].0
    }

    pub fn member(&self, alpha: usize) -> Option<&Seminorm> {
        self.members.get(alpha).map(|(_, s)| s)
    }

    /// Index of the first `l2` member, which provides the inner product.
    pub fn l2_index(&self) -> Option<usize> {
        self.members.iter().position(|(_, s)| *s == Seminorm::L2)
    }

    pub fn eval(&self, alpha: usize, x: &StateVector) -> Result<f64> {
        let (_, seminorm) =
            self.members.get(alpha).ok_or(Error::IndexOutOfRange { index: alpha, len: self.members.len() })?;
        x.check_dim(self.dim)?;
        Ok(seminorm.eval(x))
    }

    /// Every member evaluated on `x`, in index order.
    pub fn eval_all(&self, x: &StateVector) -> Result<Vec<f64>> {
        x.check_dim(self.dim)?;
        Ok(self.members.iter().map(|(_, s)| s.eval(x)).collect())
    }
}

/// Evaluates `||x||_alpha`.
pub fn eval_seminorm(family: &SeminormFamily, alpha: usize, x: &StateVector) -> Result<f64> {
    family.eval(alpha, x)
}

/// Finite sample of the family `{F^m(d/n) : m d/n <= s}` with `d` fixed to
/// the horizon and `n` running over a set of denominators.
///
/// Steps are `horizon / n`, so the power cap at the full horizon is exactly
/// `n` and every enumerated pair satisfies `m * step <= horizon` in exact
/// arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    horizon: f64,
    denominators: Vec<u64>,
}

impl LatticeSpec {
    pub fn new(horizon: f64, denominators: &[u64]) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument("lattice horizon must be finite and nonnegative"));
        }
        if denominators.is_empty() || denominators.contains(&0) {
            return Err(Error::InvalidArgument("lattice denominators must be positive and nonempty"));
        }
        let mut denominators = denominators.to_vec();
        denominators.sort_unstable();
        denominators.dedup();
        Ok(LatticeSpec { horizon, denominators })
    }

    /// Denominators `round(10^(k/per_decade))` from 1 up to `max_denominator`.
    pub fn geometric(horizon: f64, max_denominator: u64, per_decade: u32) -> Result<Self> {
        if max_denominator == 0 || per_decade == 0 {
            return Err(Error::InvalidArgument("geometric lattice needs positive bounds"));
        }
        let mut dens = Vec::new();
        let mut k = 0u32;
        loop {
            let d = libm::round(libm::pow(10.0, k as f64 / per_decade as f64)) as u64;
            if d > max_denominator {
                break;
            }
            dens.push(d);
            k += 1;
        }
        dens.push(max_denominator);
        Self::new(horizon, &dens)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn denominators(&self) -> &[u64] {
        &self.denominators
    }

    pub fn step_values(&self) -> Vec<f64> {
        self.denominators.iter().map(|&n| self.horizon / n as f64).collect()
    }

    /// Largest `m` with `m * (horizon / n) <= s`.
    pub fn power_cap(&self, n: u64, s: f64) -> u64 {
        if self.horizon == 0.0 || s <= 0.0 {
            return 0;
        }
        if s >= self.horizon {
            return n;
        }
        (libm::floor(s / self.horizon * n as f64) as u64).min(n)
    }

    pub fn power_caps(&self, s: f64) -> Vec<u64> {
        self.denominators.iter().map(|&n| self.power_cap(n, s)).collect()
    }

    /// All `(step, m)` pairs with `1 <= m <= cap(s)`.
    pub fn enumerate(&self, s: f64) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.denominators.iter().flat_map(move |&n| {
            let step = self.horizon / n as f64;
            (1..=self.power_cap(n, s)).map(move |m| (step, m))
        })
    }

    /// Union with additional denominators.
    pub fn refine(&self, extra: &[u64]) -> Result<Self> {
        let mut all = self.denominators.clone();
        all.extend_from_slice(extra);
        Self::new(self.horizon, &all)
    }
}

/// Lower bound on `||x||_alpha^{F,s}` by maximizing over the lattice sample
/// of `B_s^F`. The identity (`m = 0`) is always included.
pub fn derived_seminorm(
    family: &SeminormFamily,
    alpha: usize,
    f: &ChernoffFn,
    s: f64,
    lattice: &LatticeSpec,
    x: &StateVector,
) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::NegativeTime(s));
    }
    if lattice.horizon() < s {
        return Err(Error::InvalidArgument("lattice horizon is shorter than s"));
    }
    x.check_dim(f.dim())?;
    let mut best = family.eval(alpha, x)?;
    for &n in lattice.denominators() {
        let cap = lattice.power_cap(n, s);
        if cap == 0 {
            continue;
        }
        let op = f.step(lattice.horizon() / n as f64)?;
        let mut y = x.clone();
        for _ in 0..cap {
            y = op.apply(&y)?;
            best = best.max(family.eval(alpha, &y)?);
        }
    }
    Ok(best)
}

/// `||x||^{F_1,s_1; ...; F_k,s_k} = sup_{g in B_{s_k}^{F_k}} ||g x||^{F_1,s_1; ...; F_{k-1},s_{k-1}}`.
pub fn iterated_derived_seminorm(
    family: &SeminormFamily,
    alpha: usize,
    specs: &[(&ChernoffFn, f64)],
    lattice: &LatticeSpec,
    x: &StateVector,
) -> Result<f64> {
    let Some((&(last, s_last), inner)) = specs.split_last() else {
        return Err(Error::InvalidArgument("iterated derived seminorm needs at least one spec"));
    };
    if inner.is_empty() {
        return derived_seminorm(family, alpha, last, s_last, lattice, x);
    }
    if s_last < 0.0 {
        return Err(Error::NegativeTime(s_last));
    }
    if lattice.horizon() < s_last {
        return Err(Error::InvalidArgument("lattice horizon is shorter than s"));
    }
    let mut best = iterated_derived_seminorm(family, alpha, inner, lattice, x)?;
    for &n in lattice.denominators() {
        let cap = lattice.power_cap(n, s_last);
        if cap == 0 {
            continue;
        }
        let op = last.step(lattice.horizon() / n as f64)?;
        let mut y = x.clone();
        for _ in 0..cap {
            y = op.apply(&y)?;
            best = best.max(iterated_derived_seminorm(family, alpha, inner, lattice, &y)?);
        }
    }
    Ok(best)
}
