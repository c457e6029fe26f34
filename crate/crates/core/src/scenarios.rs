// SPDX-License-Identifier: Apache-2.0

//! Built-in experiment setups: heat equation with a potential, Schrödinger
//! splitting, random dissipative matrices, and the multiplication semigroup
//! `T(s) f(z) = e^{sz} f(z)` on a disc grid, whose generator `z` has a
//! resolvent range that is not dense.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::chernoff::{self, ChernoffFn, Reference, Stability};
use crate::error::{Error, Result};
use crate::lcs::{ScalarField, Seminorm, SeminormFamily, StateVector};
use crate::linalg::{self, DenseMatrix};
use crate::operators::{ExpMethod, LinOp, SemigroupEvaluator};
use crate::{rng, C64};

/// Names accepted by configuration files.
pub const BUILTIN_NAMES: [&str; 4] = ["heat", "schrodinger", "dissipative", "mult-example"];

/// Tolerance of the semigroup-law self-check run on every built scenario.
pub const SEMIGROUP_LAW_TOL: f64 = 1e-10;

/// A named, immutable experiment setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    /// Length of the periodic domain, or the disc radius.
    pub extent: f64,
    pub field: ScalarField,
    /// Reference semigroup `exp(tZ)`.
    pub semigroup: SemigroupEvaluator,
    /// Chernoff functions sharing the derivative `Z`; the first is primary.
    pub chernoff: Vec<ChernoffFn>,
    pub family: SeminormFamily,
    pub initial: StateVector,
    pub t0: f64,
    pub n_grid: Vec<u64>,
    pub t_grid: Vec<f64>,
    /// Whether the convergence suite is expected to pass.
    pub expect_convergence: bool,
    /// Present for the multiplication example only.
    pub disc: Option<DiscGrid>,
}

impl Scenario {
    pub fn primary(&self) -> &ChernoffFn {
        &self.chernoff[0]
    }

    pub fn reference(&self) -> Reference<'_> {
        Reference::Semigroup(&self.semigroup)
    }

    pub fn generator(&self) -> &LinOp {
        self.semigroup.generator()
    }

    /// `F(0) = I` for every Chernoff function and
    /// `T(a + b) h = T(a) T(b) h` for the reference.
    pub fn validate(&self) -> Result<()> {
        for f in &self.chernoff {
            if f.dim() != self.dim || f.eval(0.0, &self.initial)? != self.initial {
                return Err(Error::InvalidArgument("Chernoff function does not start at the identity"));
            }
        }
        let (a, b) = (0.5 * self.t0, 0.25 * self.t0);
        let joint = self.semigroup.expm_reference(a + b, &self.initial)?;
        let split = self.semigroup.expm_reference(a, &self.semigroup.expm_reference(b, &self.initial)?)?;
        if joint.sub(&split).norm_l2() > SEMIGROUP_LAW_TOL * (1.0 + self.initial.norm_l2()) {
            return Err(Error::InvalidArgument("reference semigroup violates the semigroup law"));
        }
        Ok(())
    }

    fn finish(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

fn geometric_n_grid(from: u64, to: u64) -> Vec<u64> {
    core::iter::successors(Some(from), |n| Some(n * 2)).take_while(|&n| n <= to).collect()
}

fn default_t_grid(t0: f64) -> Vec<f64> {
    (1..=4).map(|k| t0 * k as f64 / 4.0).collect()
}

/// `(1, max Re symbol)`: exact for normal generators.
fn normal_stability(symbol: &[C64]) -> Stability {
    let a = symbol.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    Stability { m: 1.0, a: a.max(0.0) }
}

/// Sample points `2 pi j / n` of the periodic domain.
pub fn periodic_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// `1 + cos x`.
pub fn default_heat_potential(n: usize) -> Vec<f64> {
    periodic_grid(n).into_iter().map(|x| 1.0 + libm::cos(x)).collect()
}

/// Height 5 on `|x - pi| < pi/4`.
pub fn default_barrier(n: usize) -> Vec<f64> {
    periodic_grid(n).into_iter().map(|x| if libm::fabs(x - PI) < PI / 4.0 { 5.0 } else { 0.0 }).collect()
}

/// Gaussian centred at `pi` with width `0.5`, unit l2 norm.
pub fn gaussian_initial(n: usize) -> Result<StateVector> {
    let v = StateVector::from_fn(n, |j| {
        let x = 2.0 * PI * j as f64 / n as f64 - PI;
        C64::new(libm::exp(-x * x / (2.0 * 0.25)), 0.0)
    })?;
    Ok(v.scale_real(1.0 / v.norm_l2()))
}

fn check_grid(n: usize, potential: &[f64]) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if potential.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: potential.len() });
    }
    if potential.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("potential samples must be finite"));
    }
    Ok(())
}

fn evaluator(op: LinOp) -> Result<SemigroupEvaluator> {
    let st = match &op {
        LinOp::Diagonal(d) => Some(normal_stability(d)),
        LinOp::Spectral(m) => Some(normal_stability(m.symbol())),
        _ => None,
    };
    let sg = SemigroupEvaluator::new(op)?;
    Ok(match st {
        Some(st) => sg.with_stability(st),
        None => sg,
    })
}

/// `u' = u'' - V u` on `[0, 2 pi)`, split as Laplacian and potential.
pub fn build_heat_potential(n: usize, potential: &[f64]) -> Result<Scenario> {
    check_grid(n, potential)?;
    let extent = 2.0 * PI;
    let a = LinOp::spectral_laplacian(n, extent)?;
    let b = LinOp::real_diagonal(&potential.iter().map(|v| -v).collect::<Vec<_>>());
    let z = LinOp::sum(vec![a.clone(), b.clone()])?;
    let lie = chernoff::lie_trotter(evaluator(a)?, evaluator(b)?)?;
    let semigroup = SemigroupEvaluator::with_method(z.clone(), ExpMethod::DenseExpm)?;
    let semigroup = match lie.stability() {
        Some(st) => semigroup.with_stability(st),
        None => semigroup,
    };
    let euler = chernoff::implicit_euler(z)?;
    let t0 = 1.0;
    Scenario {
        name: "heat".to_string(),
        dim: n,
        extent,
        field: ScalarField::Real,
        chernoff: vec![lie, euler, ChernoffFn::exact(semigroup.clone())],
        semigroup,
        family: SeminormFamily::standard(n),
        initial: gaussian_initial(n)?,
        t0,
        n_grid: geometric_n_grid(16, 1024),
        t_grid: default_t_grid(t0),
        expect_convergence: true,
        disc: None,
    }
    .finish()
}

/// `u' = i u'' - i V u`, split into two unitary factors.
pub fn build_schrodinger(n: usize, potential: &[f64]) -> Result<Scenario> {
    check_grid(n, potential)?;
    let extent = 2.0 * PI;
    let i = C64::new(0.0, 1.0);
    let a = LinOp::spectral_laplacian(n, extent)?.scaled(i);
    let b = LinOp::Diagonal(potential.iter().map(|&v| -i * v).collect());
    let z = LinOp::sum(vec![a.clone(), b.clone()])?;
    let lie = chernoff::lie_trotter(evaluator(a)?, evaluator(b)?)?;
    let semigroup = SemigroupEvaluator::with_method(z.clone(), ExpMethod::DenseExpm)?.with_stability(Stability::CONTRACTION);
    let euler = chernoff::implicit_euler(z)?;
    let t0 = 0.5;
    Scenario {
        name: "schrodinger".to_string(),
        dim: n,
        extent,
        field: ScalarField::Complex,
        chernoff: vec![lie, euler, ChernoffFn::exact(semigroup.clone())],
        semigroup,
        family: SeminormFamily::standard(n),
        initial: gaussian_initial(n)?,
        t0,
        n_grid: geometric_n_grid(16, 1024),
        t_grid: default_t_grid(t0),
        expect_convergence: true,
        disc: None,
    }
    .finish()
}

/// Skew-adjoint and positive semidefinite parts of a random dissipative
/// matrix, each scaled to operator norm 1.
pub fn random_dissipative_parts(dim: usize, seed: u64) -> Result<(DenseMatrix, DenseMatrix)> {
    if dim < 2 {
        return Err(Error::InvalidArgument("dissipative scenario needs dim >= 2"));
    }
    let mut stream = rng::stream(seed, "dissipative");
    let g = DenseMatrix::from_fn(dim, dim, |_, _| rng::complex_normal(&mut stream));
    let b = DenseMatrix::from_fn(dim, dim, |_, _| rng::complex_normal(&mut stream));
    let s = DenseMatrix::from_fn(dim, dim, |i, j| (g[(i, j)] - g[(j, i)].conj()) * 0.5);
    let p = b.matmul(&b.adjoint());
    let unit = |m: DenseMatrix| {
        let norm = linalg::spectral_norm(&m);
        if norm > 0.0 { m.scale_real(1.0 / norm) } else { m }
    };
    Ok((unit(s), unit(p)))
}

/// `Z = S - P` with `S` skew-adjoint and `P` positive semidefinite.
pub fn build_dissipative_from(s: DenseMatrix, p: DenseMatrix, seed: u64) -> Result<Scenario> {
    let dim = s.rows();
    if !s.is_square() || !p.is_square() || p.rows() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: p.rows() });
    }
    let z = LinOp::dense(s.sub(&p))?;
    let semigroup = SemigroupEvaluator::new(z.clone())?.with_stability(Stability::CONTRACTION);
    let euler = chernoff::implicit_euler(z)?;
    if euler.stability() != Some(Stability::CONTRACTION) {
        return Err(Error::InvalidArgument("generator is not dissipative"));
    }
    let lie = chernoff::lie_trotter(
        SemigroupEvaluator::new(LinOp::dense(s)?)?.with_stability(Stability::CONTRACTION),
        SemigroupEvaluator::new(LinOp::dense(p.scale_real(-1.0))?)?.with_stability(Stability::CONTRACTION),
    )?;
    let mut stream = rng::stream(seed, "initial");
    let h = StateVector::from_fn(dim, |_| rng::complex_normal(&mut stream))?;
    let t0 = 1.0;
    Scenario {
        name: "dissipative".to_string(),
        dim,
        extent: 0.0,
        field: ScalarField::Complex,
        chernoff: vec![euler, lie, ChernoffFn::exact(semigroup.clone())],
        semigroup,
        family: SeminormFamily::standard(dim),
        initial: h.scale_real(1.0 / h.norm_l2()),
        t0,
        n_grid: geometric_n_grid(16, 1024),
        t_grid: default_t_grid(t0),
        expect_convergence: true,
        disc: None,
    }
    .finish()
}

pub fn build_dissipative_random(dim: usize, seed: u64) -> Result<Scenario> {
    let (s, p) = random_dissipative_parts(dim, seed)?;
    build_dissipative_from(s, p, seed)
}

/// Polar sampling of the closed disc `|z| <= radius`: the origin followed by
/// `rings` circles of radius `radius * j / rings`, each with `angles` points
/// starting on the positive real axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscGrid {
    pub radius: f64,
    pub rings: usize,
    pub angles: usize,
    nodes: Vec<C64>,
}

impl DiscGrid {
    pub fn new(radius: f64, rings: usize, angles: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || rings == 0 || angles == 0 {
            return Err(Error::InvalidArgument("disc grid needs a positive radius, rings and angles"));
        }
        let mut nodes = Vec::with_capacity(1 + rings * angles);
        nodes.push(C64::new(0.0, 0.0));
        for j in 1..=rings {
            let r = radius * j as f64 / rings as f64;
            for k in 0..angles {
                let theta = 2.0 * PI * k as f64 / angles as f64;
                nodes.push(C64::new(r * libm::cos(theta), r * libm::sin(theta)));
            }
        }
        Ok(DiscGrid { radius, rings, angles, nodes })
    }

    pub fn nodes(&self) -> &[C64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of the nodes with `|z| <= r`.
    pub fn indices_within(&self, r: f64) -> Vec<usize> {
        let r = r * (1.0 + 1e-12);
        self.nodes.iter().enumerate().filter(|(_, z)| z.norm() <= r).map(|(i, _)| i).collect()
    }

    /// Index of and distance to the node nearest `lambda`.
    pub fn nearest(&self, lambda: C64) -> (usize, f64) {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - lambda).norm()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Samples of `f` at the nodes.
    pub fn sample(&self, f: impl Fn(C64) -> C64) -> Result<StateVector> {
        StateVector::new(self.nodes.iter().map(|&z| f(z)).collect())
    }
}

/// `Z f(z) = z f(z)` and `T(s) f(z) = e^{sz} f(z)` on a disc grid, with one
/// sup seminorm per radius.
pub fn build_multiplication_example(r_list: &[f64], rings: usize, angles: usize) -> Result<Scenario> {
    if r_list.is_empty() || r_list.iter().any(|r| !(*r > 0.0)) || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be positive and increasing"));
    }
    let radius = *r_list.last().unwrap();
    let disc = DiscGrid::new(radius, rings, angles)?;
    let members = r_list
        .iter()
        .map(|&r| (format!("sup|z|<={r}"), Seminorm::SupOn(disc.indices_within(r))))
        .collect();
    let family = SeminormFamily::new(disc.len(), members)?;
    let z = LinOp::Diagonal(disc.nodes().to_vec());
    let semigroup = SemigroupEvaluator::new(z)?.with_stability(Stability { m: 1.0, a: radius });
    let t0 = 1.0;
    Scenario {
        name: "mult-example".to_string(),
        dim: disc.len(),
        extent: radius,
        field: ScalarField::Complex,
        chernoff: vec![ChernoffFn::exact(semigroup.clone())],
        semigroup,
        family,
        initial: disc.sample(|_| C64::new(1.0, 0.0))?,
        t0,
        n_grid: geometric_n_grid(1, 8),
        t_grid: default_t_grid(t0),
        expect_convergence: true,
        disc: Some(disc),
    }
    .finish()
}

/// Lower-bound certificate that `f` is far from the range of `lambda I - Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeGap {
    /// `min_c ||(lambda - z) g_c - f||_r`.
    pub min_defect: f64,
    pub defects: Vec<f64>,
    /// `|f(lambda) - f(z*)| + |lambda - z*| max_c |g_c(z*)|` with `z*` the
    /// node nearest `lambda`.
    pub eps_grid: f64,
    /// `|f(lambda)| - eps_grid`; every defect is at least this.
    pub lower_bound: f64,
    pub nearest_node: usize,
}

/// Evaluates `||(lambda I - Z) g - f||_r` for each candidate `g`.
///
/// `f_at_lambda` is `f(lambda)` when known; otherwise the sample at the
/// nearest node stands in for it.
pub fn resolvent_range_gap(
    disc: &DiscGrid,
    lambda: C64,
    f: &StateVector,
    f_at_lambda: Option<C64>,
    candidates: &[StateVector],
    r: f64,
) -> Result<RangeGap> {
    if lambda.norm() > r || r > disc.radius * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument("need |lambda| <= r <= disc radius"));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("range gap needs at least one candidate"));
    }
    f.check_dim(disc.len())?;
    let idx = disc.indices_within(r);
    let (nearest, dist) = disc.nearest(lambda);
    let mut defects = Vec::with_capacity(candidates.len());
    let mut g_max = 0.0f64;
    for g in candidates {
        g.check_dim(disc.len())?;
        g_max = g_max.max(g.coords()[nearest].norm());
        let d = idx
            .iter()
            .map(|&i| ((lambda - disc.nodes()[i]) * g.coords()[i] - f.coords()[i]).norm())
            .fold(0.0, f64::max);
        defects.push(d);
    }
    let f_star = f.coords()[nearest];
    let f_lambda = f_at_lambda.unwrap_or(f_star);
    let eps_grid = (f_lambda - f_star).norm() + dist * g_max;
    let min_defect = defects.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RangeGap { min_defect, defects, eps_grid, lower_bound: f_lambda.norm() - eps_grid, nearest_node: nearest })
}

/// Random polynomials `sum_k c_k z^k / k!` with complex normal `c_k` and
/// degrees up to `max_degree`, sampled on the grid.
pub fn random_polynomial_candidates(disc: &DiscGrid, count: usize, max_degree: usize, seed: u64) -> Result<Vec<StateVector>> {
    let mut stream = rng::stream(seed, "range-gap");
    (0..count)
        .map(|_| {
            let degree = (rng::uniform(&mut stream) * (max_degree + 1) as f64) as usize;
            let mut coeffs = Vec::with_capacity(degree + 1);
            let mut fact = 1.0;
            for k in 0..=degree {
                if k > 0 {
                    fact *= k as f64;
                }
                coeffs.push(rng::complex_normal(&mut stream) / fact);
            }
            disc.sample(|z| coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c))
        })
        .collect()
}
