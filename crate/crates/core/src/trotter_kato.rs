// SPDX-License-Identifier: Apache-2.0

//! Families of generators `Z_s` and the equivalence between convergence of
//! the generators on a core and locally uniform convergence of the
//! semigroups `exp(l Z_s) -> exp(l Z_0)`.
//!
//! In finite dimension a core is a spanning set, so the density test is a
//! Gram-matrix rank comparison.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::chernoff::{fit_growth_bound, Stability};
use crate::error::{Error, Result};
use crate::lcs::{LatticeSpec, SeminormFamily, StateVector};
use crate::linalg::{self, DenseMatrix};
use crate::operators::{LinOp, SemigroupEvaluator};
use crate::rate::{self, RATE_WINDOW};
use crate::{rng, C64};

/// Relative eigenvalue tolerance of the Gram-rank test.
pub const GRAM_RANK_TOL: f64 = 1e-8;

/// Default bound on `M exp(a l0)` for the equicontinuity verdict.
pub const EQUICONTINUITY_BUDGET: f64 = 1e6;

/// `{1/2, 1/4, ..., 2^-10}`.
pub fn default_s_grid() -> Vec<f64> {
    (1..=10).map(|k| libm::ldexp(1.0, -k)).collect()
}

type GeneratorBuilder = Arc<dyn Fn(f64) -> Result<LinOp> + Send + Sync>;

/// `s -> Z_s` sampled on a decreasing grid of positive `s`, plus `Z_0`.
#[derive(Clone)]
pub struct GeneratorFamily {
    label: String,
    s_grid: Vec<f64>,
    z0: LinOp,
    at: GeneratorBuilder,
}

impl fmt::Debug for GeneratorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorFamily")
            .field("label", &self.label)
            .field("s_grid", &self.s_grid)
            .field("dim", &self.z0.dim())
            .finish_non_exhaustive()
    }
}

impl GeneratorFamily {
    /// Evaluates `at` on `0` and on every grid point to check dimensions.
    pub fn new(
        label: &str,
        s_grid: &[f64],
        at: impl Fn(f64) -> Result<LinOp> + Send + Sync + 'static,
    ) -> Result<Self> {
        if s_grid.is_empty()
            || s_grid.iter().any(|s| !(*s > 0.0) || !s.is_finite())
            || s_grid.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidArgument("s grid must be positive and strictly decreasing"));
        }
        let z0 = at(0.0)?;
        for &s in s_grid {
            let zs = at(s)?;
            if zs.dim() != z0.dim() {
                return Err(Error::DimensionMismatch { expected: z0.dim(), found: zs.dim() });
            }
        }
        Ok(GeneratorFamily { label: label.to_string(), s_grid: s_grid.to_vec(), z0, at: Arc::new(at) })
    }

    /// `Z_s = Z_0 + s W`.
    pub fn linear(z0: LinOp, w: LinOp, s_grid: &[f64]) -> Result<Self> {
        if z0.dim() != w.dim() {
            return Err(Error::DimensionMismatch { expected: z0.dim(), found: w.dim() });
        }
        let base = z0.to_dense()?;
        let pert = w.to_dense()?;
        Self::new("linear", s_grid, move |s| {
            let mut m = base.clone();
            m.add_scaled_in_place(C64::new(s, 0.0), &pert);
            LinOp::dense(m)
        })
    }

    /// `Z_s = Z_0` for every `s`.
    pub fn constant(z0: LinOp, s_grid: &[f64]) -> Result<Self> {
        Self::new("constant", s_grid, move |_| Ok(z0.clone()))
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    pub fn z0(&self) -> &LinOp {
        &self.z0
    }

    pub fn dim(&self) -> usize {
        self.z0.dim()
    }

    pub fn at(&self, s: f64) -> Result<LinOp> {
        if s == 0.0 {
            return Ok(self.z0.clone());
        }
        let z = (self.at)(s)?;
        if z.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: z.dim() });
        }
        Ok(z)
    }

    pub fn semigroup(&self, s: f64) -> Result<SemigroupEvaluator> {
        SemigroupEvaluator::new(self.at(s)?)
    }
}

type WitnessBuilder = Arc<dyn Fn(f64) -> Result<StateVector> + Send + Sync>;

/// `f` in the domain of `Z_0` with approximants `f_s` in the domain of `Z_s`.
#[derive(Clone)]
pub struct CoreWitness {
    f: StateVector,
    family: WitnessBuilder,
}

impl fmt::Debug for CoreWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoreWitness").field("f", &self.f).finish_non_exhaustive()
    }
}

impl CoreWitness {
    pub fn new(f: StateVector, family: impl Fn(f64) -> Result<StateVector> + Send + Sync + 'static) -> Self {
        CoreWitness { f, family: Arc::new(family) }
    }

    /// `f_s = f`.
    pub fn constant(f: StateVector) -> Self {
        let g = f.clone();
        Self::new(f, move |_| Ok(g.clone()))
    }

    pub fn f(&self) -> &StateVector {
        &self.f
    }

    pub fn at(&self, s: f64) -> Result<StateVector> {
        let v = (self.family)(s)?;
        v.check_dim(self.f.dim())?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquicontinuityReport {
    pub stability: Stability,
    /// `(s, l, ||exp(l Z_s)||)` samples.
    pub samples: Vec<(f64, f64, f64)>,
    /// `M exp(a l0)`.
    pub bound_at_l0: f64,
    pub pass: bool,
}

/// Operator 2-norm: exact for small dimensions, power iteration otherwise.
fn operator_norm(op: &LinOp, iterations: usize, stream: &mut rng::StreamRng) -> Result<f64> {
    let n = op.dim();
    if n <= 64 {
        return Ok(linalg::spectral_norm(&op.to_dense()?));
    }
    let adj = op.adjoint();
    let x = StateVector::from_fn(n, |_| rng::complex_normal(stream))?;
    let mut x = x.scale_real(1.0 / x.norm_l2());
    let mut best = 0.0f64;
    for _ in 0..iterations.max(1) {
        let y = op.apply(&x)?;
        best = best.max(y.norm_l2());
        let z = adj.apply(&y)?;
        let nz = z.norm_l2();
        if nz == 0.0 || !nz.is_finite() {
            break;
        }
        x = z.scale_real(1.0 / nz);
    }
    Ok(best)
}

/// Fits `||exp(l Z_s)|| <= M exp(a l)` over `s` in the grid (and `s = 0`)
/// and the lattice times `l <= l0`. Passes when the fit is finite and
/// `M exp(a l0) <= budget`.
pub fn family_equicontinuity(
    fam: &GeneratorFamily,
    l0: f64,
    lattice: &LatticeSpec,
    trials: usize,
    seed: u64,
    budget: f64,
) -> Result<EquicontinuityReport> {
    if !(l0 > 0.0) || !l0.is_finite() {
        return Err(Error::InvalidArgument("equicontinuity horizon must be positive"));
    }
    let mut times: Vec<f64> = lattice.enumerate(l0).map(|(step, m)| step * m as f64).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| libm::fabs(*a - *b) <= 1e-12 * b.max(1.0));
    let mut stream = rng::stream(seed, "equicontinuity");
    let mut samples = Vec::new();
    for s in core::iter::once(0.0).chain(fam.s_grid().iter().copied()) {
        let sg = fam.semigroup(s)?;
        for &l in &times {
            let norm = match sg.operator_at(l) {
                Ok(op) => operator_norm(&op, trials, &mut stream)?,
                Err(_) => f64::INFINITY,
            };
            samples.push((s, l, norm));
        }
    }
    let finite = samples.iter().all(|x| x.2.is_finite());
    let pairs: Vec<(f64, f64)> = samples.iter().map(|&(_, l, n)| (l, n)).collect();
    let stability = if finite { fit_growth_bound(&pairs) } else { Stability { m: f64::INFINITY, a: f64::INFINITY } };
    let bound_at_l0 = stability.bound(l0);
    let pass = finite && bound_at_l0.is_finite() && bound_at_l0 <= budget;
    Ok(EquicontinuityReport { stability, samples, bound_at_l0, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCheck {
    /// `||f_s - f||_alpha`, indexed `[alpha][s index]`.
    pub approx_errors: Vec<Vec<f64>>,
    /// `||Z_s f_s - Z_0 f||_alpha`, indexed `[alpha][s index]`.
    pub generator_errors: Vec<Vec<f64>>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreReport {
    pub witnesses: Vec<WitnessCheck>,
    pub witness_rank: usize,
    pub combined_rank: usize,
    pub pass: bool,
}

fn tail_ok(curve: &[f64]) -> bool {
    let k = curve.len().min(RATE_WINDOW);
    k < 2 || rate::tail_decreasing(curve, k)
}

/// Checks one witness: both error curves decrease over the last grid points.
pub fn check_witness(fam: &GeneratorFamily, w: &CoreWitness, family: &SeminormFamily) -> Result<WitnessCheck> {
    w.f.check_dim(fam.dim())?;
    let target = fam.z0().apply(&w.f)?;
    let mut approx_errors = vec![Vec::new(); family.len()];
    let mut generator_errors = vec![Vec::new(); family.len()];
    for &s in fam.s_grid() {
        let fs = w.at(s)?;
        let e1 = family.eval_all(&fs.sub(&w.f))?;
        let e2 = family.eval_all(&fam.at(s)?.apply(&fs)?.sub(&target))?;
        for alpha in 0..family.len() {
            approx_errors[alpha].push(e1[alpha]);
            generator_errors[alpha].push(e2[alpha]);
        }
    }
    let pass = approx_errors.iter().chain(&generator_errors).all(|c| tail_ok(c) && c.iter().all(|v| v.is_finite()));
    Ok(WitnessCheck { approx_errors, generator_errors, pass })
}

/// Numerical rank of a set of vectors from the eigenvalues of their Gram
/// matrix (vectors normalized first, zero vectors dropped).
pub fn gram_rank(vectors: &[StateVector]) -> usize {
    let units: Vec<&StateVector> = vectors.iter().filter(|v| v.norm_l2() > 0.0).collect();
    if units.is_empty() {
        return 0;
    }
    let norms: Vec<f64> = units.iter().map(|v| v.norm_l2()).collect();
    let gram = DenseMatrix::from_fn(units.len(), units.len(), |i, j| units[j].inner(units[i]) / (norms[i] * norms[j]));
    let eig = linalg::hermitian_eigenvalues(&gram);
    let top = eig.last().copied().unwrap_or(0.0);
    eig.iter().filter(|&&v| v > GRAM_RANK_TOL * top).count()
}

/// Passes when every witness satisfies its invariant and the witness
/// vectors span the span of `density_basis`.
pub fn core_condition_check(
    fam: &GeneratorFamily,
    witnesses: &[CoreWitness],
    density_basis: &[StateVector],
) -> Result<CoreReport> {
    if witnesses.is_empty() {
        return Err(Error::InvalidArgument("core check needs at least one witness"));
    }
    let family = SeminormFamily::standard(fam.dim());
    let checks = witnesses.iter().map(|w| check_witness(fam, w, &family)).collect::<Result<Vec<_>>>()?;
    let fs: Vec<StateVector> = witnesses.iter().map(|w| w.f.clone()).collect();
    let witness_rank = gram_rank(&fs);
    let mut all = fs;
    for b in density_basis {
        b.check_dim(fam.dim())?;
        all.push(b.clone());
    }
    let combined_rank = gram_rank(&all);
    let pass = checks.iter().all(|c| c.pass) && witness_rank == combined_rank;
    Ok(CoreReport { witnesses: checks, witness_rank, combined_rank, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub s_grid: Vec<f64>,
    /// `sup_l ||exp(l Z_s) f - exp(l Z_0) f||_alpha`, indexed `[alpha][s index]`.
    pub sup_errors: Vec<Vec<f64>>,
    pub pass: bool,
}

/// Sup-over-`l` distance between the perturbed and limit semigroups for
/// each `s`. Passes when every curve decreases over the last grid points.
pub fn semigroup_convergence_sweep(
    fam: &GeneratorFamily,
    f: &StateVector,
    t0: f64,
    l_grid: &[f64],
    family: &SeminormFamily,
) -> Result<SweepReport> {
    f.check_dim(fam.dim())?;
    if l_grid.is_empty() || l_grid.iter().any(|l| !(*l >= 0.0 && *l <= t0)) {
        return Err(Error::InvalidArgument("l grid must be nonempty and inside [0, t0]"));
    }
    let limit = fam.semigroup(0.0)?;
    let reference = l_grid.iter().map(|&l| limit.expm_reference(l, f)).collect::<Result<Vec<_>>>()?;
    let mut sup_errors = vec![vec![0.0f64; fam.s_grid().len()]; family.len()];
    for (j, &s) in fam.s_grid().iter().enumerate() {
        let sg = fam.semigroup(s)?;
        for (&l, r) in l_grid.iter().zip(&reference) {
            let e = family.eval_all(&sg.expm_reference(l, f)?.sub(r))?;
            for alpha in 0..family.len() {
                sup_errors[alpha][j] = sup_errors[alpha][j].max(e[alpha]);
            }
        }
    }
    let pass = sup_errors.iter().all(|c| tail_ok(c));
    Ok(SweepReport { s_grid: fam.s_grid().to_vec(), sup_errors, pass })
}

/// Composite trapezoid approximation of an integral of the semigroup and
/// the defect `||Z I - (T(s2) f - T(s1) f)||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralElement {
    pub value: StateVector,
    pub defect: f64,
}

fn trapezoid(sg: &SemigroupEvaluator, f: &StateVector, s1: f64, s2: f64, panels: usize) -> Result<(StateVector, StateVector, StateVector)> {
    let h = (s2 - s1) / panels as f64;
    let step = sg.operator_at(h)?;
    let start = sg.expm_reference(s1, f)?;
    let mut node = start.clone();
    let mut sum = start.scale_real(0.5);
    for k in 1..=panels {
        node = step.apply(&node)?;
        let w = if k == panels { 0.5 } else { 1.0 };
        sum = sum.axpy(C64::new(w, 0.0), &node);
    }
    Ok((sum.scale_real(h), start, node))
}

/// `int_{s1}^{s2} T(l) f dl` by the composite trapezoid rule on
/// `quadrature_n` panels. Such integrals lie in the generator's domain.
pub fn core_elements_from_integrals(
    sg: &SemigroupEvaluator,
    f: &StateVector,
    s1: f64,
    s2: f64,
    quadrature_n: usize,
) -> Result<IntegralElement> {
    if !(s1 >= 0.0) || !(s2 > s1) || !s2.is_finite() {
        return Err(Error::InvalidArgument("integral bounds need 0 <= s1 < s2"));
    }
    if quadrature_n < 2 {
        return Err(Error::InvalidArgument("quadrature needs at least two panels"));
    }
    f.check_dim(sg.dim())?;
    let (value, start, end) = trapezoid(sg, f, s1, s2, quadrature_n)?;
    let defect = sg.generator().apply(&value)?.sub(&end.sub(&start)).norm_l2();
    Ok(IntegralElement { value, defect })
}

/// Witnesses built from the integrals: `f = int T_0(l) b dl` with
/// `f_s = int T_s(l) b dl`, one per basis vector.
pub fn integral_witnesses(
    fam: &GeneratorFamily,
    basis: &[StateVector],
    s1: f64,
    s2: f64,
    quadrature_n: usize,
) -> Result<Vec<CoreWitness>> {
    let limit = fam.semigroup(0.0)?;
    basis
        .iter()
        .map(|b| {
            let f = core_elements_from_integrals(&limit, b, s1, s2, quadrature_n)?.value;
            let fam = fam.clone();
            let b = b.clone();
            Ok(CoreWitness::new(f, move |s| {
                Ok(core_elements_from_integrals(&fam.semigroup(s)?, &b, s1, s2, quadrature_n)?.value)
            }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rx(v: &[f64]) -> StateVector {
        StateVector::real(v).unwrap()
    }

    fn pair() -> (LinOp, LinOp) {
        (LinOp::real_diagonal(&[-1.0, -2.0]), LinOp::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap())
    }

    fn basis2() -> Vec<StateVector> {
        vec![StateVector::basis(2, 0), StateVector::basis(2, 1)]
    }

    #[test]
    fn default_grid_halves() {
        let g = default_s_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[9], 1.0 / 1024.0);
    }

    #[test]
    fn family_rejects_bad_grid() {
        assert!(GeneratorFamily::constant(LinOp::zero(2), &[0.1, 0.2]).is_err());
        assert!(GeneratorFamily::constant(LinOp::zero(2), &[]).is_err());
        let mixed = GeneratorFamily::new("mixed", &[0.5, 0.25], |s| Ok(if s > 0.3 { LinOp::zero(3) } else { LinOp::zero(2) }));
        assert!(matches!(mixed, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn equicontinuity_examples() {
        let lat = LatticeSpec::new(1.0, &[1, 2, 4, 8]).unwrap();
        let fam = GeneratorFamily::constant(LinOp::real_diagonal(&[-1.0, -1.0]), &default_s_grid()).unwrap();
        let rep = family_equicontinuity(&fam, 1.0, &lat, 10, 1, EQUICONTINUITY_BUDGET).unwrap();
        assert!(rep.pass);
        assert!((rep.stability.m - 1.0).abs() < 1e-8 && rep.stability.a.abs() < 1e-8);

        let (z0, w) = pair();
        let grid: Vec<f64> = default_s_grid();
        let fam = GeneratorFamily::linear(z0, w, &grid).unwrap();
        let rep = family_equicontinuity(&fam, 1.0, &lat, 10, 1, EQUICONTINUITY_BUDGET).unwrap();
        assert!(rep.pass);
        assert!(rep.stability.m <= libm::exp(0.5));
        for &(_, l, n) in &rep.samples {
            assert!(n <= rep.stability.bound(l));
        }

        let blowup = GeneratorFamily::new("scalar", &[1e3, 1.0, 0.5], |s| Ok(LinOp::real_diagonal(&[s, s]))).unwrap();
        assert!(!family_equicontinuity(&blowup, 1.0, &lat, 10, 1, EQUICONTINUITY_BUDGET).unwrap().pass);
    }

    #[test]
    fn core_examples() {
        let (z0, w) = pair();
        let fam = GeneratorFamily::linear(z0, w, &default_s_grid()).unwrap();
        let witnesses: Vec<CoreWitness> = basis2().into_iter().map(CoreWitness::constant).collect();
        assert!(core_condition_check(&fam, &witnesses, &basis2()).unwrap().pass);

        let partial = [CoreWitness::constant(rx(&[1.0, 1.0]))];
        let rep = core_condition_check(&fam, &partial, &basis2()).unwrap();
        assert_eq!((rep.witness_rank, rep.combined_rank), (1, 2));
        assert!(!rep.pass);

        let f = rx(&[1.0, 0.0]);
        let g = f.clone();
        let divergent = [
            CoreWitness::new(f, move |s| Ok(g.scale_real(1.0 + 1.0 / s))),
            CoreWitness::constant(rx(&[0.0, 1.0])),
        ];
        assert!(!core_condition_check(&fam, &divergent, &basis2()).unwrap().pass);
        assert!(core_condition_check(&fam, &[], &basis2()).is_err());
    }

    #[test]
    fn sweep_examples() {
        let (z0, w) = pair();
        let fam_const = GeneratorFamily::constant(z0.clone(), &default_s_grid()).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let sn = SeminormFamily::standard(2);
        let f = rx(&[1.0, 1.0]);
        let rep = semigroup_convergence_sweep(&fam_const, &f, 1.0, &grid, &sn).unwrap();
        assert!(rep.sup_errors.iter().flatten().all(|&e| e == 0.0));
        assert!(rep.pass);

        let fam = GeneratorFamily::linear(z0.clone(), w.clone(), &default_s_grid()).unwrap();
        let rep = semigroup_convergence_sweep(&fam, &f, 1.0, &grid, &sn).unwrap();
        assert!(rep.pass);
        let l2 = &rep.sup_errors[0];
        // Duhamel: error <= s t0 ||W|| sup||e^{lZ0}|| sup||e^{lZ_s}|| ||f|| <= s e ||W|| ||f||
        for (j, &s) in rep.s_grid.iter().enumerate() {
            assert!(l2[j] <= s * core::f64::consts::E * f.norm_l2());
        }
        for win in l2.windows(2).skip(4) {
            let ratio = win[0] / win[1];
            assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
        }

        let z0d = z0.to_dense().unwrap();
        let wd = w.to_dense().unwrap();
        let stuck = GeneratorFamily::new("stuck", &default_s_grid(), move |s| {
            LinOp::dense(if s > 0.0 { z0d.add(&wd) } else { z0d.clone() })
        })
        .unwrap();
        assert!(!semigroup_convergence_sweep(&stuck, &f, 1.0, &grid, &sn).unwrap().pass);
        assert!(semigroup_convergence_sweep(&fam, &f, 1.0, &[2.0], &sn).is_err());
    }

    #[test]
    fn integral_examples() {
        let zero = SemigroupEvaluator::new(LinOp::zero(2)).unwrap();
        let f = rx(&[1.0, -2.0]);
        let el = core_elements_from_integrals(&zero, &f, 0.25, 1.0, 8).unwrap();
        assert!(el.value.sub(&f.scale_real(0.75)).norm_l2() < 1e-15);
        assert_eq!(el.defect, 0.0);

        let decay = SemigroupEvaluator::new(LinOp::real_diagonal(&[-1.0])).unwrap();
        let one = rx(&[1.0]);
        let mut prev: Option<f64> = None;
        for n in [8, 16, 32, 64, 128] {
            let el = core_elements_from_integrals(&decay, &one, 0.0, 1.0, n).unwrap();
            // trapezoid oracle: h/2 (1 + e^{-1}) + h sum_{k=1}^{n-1} e^{-kh}
            let h = 1.0 / n as f64;
            let mut oracle = 0.5 * h * (1.0 + libm::exp(-1.0));
            for k in 1..n {
                oracle += h * libm::exp(-(k as f64) * h);
            }
            assert!((el.value.coords()[0].re - oracle).abs() < 1e-14);
            assert!((el.value.coords()[0].re - (1.0 - libm::exp(-1.0))).abs() < 0.06 / (n * n) as f64);
            if let Some(p) = prev {
                let ratio = p / el.defect;
                assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
            }
            prev = Some(el.defect);
        }
        assert!(core_elements_from_integrals(&decay, &one, 1.0, 1.0, 4).is_err());
        assert!(core_elements_from_integrals(&decay, &one, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn integral_witnesses_pass_core_check() {
        let (z0, w) = pair();
        let fam = GeneratorFamily::linear(z0, w, &default_s_grid()).unwrap();
        let witnesses = integral_witnesses(&fam, &basis2(), 0.0, 1.0, 32).unwrap();
        let rep = core_condition_check(&fam, &witnesses, &basis2()).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
