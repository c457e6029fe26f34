// SPDX-License-Identifier: Apache-2.0

//! Product-formula machinery for operator semigroups on finite discretizations
//! of locally convex spaces.
//!
//! The crate is `no_std` and needs only `alloc`. It provides:
//!
//! * [`lcs`]: state vectors, seminorm families and the seminorms derived from
//!   equicontinuous families of Chernoff-function powers;
//! * [`operators`]: linear operators (dense, diagonal, spectral multipliers,
//!   periodic stencils), adjoints, dissipativity tests, resolvents and the
//!   matrix-exponential reference semigroup;
//! * [`chernoff`]: Chernoff functions, iterated products `F(t/n)^n`, effective
//!   derivative probes, stability estimates, consistency diagnostics and
//!   convergence reports;
//! * [`trotter_kato`]: generator families, core witnesses and the
//!   Trotter-Kato convergence sweep;
//! * [`scenarios`]: reproducible experiment setups (heat, Schrödinger,
//!   dissipative random operators, multiplication semigroup on a disc).

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chernoff;
pub mod error;
pub mod fft;
pub mod lcs;
pub mod linalg;
pub mod operators;
pub mod rate;
pub mod rng;
pub mod scenarios;
pub mod trotter_kato;

pub use chernoff::{ChernoffFn, ConvergenceReport, Stability, StepOperator};
pub use error::{Error, Result};
pub use lcs::{LatticeSpec, Seminorm, SeminormFamily, StateVector};
pub use linalg::DenseMatrix;
pub use operators::{LinOp, SemigroupEvaluator};
pub use rate::{fit_rate, RateFit};
pub use scenarios::Scenario;

/// Complex double-precision scalar used for every coordinate.
pub type C64 = num_complex::Complex64;
