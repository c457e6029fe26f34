// SPDX-License-Identifier: Apache-2.0

use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch { expected: usize, found: usize },
    IndexOutOfRange { index: usize, len: usize },
    /// A non-finite coordinate appeared after the given product step.
    NonFinite { step: usize },
    NegativeTime(f64),
    SingularMatrix,
    SingularResolvent { s: f64 },
    ResidualTooLarge { s: f64, residual: f64 },
    MissingInnerProduct,
    NotPowerOfTwo(usize),
    InvalidArgument(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "seminorm index {index} out of range for family of size {len}")
            }
            Error::NonFinite { step } => write!(f, "non-finite value after product step {step}"),
            Error::NegativeTime(t) => write!(f, "negative time {t} rejected"),
            Error::SingularMatrix => f.write_str("matrix is singular to working precision"),
            Error::SingularResolvent { s } => write!(f, "I - sL is singular at s = {s}"),
            Error::ResidualTooLarge { s, residual } => {
                write!(f, "resolvent residual {residual:e} too large at s = {s}")
            }
            Error::MissingInnerProduct => {
                f.write_str("seminorm family carries no l2 member, inner product unavailable")
            }
            Error::NotPowerOfTwo(n) => write!(f, "grid size {n} is not a power of two"),
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
        }
    }
}

impl core::error::Error for Error {}
