// SPDX-License-Identifier: Apache-2.0

//! Empirical convergence rates and monotone-tail checks.

use core::fmt;

/// Number of trailing points used by [`fit_rate`].
pub const RATE_WINDOW: usize = 4;

/// Errors at or below this level count as the machine-precision floor.
pub const ERROR_FLOOR: f64 = 1e-14;

/// Least-squares fit of `log(error) = c + slope * log(1/n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Maximum absolute misfit in log space.
    pub residual: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
    /// Flat tail or poor log-linear fit.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFlag {
    TooFewPoints { found: usize },
    LengthMismatch,
    NotIncreasing,
    /// An error value was not positive, typically the machine-precision floor.
    NonPositive { index: usize },
}

impl fmt::Display for RateFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFlag::TooFewPoints { found } => write!(f, "need at least {RATE_WINDOW} points, found {found}"),
            RateFlag::LengthMismatch => f.write_str("errors and n values differ in length"),
            RateFlag::NotIncreasing => f.write_str("n values must be strictly increasing"),
            RateFlag::NonPositive { index } => write!(f, "nonpositive error at position {index}"),
        }
    }
}

/// Slope of `log(error)` against `log(1/n)` over the last [`RATE_WINDOW`]
/// points. A first-order method yields slope 1.
pub fn fit_rate(errors: &[f64], ns: &[u64]) -> Result<RateFit, RateFlag> {
    fit_rate_window(errors, ns, RATE_WINDOW)
}

pub fn fit_rate_window(errors: &[f64], ns: &[u64], window: usize) -> Result<RateFit, RateFlag> {
    if errors.len() != ns.len() {
        return Err(RateFlag::LengthMismatch);
    }
    if errors.len() < window || window < 3 {
        return Err(RateFlag::TooFewPoints { found: errors.len() });
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RateFlag::NotIncreasing);
    }
    let start = errors.len() - window;
    if let Some(i) = errors[start..].iter().position(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(RateFlag::NonPositive { index: start + i });
    }
    let xs: alloc::vec::Vec<f64> = ns[start..].iter().map(|&n| -libm::log(n as f64)).collect();
    let ys: alloc::vec::Vec<f64> = errors[start..].iter().map(|&e| libm::log(e)).collect();
    let k = window as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let misfits = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x));
    let (residual, ssr) = misfits.fold((0.0f64, 0.0), |(mx, ss), r| (mx.max(libm::fabs(r)), ss + r * r));
    let se = libm::sqrt(ssr / (k - 2.0) / sxx);
    let half = student_t_975(window - 2) * se;
    let flagged = libm::fabs(slope) < 0.1 || residual > 0.5;
    Ok(RateFit { slope, intercept, residual, ci_low: slope - half, ci_high: slope + half, points: window, flagged })
}

/// Two-sided 95% Student-t quantile.
fn student_t_975(df: usize) -> f64 {
    const TABLE: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    match df {
        0 => f64::INFINITY,
        1..=10 => TABLE[df - 1],
        _ => 1.96,
    }
}

/// True when each of the last `k` values is strictly below its predecessor,
/// except that values already at the [`ERROR_FLOOR`] may stay there.
pub fn tail_decreasing(values: &[f64], k: usize) -> bool {
    if values.len() < k || k < 2 {
        return false;
    }
    values[values.len() - k..].windows(2).all(|w| w[1] < w[0] || (w[0] <= ERROR_FLOOR && w[1] <= ERROR_FLOOR))
}

/// Like [`tail_decreasing`] but allows ties.
pub fn tail_nonincreasing(values: &[f64], k: usize) -> bool {
    if values.len() < k || k < 2 {
        return false;
    }
    values[values.len() - k..].windows(2).all(|w| w[1] <= w[0] || w[1] <= ERROR_FLOOR)
}
