// SPDX-License-Identifier: Apache-2.0

//! Radix-2 FFT for periodic grids whose size is a power of two.

use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::C64;

/// Forward transform `X_k = sum_j x_j e^{-2 pi i jk/N}` in place.
pub fn forward(buf: &mut [C64]) -> Result<()> {
    transform(buf, false)
}

/// Inverse transform, normalized by `1/N`, in place.
pub fn inverse(buf: &mut [C64]) -> Result<()> {
    transform(buf, true)?;
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

/// Signed integer frequency for DFT index `j` on an `n`-point grid.
pub fn signed_frequency(j: usize, n: usize) -> f64 {
    if j < n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

fn transform(buf: &mut [C64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let angle = sign * 2.0 * PI * (k as f64) / (len as f64);
                let w = C64::new(libm::cos(angle), libm::sin(angle));
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn naive_dft(x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(C64::new(0.0, 0.0), |acc, (j, v)| {
                    let ang = -2.0 * PI * (j * k) as f64 / n as f64;
                    acc + v * C64::new(libm::cos(ang), libm::sin(ang))
                })
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<C64> = (0..16).map(|j| C64::new(libm::sin(j as f64), (j % 3) as f64)).collect();
        let mut y = x.clone();
        forward(&mut y).unwrap();
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-12);
        }
        inverse(&mut y).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut x = [C64::new(0.0, 0.0); 6];
        assert_eq!(forward(&mut x), Err(Error::NotPowerOfTwo(6)));
    }
}
