//! Moreau–Yosida penalties of the indicator of `K = [-1, 1]` and of `|y|`.

use crate::error::{invalid, Result};

/// Sharpness `n >= 1` of the Moreau–Yosida approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PenalizationLevel(u32);

impl PenalizationLevel {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(invalid("penalization level n must be >= 1"));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

/// Projection onto `K = [-1, 1]`.
#[inline]
pub fn proj_k(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `chi_n(x) = (n/2) |x - proj_K(x)|^2`.
#[inline]
pub fn chi_n(x: f64, n: f64) -> f64 {
    let d = x - proj_k(x);
    0.5 * n * d * d
}

/// Exact derivative of [`chi_n`]; zero on `K` (including the kinks `±1`).
#[inline]
pub fn chi_n_prime(x: f64, n: f64) -> f64 {
    n * (x - proj_k(x))
}

/// Smoothed absolute value: `|y| - 1/(2n)` when `n|y| >= 1`, `(n/2) y^2` otherwise.
#[inline]
pub fn a_n(y: f64, n: f64) -> f64 {
    if n * y.abs() >= 1.0 {
        y.abs() - 0.5 / n
    } else {
        0.5 * n * y * y
    }
}

/// Derivative of [`a_n`]. At `|y| = 1/n` both branches give `sign(y)`; the
/// quadratic branch `n y` is used there.
#[inline]
pub fn a_n_prime(y: f64, n: f64) -> f64 {
    if n * y.abs() > 1.0 {
        y.signum()
    } else {
        n * y
    }
}
