//! Scalar arithmetic shared by plain simulation and tape-tracked training.
//!
//! Every numerical kernel in the crate (thermodynamics, kinetics, the reactor
//! right-hand side, RK4, the networks) is written once against [`Real`]. With
//! `f64` it runs at full speed; with [`crate::autodiff::Var`] every operation is
//! recorded for a reverse sweep.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Threshold beyond which `softplus` switches to its asymptotic branches.
pub const SOFTPLUS_CUTOFF: f64 = 30.0;

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// An untracked constant.
    fn cst(x: f64) -> Self;
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    /// `self^p` for a constant exponent. `0^0 = 1`.
    fn powf(self, p: f64) -> Self;
    /// `self^p` with a variable exponent, `self > 0`.
    fn pow(self, p: Self) -> Self {
        (self.ln() * p).exp()
    }
    /// `ln(1 + e^x)` with overflow-safe tails.
    fn softplus(self) -> Self;
    /// `max(x, 0)`; subgradient 0 at the kink.
    fn relu(self) -> Self;
    /// Clamp into `[lo, hi]`; zero slope outside.
    fn clamp(self, lo: f64, hi: f64) -> Self;

    fn dot(w: &[Self], x: &[Self]) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let mut acc = Self::cst(0.0);
        for (a, b) in w.iter().zip(x) {
            acc = acc + *a * *b;
        }
        acc
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().fold(Self::cst(0.0), |acc, x| acc + *x)
    }

    fn is_finite(self) -> bool {
        self.value().is_finite()
    }
}

pub(crate) fn softplus_f64(x: f64) -> f64 {
    if x > SOFTPLUS_CUTOFF {
        x + (-x).exp().ln_1p()
    } else if x < -SOFTPLUS_CUTOFF {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn powf_f64(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        x.powf(p)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        powf_f64(self, p)
    }
    #[inline]
    fn pow(self, p: Self) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    #[inline]
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    #[inline]
    fn clamp(self, lo: f64, hi: f64) -> Self {
        f64::clamp(self, lo, hi)
    }
    fn dot(w: &[Self], x: &[Self]) -> Self {
        w.iter().zip(x).map(|(a, b)| a * b).sum()
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_branches_are_continuous() {
        for x in [-SOFTPLUS_CUTOFF, SOFTPLUS_CUTOFF] {
            let lo = softplus_f64(x - 1e-12);
            let hi = softplus_f64(x + 1e-12);
            assert!((lo - hi).abs() <= 1e-11 * hi.abs().max(1e-300));
        }
        assert_eq!(softplus_f64(0.0), std::f64::consts::LN_2);
        assert!(softplus_f64(800.0).is_finite());
        assert!(softplus_f64(-800.0) >= 0.0);
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        assert_eq!(0.0_f64.powf(0.0), 1.0);
        assert_eq!(Real::powf(0.0_f64, 0.0), 1.0);
        assert_eq!(Real::powf(0.0_f64, 2.0), 0.0);
    }
}
