//! Numerically stable scalar primitives.
//!
//! Everything here works in `f64`. Loss code stays in logit space and calls
//! [`softplus`] directly; the checked wrappers reject non-finite input and are
//! meant for callers holding untrusted values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round-off slack accepted when constructing a [`Probability`].
const PROBABILITY_SLACK: f64 = 1e-12;

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    /// Values outside `[0, 1]` by at most `1e-12` are clamped; anything further
    /// out (or NaN) is rejected.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("probability {value} is not finite")));
        }
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else if value > -PROBABILITY_SLACK && value < 1.0 + PROBABILITY_SLACK {
            Ok(Probability(value.clamp(0.0, 1.0)))
        } else {
            Err(Error::InvalidInput(format!("probability {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// A finite raw score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Logit(f64);

impl Logit {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Logit(value))
        } else {
            Err(Error::InvalidInput(format!("logit {value} is not finite")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Logit {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Logit::new(value)
    }
}

impl From<Logit> for f64 {
    fn from(z: Logit) -> f64 {
        z.0
    }
}

/// `1 / (1 + exp(-z))` without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` as `max(z, 0) + log1p(exp(-|z|))`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `log(sigmoid(z)) = -softplus(-z)`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

pub fn stable_sigmoid(z: Logit) -> Probability {
    // sigmoid of a finite value is always in [0, 1]
    Probability(sigmoid(z.value()))
}

pub fn checked_sigmoid(z: f64) -> Result<Probability> {
    Ok(stable_sigmoid(Logit::new(z)?))
}

pub fn checked_log_sigmoid(z: f64) -> Result<f64> {
    Ok(log_sigmoid(Logit::new(z)?.value()))
}

pub fn checked_softplus(z: f64) -> Result<f64> {
    Ok(softplus(Logit::new(z)?.value()))
}

/// Log-odds of a probability strictly inside `(0, 1)`.
#[inline]
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_examples() {
        assert_eq!(checked_sigmoid(0.0).unwrap().value(), 0.5);
        // 1/(1+e^-0.5), 40-digit reference
        assert_relative_eq!(checked_sigmoid(0.5).unwrap().value(), 0.622_459_331_201_854_6, max_relative = 1e-15);
        let tiny = checked_sigmoid(-50.0).unwrap().value();
        assert!(tiny > 0.0 && tiny < 2e-22);
        assert!(checked_sigmoid(f64::NAN).is_err());
        assert!(checked_sigmoid(f64::INFINITY).is_err());
        let big = sigmoid(700.0);
        assert_eq!(big, 1.0);
        assert!(sigmoid(-700.0) > 0.0);
    }

    #[test]
    fn log_sigmoid_examples() {
        assert_relative_eq!(checked_log_sigmoid(0.0).unwrap(), -std::f64::consts::LN_2);
        assert_relative_eq!(checked_log_sigmoid(30.0).unwrap(), -9.357_622_968_839_737e-14, max_relative = 1e-12);
        assert!((checked_log_sigmoid(-30.0).unwrap() + 30.0).abs() < 1e-12);
        assert!(log_sigmoid(-800.0).is_finite());
        assert!(checked_log_sigmoid(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn softplus_examples() {
        assert_eq!(checked_softplus(0.0).unwrap(), std::f64::consts::LN_2);
        assert_eq!(checked_softplus(100.0).unwrap(), 100.0);
        assert_relative_eq!(checked_softplus(-2.0).unwrap(), 0.126_928_011_042_972_5, max_relative = 1e-15);
        assert!(checked_softplus(f64::NAN).is_err());
    }

    #[test]
    fn probability_clamps_only_round_off() {
        assert_eq!(Probability::new(1.0 + 1e-13).unwrap().value(), 1.0);
        assert_eq!(Probability::new(-1e-13).unwrap().value(), 0.0);
        assert!(Probability::new(1.0 + 1e-9).is_err());
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &p in &[1e-6, 0.2, 0.5, 0.9, 1.0 - 1e-6] {
            assert_relative_eq!(sigmoid(logit(p)), p, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(z in -700.0f64..700.0) {
            prop_assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn log_sigmoid_is_negated_softplus(z in -700.0f64..700.0) {
            let v = log_sigmoid(z);
            prop_assert_eq!(v.to_bits(), (-softplus(-z)).to_bits());
            prop_assert!(v <= 0.0);
        }

        #[test]
        fn sigmoid_monotone(a in -700.0f64..700.0, b in -700.0f64..700.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(sigmoid(lo) <= sigmoid(hi));
        }
    }
}
