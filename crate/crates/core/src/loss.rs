//! Point losses `l(y, yhat)` and their derivative in `yhat`.

use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(y - yhat)^2 / 2`
    Squared,
    /// `log(1 + exp(-y * yhat))` with labels in `{-1, +1}`.
    Logistic,
}

impl LossKind {
    pub fn value(self, y: f64, yhat: f64) -> Result<f64> {
        match self {
            LossKind::Squared => Ok(0.5 * (y - yhat) * (y - yhat)),
            LossKind::Logistic => {
                check_label(y)?;
                Ok(softplus(-y * yhat))
            }
        }
    }

    /// Derivative of the loss with respect to the prediction `yhat`.
    pub fn grad2(self, y: f64, yhat: f64) -> Result<f64> {
        match self {
            LossKind::Squared => Ok(yhat - y),
            LossKind::Logistic => {
                check_label(y)?;
                // -y / (1 + exp(y yhat)) = -y * sigmoid(-y yhat)
                Ok(-y * sigmoid(-y * yhat))
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown loss {other:?}"
            ))),
        }
    }
}

fn check_label(y: f64) -> Result<()> {
    if y == 1.0 || y == -1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLabel(y))
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn values() {
        assert_eq!(LossKind::Squared.value(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(LossKind::Squared.value(2.0, 3.0).unwrap(), 0.5);
        let l = LossKind::Logistic.value(1.0, 0.0).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gradients() {
        assert_eq!(LossKind::Squared.grad2(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(LossKind::Squared.grad2(2.0, 3.0).unwrap(), 1.0);
        assert_eq!(LossKind::Logistic.grad2(1.0, 0.0).unwrap(), -0.5);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        assert_eq!(
            LossKind::Logistic.value(0.0, 1.0),
            Err(Error::InvalidLabel(0.0))
        );
        assert_eq!(
            LossKind::Logistic.grad2(2.0, 1.0),
            Err(Error::InvalidLabel(2.0))
        );
    }

    #[test]
    fn logistic_is_overflow_safe() {
        let big = LossKind::Logistic.value(1.0, -1000.0).unwrap();
        assert!((big - 1000.0).abs() < 1e-9);
        assert!(LossKind::Logistic.value(1.0, 1000.0).unwrap() >= 0.0);
        assert!(LossKind::Logistic.grad2(-1.0, 1000.0).unwrap().is_finite());
    }

    #[test]
    fn parses() {
        assert_eq!("squared".parse::<LossKind>().unwrap(), LossKind::Squared);
        assert_eq!("logistic".parse::<LossKind>().unwrap(), LossKind::Logistic);
        assert!("hinge".parse::<LossKind>().is_err());
    }

    fn label() -> impl Strategy<Value = f64> {
        prop_oneof![Just(-1.0), Just(1.0)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn squared_matches_finite_differences(y in -5.0f64..5.0, yhat in -5.0f64..5.0) {
            let k = LossKind::Squared;
            let d = 1e-5;
            let fd = (k.value(y, yhat + d).unwrap() - k.value(y, yhat - d).unwrap()) / (2.0 * d);
            prop_assert!((k.grad2(y, yhat).unwrap() - fd).abs() < 1e-6);
        }

        #[test]
        fn logistic_matches_finite_differences(y in label(), yhat in -8.0f64..8.0) {
            let k = LossKind::Logistic;
            let d = 1e-5;
            let fd = (k.value(y, yhat + d).unwrap() - k.value(y, yhat - d).unwrap()) / (2.0 * d);
            prop_assert!((k.grad2(y, yhat).unwrap() - fd).abs() < 1e-6);
        }

        #[test]
        fn convex_in_prediction(
            y in label(), a in -10.0f64..10.0, gap in 1e-3f64..10.0, lam in 0.0f64..1.0,
        ) {
            let b = a + gap;
            for k in [LossKind::Squared, LossKind::Logistic] {
                let mid = k.value(y, lam * a + (1.0 - lam) * b).unwrap();
                let chord = lam * k.value(y, a).unwrap() + (1.0 - lam) * k.value(y, b).unwrap();
                prop_assert!(mid <= chord + 1e-12);
            }
        }

        #[test]
        fn logistic_gradient_bounded(y in label(), yhat in -30.0f64..30.0, far in -1e3f64..1e3) {
            prop_assert!(LossKind::Logistic.grad2(y, yhat).unwrap().abs() < 1.0);
            // sigmoid saturates to exactly 1.0 in f64 far from the origin
            prop_assert!(LossKind::Logistic.grad2(y, far).unwrap().abs() <= 1.0);
        }
    }
}
