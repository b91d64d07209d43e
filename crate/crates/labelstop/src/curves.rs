//! Convergence-curve families and the predicted-error map.
//!
//! A curve model describes how fast a learner closes the gap between its
//! initial error and its asymptotic error: `h(t)` is the fraction of that
//! gap still open after `t` labels, with `h(0) = 1` and `h` strictly
//! decreasing towards 0. The predicted error at `t` is then
//! `g(t) = r0 * h(t) + r_inf * (1 - h(t))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, cast_usize, Scalar};

/// Lower clamp for the exponential base; keeps likelihoods non-degenerate.
pub const BETA_MIN: f64 = 1e-6;
/// Upper clamp for the exponential base.
pub const BETA_MAX: f64 = 1.0 - 1e-6;

/// The three supported convergence regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    /// `h(t) = sqrt(kappa / (t + kappa))`, `kappa >= 1`.
    InverseSqrt,
    /// `h(t) = lambda / (t + lambda)`, `lambda >= 1`.
    Inverse,
    /// `h(t) = beta^t`, `beta` in (0, 1).
    Exponential,
}

/// One convergence hypothesis: a family plus its constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveModel<F> {
    family: CurveFamily,
    constant: F,
}

/// Errors from curve construction and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("constant {constant} outside domain for {family:?}: {requirement}")]
    ConstantOutOfDomain {
        family: CurveFamily,
        constant: f64,
        requirement: &'static str,
    },
    #[error("invalid error range: r0={r0}, r_inf={r_inf} (need 0 <= r_inf <= r0 <= 1)")]
    InvalidErrorRange { r0: f64, r_inf: f64 },
}

impl<F: Scalar> CurveModel<F> {
    /// Validates the constant against its family's domain. The exponential
    /// base is clamped to `[BETA_MIN, BETA_MAX]` rather than rejected, so
    /// bases arbitrarily close to 0 or 1 stay usable.
    pub fn new(family: CurveFamily, constant: F) -> Result<Self, CurveError> {
        let c = constant.to_f64().unwrap_or(f64::NAN);
        match family {
            CurveFamily::InverseSqrt | CurveFamily::Inverse => {
                if !(c >= 1.0) || !c.is_finite() {
                    return Err(CurveError::ConstantOutOfDomain {
                        family,
                        constant: c,
                        requirement: "need a finite constant >= 1",
                    });
                }
                Ok(Self { family, constant })
            }
            CurveFamily::Exponential => {
                if !(c > 0.0 && c < 1.0) {
                    return Err(CurveError::ConstantOutOfDomain {
                        family,
                        constant: c,
                        requirement: "need a base in (0, 1)",
                    });
                }
                let clamped = constant.max(cast(BETA_MIN)).min(cast(BETA_MAX));
                Ok(Self {
                    family,
                    constant: clamped,
                })
            }
        }
    }

    pub fn family(&self) -> CurveFamily {
        self.family
    }

    pub fn constant(&self) -> F {
        self.constant
    }

    /// Fraction of the initial-to-final error gap still open after `t` labels.
    ///
    /// `h(0) = 1` exactly for every family; the value is in (0, 1] and
    /// strictly decreasing in `t`.
    pub fn eval_h(&self, t: usize) -> F {
        let tf = cast_usize::<F>(t);
        match self.family {
            CurveFamily::InverseSqrt => (self.constant / (tf + self.constant)).sqrt(),
            CurveFamily::Inverse => self.constant / (tf + self.constant),
            CurveFamily::Exponential => {
                // powi is exact repeated squaring; t never exceeds i32 range
                // in practice (pool sizes are far smaller).
                self.constant.powi(t.min(i32::MAX as usize) as i32)
            }
        }
    }
}

/// Predicted error at time `t`: `r0 * h(t) + r_inf * (1 - h(t))`.
///
/// Validates `0 <= r_inf <= r0 <= 1`. The bound `r_inf <= r0` encodes that
/// learning does not asymptotically exceed the initial (chance) error; use
/// [`predicted_error_unchecked`] to evaluate outside that regime.
pub fn predicted_error<F: Scalar>(
    model: &CurveModel<F>,
    r0: F,
    r_inf: F,
    t: usize,
) -> Result<F, CurveError> {
    let zero = F::zero();
    let one = F::one();
    if !(r_inf >= zero && r_inf <= r0 && r0 <= one) {
        return Err(CurveError::InvalidErrorRange {
            r0: r0.to_f64().unwrap_or(f64::NAN),
            r_inf: r_inf.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(predicted_error_unchecked(model, r0, r_inf, t))
}

/// Same map as [`predicted_error`] without any range validation.
#[inline]
pub fn predicted_error_unchecked<F: Scalar>(model: &CurveModel<F>, r0: F, r_inf: F, t: usize) -> F {
    let h = model.eval_h(t);
    r0 * h + r_inf * (F::one() - h)
}
