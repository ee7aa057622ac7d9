//! Numerically stable scalar primitives.
//!
//! Every logit-space operator in [`crate::activations`] is evaluated through
//! log-probabilities built from these helpers, so that products of tiny
//! probabilities never underflow.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::Error;

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Sum
        + Send
        + Sync
        + 'static
{
}

/// Magnitude at which exact logit outputs are clamped.
pub const LOGIT_CLAMP: f64 = 1e15;

/// `1 / (1 + e^-x)`, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log σ(x) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    -softplus(-x)
}

/// `log(e^a + e^b)`, symmetric in its arguments.
#[inline]
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Clamp a logit to `±LOGIT_CLAMP`.
#[inline]
pub fn clamp_logit<T: Scalar>(z: T) -> T {
    let c = T::lit(LOGIT_CLAMP);
    if z.is_nan() {
        return z;
    }
    z.max(-c).min(c)
}

/// Logit of a probability given as a log-probability: `logp - log(1 - e^logp)`.
///
/// Panics-free variant of [`try_logit_from_logp`] for internal use where
/// `logp <= 0` holds by construction.
#[inline]
pub fn logit_from_logp<T: Scalar>(logp: T) -> T {
    debug_assert!(logp <= T::zero());
    let logp = logp.min(T::zero());
    clamp_logit(logp - (-logp.exp_m1()).ln())
}

/// Checked [`logit_from_logp`]; rejects positive log-probabilities.
pub fn try_logit_from_logp<T: Scalar>(logp: T) -> Result<T, Error> {
    if !(logp <= T::zero()) {
        return Err(Error::Domain(format!(
            "log-probability must be <= 0, got {}",
            logp
        )));
    }
    Ok(logit_from_logp(logp))
}

/// Logit of a probability in `[0, 1]`, clamped.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    clamp_logit(p.ln() - (-p).ln_1p())
}
