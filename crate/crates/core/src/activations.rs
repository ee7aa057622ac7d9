//! Logit-space Boolean activations and their analytical gradients.
//!
//! The exact (`Il`) operators interpret each operand as the logit of an
//! independent event and return the logit of the combined event. The
//! approximate (`Ail`) operators are piecewise-linear surrogates built from
//! comparisons and additions only. Either family can be standardized by the
//! mean and standard deviation it has when both operands are drawn from
//! `N(0, 1)`; see [`moments`].
//!
//! Piecewise gradients use a fixed convention on their measure-zero
//! boundaries: on ties of `min`/`max` the `x` operand wins, and on the axes
//! the sum branch of AND/OR is taken as closed.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::numerics::{clamp_logit, log_add_exp, log_sigmoid, logit_from_logp, Scalar};

/// `logit(σ(x)·σ(y))`.
#[inline]
pub fn and_il<T: Scalar>(x: T, y: T) -> T {
    logit_from_logp(log_sigmoid(x) + log_sigmoid(y))
}

/// Both operands negative: their sum, otherwise the smaller one.
#[inline]
pub fn and_ail<T: Scalar>(x: T, y: T) -> T {
    if x < T::zero() && y < T::zero() {
        x + y
    } else {
        x.min(y)
    }
}

/// `logit(1 - σ(-x)·σ(-y))`, written through De Morgan so that
/// `or_il(x, y) == -and_il(-x, -y)` holds bit for bit.
#[inline]
pub fn or_il<T: Scalar>(x: T, y: T) -> T {
    -and_il(-x, -y)
}

/// Both operands positive: their sum, otherwise the larger one.
#[inline]
pub fn or_ail<T: Scalar>(x: T, y: T) -> T {
    if x > T::zero() && y > T::zero() {
        x + y
    } else {
        x.max(y)
    }
}

/// Log-probabilities of the four joint outcomes, ordered
/// `(both true, both false, x only, y only)`.
#[inline]
fn joint_log_probs<T: Scalar>(x: T, y: T) -> (T, T, T, T) {
    let (px, nx) = (log_sigmoid(x), log_sigmoid(-x));
    let (py, ny) = (log_sigmoid(y), log_sigmoid(-y));
    (px + py, nx + ny, px + ny, nx + py)
}

/// `logit(σ(x)σ(y) + σ(-x)σ(-y))`.
#[inline]
pub fn xnor_il<T: Scalar>(x: T, y: T) -> T {
    let (tt, ff, tf, ft) = joint_log_probs(x, y);
    clamp_logit(log_add_exp(tt, ff) - log_add_exp(tf, ft))
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `sign(xy)·min(|x|, |y|)` with `sign(0) = 0`.
#[inline]
pub fn xnor_ail<T: Scalar>(x: T, y: T) -> T {
    sign(x) * sign(y) * x.abs().min(y.abs())
}

/// `sign(xy)·sqrt(|xy|)`.
#[inline]
pub fn signed_geomean<T: Scalar>(x: T, y: T) -> T {
    sign(x) * sign(y) * (x * y).abs().sqrt()
}

#[inline]
fn grad_and_il<T: Scalar>(x: T, y: T) -> (T, T) {
    let (px, nx) = (log_sigmoid(x), log_sigmoid(-x));
    let (py, ny) = (log_sigmoid(y), log_sigmoid(-y));
    // d/dx = σ(-x) / (1 - σ(x)σ(y)), with 1 - p = σ(-x) + σ(x)σ(-y)
    let dx = (nx - log_add_exp(nx, px + ny)).exp();
    let dy = (ny - log_add_exp(ny, py + nx)).exp();
    (dx, dy)
}

#[inline]
fn grad_xnor_il<T: Scalar>(x: T, y: T) -> (T, T) {
    let (tt, ff, tf, ft) = joint_log_probs(x, y);
    // softmax weight of each outcome within its half of the partition
    let w_tt = (tt - log_add_exp(tt, ff)).exp();
    let w_tf = (tf - log_add_exp(tf, ft)).exp();
    (w_tt - w_tf, w_tt + w_tf - T::one())
}

#[inline]
fn grad_and_ail<T: Scalar>(x: T, y: T) -> (T, T) {
    if x <= T::zero() && y <= T::zero() {
        (T::one(), T::one())
    } else {
        grad_min(x, y)
    }
}

#[inline]
fn grad_or_ail<T: Scalar>(x: T, y: T) -> (T, T) {
    if x >= T::zero() && y >= T::zero() {
        (T::one(), T::one())
    } else {
        grad_max(x, y)
    }
}

#[inline]
fn grad_min<T: Scalar>(x: T, y: T) -> (T, T) {
    if x <= y {
        (T::one(), T::zero())
    } else {
        (T::zero(), T::one())
    }
}

#[inline]
fn grad_max<T: Scalar>(x: T, y: T) -> (T, T) {
    if x >= y {
        (T::one(), T::zero())
    } else {
        (T::zero(), T::one())
    }
}

#[inline]
fn grad_xnor_ail<T: Scalar>(x: T, y: T) -> (T, T) {
    if x == T::zero() || y == T::zero() {
        (T::zero(), T::zero())
    } else if x.abs() <= y.abs() {
        (sign(y), T::zero())
    } else {
        (T::zero(), sign(x))
    }
}

#[inline]
fn grad_signed_geomean<T: Scalar>(x: T, y: T) -> (T, T) {
    if x == T::zero() || y == T::zero() {
        return (T::zero(), T::zero());
    }
    let g = signed_geomean(x, y);
    let half = T::lit(0.5);
    (half * g / x, half * g / y)
}

/// Operator kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    And,
    Or,
    Xnor,
    SignedGeomean,
    Max,
    Min,
    Relu,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::And,
        Kind::Or,
        Kind::Xnor,
        Kind::SignedGeomean,
        Kind::Max,
        Kind::Min,
        Kind::Relu,
    ];

    /// True for the Boolean kinds that come in exact and approximate forms.
    pub fn is_logical(self) -> bool {
        matches!(self, Kind::And | Kind::Or | Kind::Xnor)
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::And => "and",
            Kind::Or => "or",
            Kind::Xnor => "xnor",
            Kind::SignedGeomean => "sgm",
            Kind::Max => "max",
            Kind::Min => "min",
            Kind::Relu => "relu",
        }
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "and" => Kind::And,
            "or" => Kind::Or,
            "xnor" => Kind::Xnor,
            "sgm" | "signed_geomean" | "signedgeomean" => Kind::SignedGeomean,
            "max" => Kind::Max,
            "min" => Kind::Min,
            "relu" => Kind::Relu,
            _ => return Err(Error::InvalidActivation(format!("unknown kind {s:?}"))),
        })
    }
}

/// Exact, approximate, or plain (for the non-logical baselines).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Il,
    Ail,
    Raw,
}

/// A single nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Activation {
    kind: Kind,
    family: Family,
    normalized: bool,
}

impl Activation {
    pub fn new(kind: Kind, family: Family, normalized: bool) -> Result<Self, Error> {
        if kind.is_logical() == (family == Family::Raw) {
            return Err(Error::InvalidActivation(format!(
                "{} has no {:?} form",
                kind.name(),
                family
            )));
        }
        if normalized && family == Family::Raw {
            return Err(Error::InvalidActivation(format!(
                "{} has no normalization constants",
                kind.name()
            )));
        }
        Ok(Activation {
            kind,
            family,
            normalized,
        })
    }

    pub const fn il(kind: Kind) -> Self {
        Activation {
            kind,
            family: Family::Il,
            normalized: false,
        }
    }

    pub const fn ail(kind: Kind) -> Self {
        Activation {
            kind,
            family: Family::Ail,
            normalized: false,
        }
    }

    pub const fn nil(kind: Kind) -> Self {
        Activation {
            kind,
            family: Family::Il,
            normalized: true,
        }
    }

    pub const fn nail(kind: Kind) -> Self {
        Activation {
            kind,
            family: Family::Ail,
            normalized: true,
        }
    }

    pub const fn raw(kind: Kind) -> Self {
        Activation {
            kind,
            family: Family::Raw,
            normalized: false,
        }
    }

    pub const RELU: Activation = Activation::raw(Kind::Relu);
    pub const MAX: Activation = Activation::raw(Kind::Max);
    pub const MIN: Activation = Activation::raw(Kind::Min);
    pub const SIGNED_GEOMEAN: Activation = Activation::raw(Kind::SignedGeomean);

    /// Every valid variant: 12 logical ones and 4 baselines.
    pub fn all() -> Vec<Activation> {
        let mut out = Vec::with_capacity(16);
        for kind in [Kind::And, Kind::Or, Kind::Xnor] {
            out.extend([
                Activation::il(kind),
                Activation::ail(kind),
                Activation::nil(kind),
                Activation::nail(kind),
            ]);
        }
        out.extend([
            Activation::SIGNED_GEOMEAN,
            Activation::MAX,
            Activation::MIN,
            Activation::RELU,
        ]);
        out
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Number of operands consumed per output.
    pub fn arity(&self) -> usize {
        if self.kind == Kind::Relu {
            1
        } else {
            2
        }
    }

    /// Mean and standard deviation used when normalized.
    pub fn moments(&self) -> Option<Moments> {
        moments(self.kind, self.family)
    }

    fn raw_value<T: Scalar>(&self, x: T, y: T) -> T {
        match (self.kind, self.family) {
            (Kind::And, Family::Il) => and_il(x, y),
            (Kind::And, _) => and_ail(x, y),
            (Kind::Or, Family::Il) => or_il(x, y),
            (Kind::Or, _) => or_ail(x, y),
            (Kind::Xnor, Family::Il) => xnor_il(x, y),
            (Kind::Xnor, _) => xnor_ail(x, y),
            (Kind::SignedGeomean, _) => signed_geomean(x, y),
            (Kind::Max, _) => x.max(y),
            (Kind::Min, _) => x.min(y),
            (Kind::Relu, _) => unreachable!(),
        }
    }

    fn raw_gradient<T: Scalar>(&self, x: T, y: T) -> (T, T) {
        match (self.kind, self.family) {
            (Kind::And, Family::Il) => grad_and_il(x, y),
            (Kind::And, _) => grad_and_ail(x, y),
            (Kind::Or, Family::Il) => grad_and_il(-x, -y),
            (Kind::Or, _) => grad_or_ail(x, y),
            (Kind::Xnor, Family::Il) => grad_xnor_il(x, y),
            (Kind::Xnor, _) => grad_xnor_ail(x, y),
            (Kind::SignedGeomean, _) => grad_signed_geomean(x, y),
            (Kind::Max, _) => grad_max(x, y),
            (Kind::Min, _) => grad_min(x, y),
            (Kind::Relu, _) => unreachable!(),
        }
    }

    /// Evaluate a 2→1 activation.
    ///
    /// Panics if called on a 1→1 kind.
    pub fn apply<T: Scalar>(&self, x: T, y: T) -> T {
        assert!(self.arity() == 2, "{self} takes a single operand");
        let v = self.raw_value(x, y);
        match self.normalized.then(|| self.moments()).flatten() {
            Some(m) => (v - T::lit(m.mean)) / T::lit(m.std),
            None => v,
        }
    }

    /// Partial derivatives `(d/dx, d/dy)` of [`Activation::apply`].
    pub fn gradient<T: Scalar>(&self, x: T, y: T) -> (T, T) {
        assert!(self.arity() == 2, "{self} takes a single operand");
        let (dx, dy) = self.raw_gradient(x, y);
        match self.normalized.then(|| self.moments()).flatten() {
            Some(m) => {
                let s = T::lit(m.std);
                (dx / s, dy / s)
            }
            None => (dx, dy),
        }
    }

    /// Evaluate a 1→1 activation.
    pub fn apply_unary<T: Scalar>(&self, x: T) -> T {
        assert!(self.arity() == 1, "{self} takes two operands");
        x.max(T::zero())
    }

    pub fn derivative_unary<T: Scalar>(&self, x: T) -> T {
        assert!(self.arity() == 1, "{self} takes two operands");
        if x > T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match (self.family, self.normalized) {
            (Family::Raw, _) => return f.write_str(self.kind.name()),
            (Family::Il, false) => "il",
            (Family::Il, true) => "nil",
            (Family::Ail, false) => "ail",
            (Family::Ail, true) => "nail",
        };
        write!(f, "{}_{}", self.kind.name(), suffix)
    }
}

/// Parse a family tag (`il`, `ail`, `nil`, `nail`, `raw`).
pub fn parse_family(s: &str) -> Result<(Family, bool), Error> {
    Ok(match s {
        "il" => (Family::Il, false),
        "ail" => (Family::Ail, false),
        "nil" => (Family::Il, true),
        "nail" => (Family::Ail, true),
        "raw" => (Family::Raw, false),
        _ => return Err(Error::InvalidActivation(format!("unknown family {s:?}"))),
    })
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim().to_ascii_lowercase();
        if let Ok(kind) = s.parse::<Kind>() {
            return Activation::new(kind, Family::Raw, false);
        }
        let (kind, fam) = s
            .rsplit_once('_')
            .ok_or_else(|| Error::InvalidActivation(format!("unknown activation {s:?}")))?;
        let (family, normalized) = parse_family(fam)?;
        Activation::new(kind.parse()?, family, normalized)
    }
}

/// Mean and standard deviation of an operator under independent standard
/// normal operands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

// Exact operators: tabulated Monte Carlo estimates.
const OR_IL: Moments = Moments {
    mean: 1.29895,
    std: 0.94834,
};
const XNOR_IL: Moments = Moments {
    mean: 0.0,
    std: 0.36641,
};

/// `E[or_ail] = 1/sqrt(2π) + 1/(2 sqrt(π))`.
pub fn or_ail_mean() -> f64 {
    use std::f64::consts::PI;
    1.0 / (2.0 * PI).sqrt() + 1.0 / (2.0 * PI.sqrt())
}

/// `Var(or_ail) = 5/4 - 1/(sqrt(2) π) - 1/(4π)`.
pub fn or_ail_variance() -> f64 {
    use std::f64::consts::{PI, SQRT_2};
    1.25 - 1.0 / (SQRT_2 * PI) - 1.0 / (4.0 * PI)
}

/// `Var(xnor_ail) = 1 - 2/π`.
pub fn xnor_ail_variance() -> f64 {
    1.0 - 2.0 / std::f64::consts::PI
}

/// Normalization constants for a logical kind, `None` for the baselines.
pub fn moments(kind: Kind, family: Family) -> Option<Moments> {
    let m = match (kind, family) {
        (Kind::Or, Family::Il) => OR_IL,
        (Kind::And, Family::Il) => Moments {
            mean: -OR_IL.mean,
            ..OR_IL
        },
        (Kind::Xnor, Family::Il) => XNOR_IL,
        (Kind::Or, Family::Ail) => Moments {
            mean: or_ail_mean(),
            std: or_ail_variance().sqrt(),
        },
        (Kind::And, Family::Ail) => Moments {
            mean: -or_ail_mean(),
            std: or_ail_variance().sqrt(),
        },
        (Kind::Xnor, Family::Ail) => Moments {
            mean: 0.0,
            std: xnor_ail_variance().sqrt(),
        },
        _ => return None,
    };
    Some(m)
}

/// Reference normalization constants as `(activation, mean, std)`, to 5 decimals.
pub const REFERENCE_MOMENTS: [(Activation, f64, f64); 6] = [
    (Activation::il(Kind::Or), 1.29895, 0.94834),
    (Activation::il(Kind::And), -1.29895, 0.94834),
    (Activation::il(Kind::Xnor), 0.0, 0.36641),
    (Activation::ail(Kind::Or), 0.68104, 0.97229),
    (Activation::ail(Kind::And), -0.68104, 0.97229),
    (Activation::ail(Kind::Xnor), 0.0, 0.60281),
];
