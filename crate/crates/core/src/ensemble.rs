//! Channel routing for one or more pairwise activations.
//!
//! Operands are adjacent channel pairs `(2i, 2i+1)`. Under the partition
//! strategy the pairs are split into `m` contiguous blocks and block `j` goes
//! through `acts[j]`; under duplication every activation sees every pair and
//! the outputs are concatenated in activation order.
//!
//! Text form: a single activation (`or_ail`, `relu`), or
//! `<family>:<kind>+<kind>...:<p|d>` (`nail:or+and+xnor:d`), or fully
//! qualified members `or_ail+max:d`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activations::{parse_family, Activation, Family, Kind};
use crate::error::Error;
use crate::numerics::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Partition,
    Duplication,
}

impl Strategy {
    fn tag(self) -> &'static str {
        match self {
            Strategy::Partition => "p",
            Strategy::Duplication => "d",
        }
    }
}

/// Adjacent operand pairs for `n_c` channels. Panics on odd `n_c`.
pub fn pair_channels(n_c: usize) -> Vec<(usize, usize)> {
    assert!(
        n_c.is_multiple_of(2),
        "pair_channels: odd channel count {n_c}"
    );
    (0..n_c / 2).map(|i| (2 * i, 2 * i + 1)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EnsembleSpec {
    acts: Vec<Activation>,
    strategy: Strategy,
}

impl EnsembleSpec {
    pub fn new(acts: Vec<Activation>, strategy: Strategy) -> Result<Self, Error> {
        if acts.is_empty() {
            return Err(Error::InvalidActivation("empty ensemble".into()));
        }
        if acts.len() > 1 && acts.iter().any(|a| a.arity() != 2) {
            return Err(Error::InvalidActivation(
                "1→1 activations cannot be ensembled".into(),
            ));
        }
        Ok(EnsembleSpec { acts, strategy })
    }

    pub fn single(act: Activation) -> Self {
        EnsembleSpec {
            acts: vec![act],
            strategy: Strategy::Partition,
        }
    }

    pub fn acts(&self) -> &[Activation] {
        &self.acts
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn is_unary(&self) -> bool {
        self.acts[0].arity() == 1
    }

    /// Output width for `n_c` input channels, or why `n_c` is unusable.
    pub fn output_width(&self, n_c: usize) -> Result<usize, Error> {
        if self.is_unary() {
            return Ok(n_c);
        }
        let m = self.acts.len();
        let (divisor, out) = match self.strategy {
            Strategy::Partition => (2 * m, n_c / 2),
            Strategy::Duplication => (2, m * (n_c / 2)),
        };
        if n_c == 0 || !n_c.is_multiple_of(divisor) {
            return Err(Error::InvalidActivation(format!(
                "{self} needs a channel count divisible by {divisor}, got {n_c}"
            )));
        }
        Ok(out)
    }

    /// `(activation index, pair index, output column)` for every routed pair.
    fn routes(&self, n_c: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let pairs = n_c / 2;
        let m = self.acts.len();
        let per_block = pairs / m;
        let strategy = self.strategy;
        (0..m).flat_map(move |a| {
            let range = match strategy {
                Strategy::Partition => a * per_block..(a + 1) * per_block,
                Strategy::Duplication => 0..pairs,
            };
            range.map(move |q| {
                let col = match strategy {
                    Strategy::Partition => q,
                    Strategy::Duplication => a * pairs + q,
                };
                (a, q, col)
            })
        })
    }

    pub fn forward<T: Scalar>(&self, z: &Matrix<T>) -> Matrix<T> {
        let n_c = z.cols();
        let n_out = self
            .output_width(n_c)
            .unwrap_or_else(|e| panic!("ensemble forward: {e}"));
        if self.is_unary() {
            let act = self.acts[0];
            return z.map(|v| act.apply_unary(v));
        }
        let routes: Vec<_> = self.routes(n_c).collect();
        let mut out = Matrix::zeros(z.rows(), n_out);
        for r in 0..z.rows() {
            let zin = z.row(r);
            let orow = out.row_mut(r);
            for &(a, q, col) in &routes {
                orow[col] = self.acts[a].apply(zin[2 * q], zin[2 * q + 1]);
            }
        }
        out
    }

    /// Gradient with respect to `z` given the gradient of the forward output.
    pub fn backward<T: Scalar>(&self, z: &Matrix<T>, upstream: &Matrix<T>) -> Matrix<T> {
        let n_c = z.cols();
        let n_out = self
            .output_width(n_c)
            .unwrap_or_else(|e| panic!("ensemble backward: {e}"));
        assert_eq!(
            upstream.shape(),
            (z.rows(), n_out),
            "ensemble backward: upstream shape mismatch"
        );
        if self.is_unary() {
            let act = self.acts[0];
            let mut g = upstream.clone();
            for (gv, &zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *gv = *gv * act.derivative_unary(zv);
            }
            return g;
        }
        let routes: Vec<_> = self.routes(n_c).collect();
        let mut grad = Matrix::zeros(z.rows(), n_c);
        for r in 0..z.rows() {
            let zin = z.row(r);
            let up = upstream.row(r);
            let grow = grad.row_mut(r);
            for &(a, q, col) in &routes {
                let (dx, dy) = self.acts[a].gradient(zin[2 * q], zin[2 * q + 1]);
                grow[2 * q] = grow[2 * q] + dx * up[col];
                grow[2 * q + 1] = grow[2 * q + 1] + dy * up[col];
            }
        }
        grad
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self.acts[0];
        if self.acts.len() == 1 && self.strategy == Strategy::Partition {
            return write!(f, "{first}");
        }
        let shared = self
            .acts
            .iter()
            .all(|a| a.family() == first.family() && a.normalized() == first.normalized());
        if shared {
            let fam = match (first.family(), first.normalized()) {
                (Family::Il, false) => "il",
                (Family::Il, true) => "nil",
                (Family::Ail, false) => "ail",
                (Family::Ail, true) => "nail",
                (Family::Raw, _) => "raw",
            };
            let kinds: Vec<_> = self.acts.iter().map(|a| a.kind().name()).collect();
            write!(f, "{fam}:{}:{}", kinds.join("+"), self.strategy.tag())
        } else {
            let names: Vec<_> = self.acts.iter().map(|a| a.to_string()).collect();
            write!(f, "{}:{}", names.join("+"), self.strategy.tag())
        }
    }
}

impl FromStr for EnsembleSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self, Error> {
        let fail = |reason: String| Error::ParseSpec {
            text: text.to_string(),
            reason,
        };
        let lower = text.trim().to_ascii_lowercase();
        let mut parts: Vec<&str> = lower.split(':').collect();
        let strategy = match parts.last().copied() {
            Some("p") if parts.len() > 1 => {
                parts.pop();
                Strategy::Partition
            }
            Some("d") if parts.len() > 1 => {
                parts.pop();
                Strategy::Duplication
            }
            _ => Strategy::Partition,
        };
        let acts = match parts.as_slice() {
            [members] => members
                .split('+')
                .map(str::parse)
                .collect::<Result<Vec<Activation>, _>>()
                .map_err(|e| fail(e.to_string()))?,
            [family, kinds] => {
                let (family, normalized) = parse_family(family).map_err(|e| fail(e.to_string()))?;
                kinds
                    .split('+')
                    .map(|k| {
                        let kind: Kind = k.parse()?;
                        Activation::new(kind, family, normalized)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| fail(e.to_string()))?
            }
            _ => return Err(fail("expected [family:]members[:p|d]".into())),
        };
        EnsembleSpec::new(acts, strategy).map_err(|e| fail(e.to_string()))
    }
}

impl TryFrom<String> for EnsembleSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<EnsembleSpec> for String {
    fn from(spec: EnsembleSpec) -> String {
        spec.to_string()
    }
}

impl From<Activation> for EnsembleSpec {
    fn from(act: Activation) -> Self {
        EnsembleSpec::single(act)
    }
}
