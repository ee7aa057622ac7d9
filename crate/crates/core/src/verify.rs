//! Independent numerical oracles: Monte Carlo moments, exact-vs-approximate
//! grids, finite-difference gradient checks, and weight-row correlations.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{and_il, or_il, Activation, Kind};
use crate::error::Result;
use crate::network::{LayerSpec, Network};
use crate::numerics::sigmoid;
use crate::tensor::Matrix;
use crate::train::Loss;

/// Single-pass central moments up to the fourth, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    /// Combine two disjoint samples.
    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let (d2, d3, d4) = (d * d, d * d * d, d * d * d * d);
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        RunningMoments {
            n: self.n + other.n,
            mean: self.mean + d * nb / n,
            m2,
            m3,
            m4,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn estimate(&self) -> MonteCarloEstimate {
        let n = self.n.max(1) as f64;
        let std = self.std();
        // delta method: Var(s) ≈ (μ4 - σ⁴) / (4 σ² n)
        let pop_var = self.m2 / n;
        let mu4 = self.m4 / n;
        let se_std = if pop_var > 0.0 {
            ((mu4 - pop_var * pop_var).max(0.0) / (4.0 * pop_var * n)).sqrt()
        } else {
            0.0
        };
        MonteCarloEstimate {
            mean: self.mean,
            std,
            n: self.n,
            se_mean: std / n.sqrt(),
            se_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std: f64,
    pub n: u64,
    /// `std / sqrt(n)`.
    pub se_mean: f64,
    /// Large-sample standard error of `std`.
    pub se_std: f64,
}

const MC_CHUNK: u64 = 1 << 16;

/// Moments of `act(x, y)` for `x, y ~ N(0, 1)` independent.
///
/// Samples are drawn in fixed-size chunks, each from its own ChaCha stream,
/// and merged in chunk order; the estimate depends only on `(act, n, seed)`.
pub fn mc_constants(act: Activation, n: u64, seed: u64) -> MonteCarloEstimate {
    assert!(
        act.arity() == 2,
        "mc_constants: {act} is not a pairwise activation"
    );
    assert!(n >= 1);
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<RunningMoments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut acc = RunningMoments::new();
            for _ in 0..len {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                acc.push(act.apply(x, y));
            }
            acc
        })
        .collect();
    parts
        .iter()
        .fold(RunningMoments::new(), |acc, p| acc.merge(p))
        .estimate()
}

/// Summary of an exact-vs-approximate comparison over a square grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: usize,
    pub max_abs_diff: f64,
    pub argmax: (f64, f64),
    /// Largest `|diff| / max(|exact|, 1e-12)`.
    pub max_rel_diff: f64,
    /// Largest `|diff|` outside the `band` neighborhood of the axes and diagonals.
    pub max_abs_diff_off_boundary: f64,
    pub argmax_off_boundary: (f64, f64),
    pub band: f64,
}

/// Grid coordinates `-range, -range + step, ..., range`, symmetric about an
/// exact zero.
pub fn grid_axis(range: f64, step: f64) -> Vec<f64> {
    assert!(
        step > 0.0 && range >= 0.0,
        "grid_axis: step must be positive"
    );
    let n = (2.0 * range / step).round() as usize + 1;
    let half = (n - 1) as f64 / 2.0;
    (0..n).map(|i| (i as f64 - half) * step).collect()
}

/// True when `(x, y)` lies within `band` of an axis or a diagonal.
pub fn near_boundary(x: f64, y: f64, band: f64) -> bool {
    x.abs() <= band || y.abs() <= band || (x - y).abs() <= band || (x + y).abs() <= band
}

/// Compare the exact and approximate forms of a logical kind on
/// `[-range, range]^2`. When `csv` is given, one `x,y,exact,approx,diff`
/// row is written per cell with `x` varying fastest.
pub fn grid_compare(
    kind: Kind,
    range: f64,
    step: f64,
    band: f64,
    csv: Option<&mut dyn Write>,
) -> Result<GridReport> {
    assert!(
        kind.is_logical(),
        "grid_compare: {} has no exact form",
        kind.name()
    );
    let (exact, approx) = (Activation::il(kind), Activation::ail(kind));
    let axis = grid_axis(range, step);
    let rows: Vec<Vec<(f64, f64, f64)>> = axis
        .par_iter()
        .map(|&y| {
            axis.iter()
                .map(|&x| (x, exact.apply(x, y), approx.apply(x, y)))
                .collect()
        })
        .collect();
    let mut report = GridReport {
        cells: axis.len() * axis.len(),
        max_abs_diff: 0.0,
        argmax: (0.0, 0.0),
        max_rel_diff: 0.0,
        max_abs_diff_off_boundary: 0.0,
        argmax_off_boundary: (f64::NAN, f64::NAN),
        band,
    };
    let mut csv = csv.map(std::io::BufWriter::new);
    if let Some(w) = csv.as_mut() {
        writeln!(w, "x,y,exact,approx,diff")?;
    }
    for (row, &y) in rows.iter().zip(&axis) {
        for &(x, il, ail) in row {
            let diff = ail - il;
            let abs = diff.abs();
            if abs > report.max_abs_diff {
                report.max_abs_diff = abs;
                report.argmax = (x, y);
            }
            report.max_rel_diff = report.max_rel_diff.max(abs / il.abs().max(1e-12));
            if !near_boundary(x, y, band) && abs > report.max_abs_diff_off_boundary {
                report.max_abs_diff_off_boundary = abs;
                report.argmax_off_boundary = (x, y);
            }
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{x},{y},{il},{ail},{diff}")?;
            }
        }
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    Ok(report)
}

/// Largest relative difference `|ail - il| / |il|` over grid cells whose
/// coordinates satisfy `keep`.
pub fn max_rel_diff_where(
    kind: Kind,
    range: f64,
    step: f64,
    keep: impl Fn(f64, f64) -> bool + Sync,
) -> f64 {
    let (exact, approx) = (Activation::il(kind), Activation::ail(kind));
    let axis = grid_axis(range, step);
    axis.par_iter()
        .map(|&y| {
            axis.iter()
                .filter(|&&x| keep(x, y))
                .map(|&x| {
                    let il = exact.apply(x, y);
                    (approx.apply(x, y) - il).abs() / il.abs().max(1e-12)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Default finite-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Points closer than this to a kink are skipped.
pub const BOUNDARY_EXCLUSION: f64 = 1e-3;

/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor used by [`relative_error`] in the gradient checks, so
/// that saturated partials near zero are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    pub worst_point: (f64, f64),
}

/// Whether a finite-difference stencil of width `h` around `(x, y)` could
/// straddle a kink of `act`.
fn stencil_near_kink(act: Activation, x: f64, y: f64, h: f64) -> bool {
    let d = BOUNDARY_EXCLUSION.max(4.0 * h);
    match act.kind() {
        Kind::Relu => x.abs() < d,
        // the partials blow up like |x|^(-1/2) at the axes, so keep further off
        Kind::SignedGeomean => x.abs() < 10.0 * d || y.abs() < 10.0 * d,
        _ if act.family() == crate::activations::Family::Il => false,
        _ => near_boundary(x, y, d),
    }
}

/// Compare [`Activation::gradient`] with central differences at the given points.
pub fn gradcheck_activation(act: Activation, points: &[(f64, f64)], h: f64) -> GradcheckReport {
    let mut report = GradcheckReport {
        checked: 0,
        excluded: 0,
        max_rel_error: 0.0,
        worst_point: (f64::NAN, f64::NAN),
    };
    for &(x, y) in points {
        if stencil_near_kink(act, x, y, h) {
            report.excluded += 1;
            continue;
        }
        report.checked += 1;
        let errs = if act.arity() == 1 {
            let fd = (act.apply_unary(x + h) - act.apply_unary(x - h)) / (2.0 * h);
            relative_error(act.derivative_unary(x), fd, RELATIVE_FLOOR)
        } else {
            let (dx, dy) = act.gradient(x, y);
            let fdx = (act.apply(x + h, y) - act.apply(x - h, y)) / (2.0 * h);
            let fdy = (act.apply(x, y + h) - act.apply(x, y - h)) / (2.0 * h);
            relative_error(dx, fdx, RELATIVE_FLOOR).max(relative_error(dy, fdy, RELATIVE_FLOOR))
        };
        if errs > report.max_rel_error {
            report.max_rel_error = errs;
            report.worst_point = (x, y);
        }
    }
    report
}

/// Uniform random points on `[-extent, extent]^2`.
pub fn random_points(n: usize, extent: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkGradcheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

/// Check the parameter gradients of a network against central differences
/// of `loss(net(x), y)`, at `coords` randomly chosen parameters.
///
/// Coordinates where the two one-sided differences disagree (the stencil
/// crosses a kink of a piecewise activation) are skipped and counted.
pub fn gradcheck_network(
    net: &mut Network<f64>,
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    loss: Loss,
    coords: usize,
    h: f64,
    seed: u64,
) -> NetworkGradcheck {
    let (out, cache) = net.forward(x, true);
    let (_, grad) = loss.evaluate(&out, y);
    net.backward(&cache, &grad);
    let analytic = net.grads_flat();
    let params = net.params_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, params.len(), coords.min(params.len()));
    let eval = |i: usize, v: f64, net: &mut Network<f64>| {
        net.set_param(i, v);
        let (o, _) = net.forward(x, true);
        loss.evaluate(&o, y).0
    };
    let mut report = NetworkGradcheck {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    for i in picks.iter() {
        let p0 = params[i];
        let f0 = eval(i, p0, net);
        let fp = eval(i, p0 + h, net);
        let fm = eval(i, p0 - h, net);
        net.set_param(i, p0);
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        let central = (fp - fm) / (2.0 * h);
        if relative_error(fwd, bwd, RELATIVE_FLOOR) > 1e-2 {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        report.max_rel_error =
            report
                .max_rel_error
                .max(relative_error(analytic[i], central, RELATIVE_FLOOR));
    }
    report
}

/// Cosine similarity of two vectors; 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCorrelations {
    pub paired: Vec<f64>,
    pub random: Vec<f64>,
}

/// Cosine similarity between the weight vectors of operand-paired units of
/// affine layer `layer_index`, against an equally sized sample of random
/// non-paired unit pairs.
///
/// Panics if the layer is not an affine layer feeding an activation block.
pub fn weight_correlations(
    net: &Network<f64>,
    layer_index: usize,
    seed: u64,
) -> WeightCorrelations {
    let w = net
        .affine_weight(layer_index)
        .unwrap_or_else(|| panic!("weight_correlations: layer {layer_index} is not affine"));
    assert!(
        matches!(
            net.specs().get(layer_index + 1),
            Some(LayerSpec::Act { .. })
        ),
        "weight_correlations: layer {layer_index} does not feed an activation block"
    );
    // unit j's incoming weights are column j
    let units = w.transpose();
    let n = units.rows();
    let paired: Vec<f64> = (0..n / 2)
        .map(|i| cosine(units.row(2 * i), units.row(2 * i + 1)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = Vec::with_capacity(paired.len());
    if n >= 3 {
        while random.len() < paired.len() {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a == b || a / 2 == b / 2 {
                continue;
            }
            random.push(cosine(units.row(a), units.row(b)));
        }
    }
    WeightCorrelations { paired, random }
}

/// Largest deviation from the probability identities
/// `σ(and_il(x, y)) = σ(x)σ(y)` and `σ(or_il(x, y)) = 1 - σ(-x)σ(-y)` over
/// `n` points of `[-20, 20]^2`.
pub fn bayes_identity_check(n: usize, seed: u64) -> f64 {
    random_points(n, 20.0, seed)
        .into_iter()
        .map(|(x, y)| {
            let and_err = (sigmoid(and_il(x, y)) - sigmoid(x) * sigmoid(y)).abs();
            let or_err = (sigmoid(or_il(x, y)) - (1.0 - sigmoid(-x) * sigmoid(-y))).abs();
            and_err.max(or_err)
        })
        .fold(0.0, f64::max)
}
