//! Losses, optimizers, learning-rate schedules, and the training loop.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dataset, Task};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::numerics::{sigmoid, softplus, Scalar};
use crate::tensor::Matrix;

/// One-cycle warmup starts at `max_lr / ONE_CYCLE_START_DIV`.
pub const ONE_CYCLE_START_DIV: f64 = 25.0;
/// One-cycle annealing ends at `max_lr / ONE_CYCLE_END_DIV`.
pub const ONE_CYCLE_END_DIV: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    OneCycle { peak_fraction: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::OneCycle { peak_fraction: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    BceWithLogits,
    CrossEntropy,
    Mse,
}

impl Loss {
    /// Mean loss over all rows and its gradient with respect to `z`.
    pub fn evaluate<T: Scalar>(self, z: &Matrix<T>, y: &Matrix<T>) -> (T, Matrix<T>) {
        assert_eq!(
            z.shape(),
            y.shape(),
            "loss: prediction/target shape mismatch"
        );
        let n = T::lit(z.rows().max(1) as f64);
        match self {
            Loss::BceWithLogits => {
                // y·softplus(-z) + (1-y)·softplus(z); equals softplus(-t·z) for t = 2y-1
                let count = T::lit(z.as_slice().len().max(1) as f64);
                let mut total = T::zero();
                let mut grad = Matrix::zeros(z.rows(), z.cols());
                for ((g, &zv), &yv) in grad
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z.as_slice())
                    .zip(y.as_slice())
                {
                    total = total + yv * softplus(-zv) + (T::one() - yv) * softplus(zv);
                    *g = (sigmoid(zv) - yv) / count;
                }
                (total / count, grad)
            }
            Loss::CrossEntropy => {
                let mut total = T::zero();
                let mut grad = Matrix::zeros(z.rows(), z.cols());
                for r in 0..z.rows() {
                    let (zr, yr) = (z.row(r), y.row(r));
                    let hi = zr.iter().copied().fold(T::neg_infinity(), T::max);
                    let lse = hi + zr.iter().map(|&v| (v - hi).exp()).sum::<T>().ln();
                    let g = grad.row_mut(r);
                    for j in 0..zr.len() {
                        total = total - yr[j] * (zr[j] - lse);
                        g[j] = ((zr[j] - lse).exp() - yr[j]) / n;
                    }
                }
                (total / n, grad)
            }
            Loss::Mse => {
                let count = T::lit(z.as_slice().len().max(1) as f64);
                let two = T::lit(2.0);
                let mut total = T::zero();
                let mut grad = Matrix::zeros(z.rows(), z.cols());
                for ((g, &zv), &yv) in grad
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z.as_slice())
                    .zip(y.as_slice())
                {
                    let d = zv - yv;
                    total = total + d * d;
                    *g = two * d / count;
                }
                (total / count, grad)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: Optimizer,
    pub max_lr: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.max_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("rates must be non-negative".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if let Schedule::OneCycle { peak_fraction } = self.schedule {
            if !(peak_fraction > 0.0 && peak_fraction < 1.0) {
                return bad(format!(
                    "peak_fraction must lie in (0, 1), got {peak_fraction}"
                ));
            }
        }
        match self.optimizer {
            Optimizer::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                bad(format!("momentum must lie in [0, 1), got {momentum}"))
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                bad("adam betas must lie in [0, 1) and eps must be positive".into())
            }
            _ => Ok(()),
        }
    }

    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.max_lr,
            Schedule::OneCycle { peak_fraction } => {
                one_cycle_lr(step, total_steps, self.max_lr, peak_fraction)
            }
        }
    }
}

/// One-cycle learning rate: linear warmup from `max_lr/25` to `max_lr` over
/// the first `peak_fraction` of the steps, then cosine annealing to
/// `max_lr/1e4` at the final step.
pub fn one_cycle_lr(step: usize, total_steps: usize, max_lr: f64, peak_fraction: f64) -> f64 {
    assert!(step < total_steps, "one_cycle_lr: step {step} out of range");
    let last = (total_steps - 1) as f64;
    if last == 0.0 {
        return max_lr;
    }
    let start = max_lr / ONE_CYCLE_START_DIV;
    let end = max_lr / ONE_CYCLE_END_DIV;
    let peak = peak_fraction * last;
    let s = step as f64;
    if s <= peak {
        if peak == 0.0 {
            return max_lr;
        }
        start + (max_lr - start) * s / peak
    } else {
        let progress = (s - peak) / (last - peak);
        end + (max_lr - end) * 0.5 * (1.0 + (PI * progress).cos())
    }
}

/// One Adam update of a single parameter tensor with coupled weight decay.
/// `t` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    weight_decay: T,
) {
    assert!(param.len() == grad.len() && m.len() == grad.len() && v.len() == grad.len());
    let one = T::one();
    let bc1 = one - beta1.powi(t as i32);
    let bc2 = one - beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i] + weight_decay * param[i];
        m[i] = beta1 * m[i] + (one - beta1) * g;
        v[i] = beta2 * v[i] + (one - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Optimizer state for a whole network.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    kind: Optimizer,
    weight_decay: T,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: Optimizer, weight_decay: f64) -> Self {
        OptimizerState {
            kind,
            weight_decay: T::lit(weight_decay),
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, lr: T) {
        let mut slots = net.param_slots();
        if self.first.is_empty() {
            self.first = slots
                .iter()
                .map(|s| vec![T::zero(); s.value.len()])
                .collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        for (i, slot) in slots.iter_mut().enumerate() {
            let decay = if slot.decay {
                self.weight_decay
            } else {
                T::zero()
            };
            match self.kind {
                Optimizer::Adam { beta1, beta2, eps } => adam_step(
                    slot.value,
                    slot.grad,
                    &mut self.first[i],
                    &mut self.second[i],
                    self.steps,
                    lr,
                    T::lit(beta1),
                    T::lit(beta2),
                    T::lit(eps),
                    decay,
                ),
                Optimizer::Sgd { momentum } => {
                    let mu = T::lit(momentum);
                    let vel = &mut self.first[i];
                    for ((p, &g), v) in slot.value.iter_mut().zip(slot.grad).zip(vel.iter_mut()) {
                        *v = mu * *v + g + decay * *p;
                        *p = *p - lr * *v;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_metric: f64,
    pub val_loss: Option<f64>,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Free-form run label; empty unless the caller sets one.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    /// `accuracy` or `rmse`.
    pub metric: String,
    pub params: usize,
    /// Metrics before the first update (epoch 0).
    pub initial: EpochStats,
    pub epochs: Vec<EpochStats>,
    /// Final values plus task-specific extras, e.g. `lattice_accuracy`.
    pub summary: BTreeMap<String, f64>,
}

impl TrainReport {
    pub fn last(&self) -> &EpochStats {
        self.epochs.last().unwrap_or(&self.initial)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-epoch curves, epoch 0 being the untrained network.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,lr,train_loss,train_metric,val_loss,val_metric\n");
        for e in std::iter::once(&self.initial).chain(&self.epochs) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch,
                e.lr,
                e.train_loss,
                e.train_metric,
                opt(e.val_loss),
                opt(e.val_metric)
            );
        }
        out
    }
}

/// Name of the metric reported for a task.
pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "rmse",
        _ => "accuracy",
    }
}

/// Accuracy (classification, binary) or RMSE (regression) of raw outputs.
pub fn metric<T: Scalar>(task: Task, out: &Matrix<T>, targets: &Matrix<T>) -> f64 {
    let n = out.rows().max(1) as f64;
    match task {
        Task::Binary => {
            let hits = out
                .as_slice()
                .iter()
                .zip(targets.as_slice())
                .filter(|(&z, &y)| (z > T::zero()) == (y > T::lit(0.5)))
                .count();
            hits as f64 / n
        }
        Task::Classification { .. } => {
            let hits = out
                .row_chunks()
                .zip(targets.row_chunks())
                .filter(|(z, y)| argmax(z) == argmax(y))
                .count();
            hits as f64 / n
        }
        Task::Regression => {
            let sq: f64 = out
                .as_slice()
                .iter()
                .zip(targets.as_slice())
                .map(|(&z, &y)| (z - y).as_f64().powi(2))
                .sum();
            (sq / out.as_slice().len().max(1) as f64).sqrt()
        }
    }
}

const EVAL_CHUNK: usize = 4096;

/// Inference-mode outputs over a dataset, in bounded chunks.
pub fn predict_all<T: Scalar>(net: &Network<T>, inputs: &Matrix<T>) -> Matrix<T> {
    let n = inputs.rows();
    if n <= EVAL_CHUNK {
        return net.predict(inputs);
    }
    let mut data = Vec::with_capacity(n * net.output_width());
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        data.extend(net.predict(&inputs.select_rows(&idx)).into_vec());
        start += EVAL_CHUNK;
    }
    Matrix::from_vec(n, net.output_width(), data)
}

/// `(loss, metric)` of the network on a dataset in inference mode.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset<T>, loss: Loss) -> (f64, f64) {
    let out = predict_all(net, &data.inputs);
    let (l, _) = loss.evaluate(&out, &data.targets);
    (l.as_f64(), metric(data.task, &out, &data.targets))
}

fn stats<T: Scalar>(
    net: &Network<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    loss: Loss,
    epoch: usize,
    lr: f64,
) -> EpochStats {
    let (train_loss, train_metric) = evaluate(net, train, loss);
    let v = val.map(|d| evaluate(net, d, loss));
    EpochStats {
        epoch,
        lr,
        train_loss,
        train_metric,
        val_loss: v.map(|x| x.0),
        val_metric: v.map(|x| x.1),
    }
}

/// Train `net` on `train` with mini-batch updates.
///
/// Shuffling derives from `config.seed`; with a fixed seed and inputs the
/// report is bit-identical across runs. A non-finite forward value or loss
/// aborts with [`Error::NonFinite`].
pub fn fit<T: Scalar>(
    net: &mut Network<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    for d in std::iter::once(train).chain(val) {
        if d.input_width() != net.input_width() || d.target_width() != net.output_width() {
            return Err(Error::Config(format!(
                "dataset is {}→{}, network is {}→{}",
                d.input_width(),
                d.target_width(),
                net.input_width(),
                net.output_width()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = OptimizerState::new(config.optimizer, config.weight_decay);
    let n = train.len();
    let batches = n.div_ceil(config.batch_size);
    let total_steps = batches * config.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    let initial = stats(
        net,
        train,
        val,
        config.loss,
        0,
        config.lr_at(0, total_steps),
    );
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut lr = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train.subset(idx);
            let (out, cache) = net.forward(&batch.inputs, true);
            if let Some(layer) = cache.non_finite_layer() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    layer,
                });
            }
            let (loss, grad) = config.loss.evaluate(&out, &batch.targets);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    layer: net.num_layers(),
                });
            }
            net.backward(&cache, &grad);
            lr = config.lr_at(step, total_steps);
            opt.step(net, T::lit(lr));
            step += 1;
        }
        epochs.push(stats(net, train, val, config.loss, epoch, lr));
    }

    let last = epochs.last().expect("at least one epoch");
    let mut summary = BTreeMap::new();
    summary.insert("train_loss".to_string(), last.train_loss);
    summary.insert(
        format!("train_{}", metric_name(train.task)),
        last.train_metric,
    );
    if let (Some(l), Some(m)) = (last.val_loss, last.val_metric) {
        summary.insert("val_loss".to_string(), l);
        summary.insert(format!("val_{}", metric_name(train.task)), m);
    }
    Ok(TrainReport {
        label: String::new(),
        metric: metric_name(train.task).to_string(),
        params: net.num_params(),
        initial,
        epochs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{Activation, Kind};
    use crate::data::gen_parity4;
    use crate::network::LayerSpec;

    #[test]
    fn one_cycle_shape() {
        let (total, max) = (1000, 0.01);
        assert!((one_cycle_lr(0, total, max, 0.25) - max / 25.0).abs() < 1e-15);
        // 0.25 * 999 is not an integer step; use a fraction that lands on one
        let pf = 333.0 / 999.0;
        assert!((one_cycle_lr(333, total, max, pf) - max).abs() < 1e-15);
        let end = one_cycle_lr(total - 1, total, max, 0.25);
        assert!((end - max / 1e4).abs() <= 0.01 * max / 1e4);
        let mut prev = 0.0;
        for s in 0..=333 {
            let lr = one_cycle_lr(s, total, max, pf);
            assert!(lr >= prev);
            prev = lr;
        }
        for s in 334..total {
            let lr = one_cycle_lr(s, total, max, pf);
            assert!(lr <= prev);
            prev = lr;
        }
        assert_eq!(one_cycle_lr(0, 1, max, 0.3), max);
    }

    // Reference Adam written out independently, one scalar at a time.
    fn reference_adam(p: f64, g: f64, steps: usize, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let (mut m, mut v, mut p) = (0.0, 0.0, p);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn adam_matches_reference() {
        for &g in &[0.3, -2.0, 1e-6] {
            let mut p = [1.5];
            let (mut m, mut v) = ([0.0], [0.0]);
            for t in 1..=5 {
                adam_step(&mut p, &[g], &mut m, &mut v, t, 0.01, 0.9, 0.999, 1e-8, 0.0);
            }
            assert!((p[0] - reference_adam(1.5, g, 5, 0.01)).abs() < 1e-15);
        }
        // first step moves by lr·g/(|g| + eps) after bias correction
        let mut p = [0.0_f64];
        adam_step(
            &mut p,
            &[0.5],
            &mut [0.0],
            &mut [0.0],
            1,
            0.1,
            0.9,
            0.999,
            1e-8,
            0.0,
        );
        assert!((p[0] + 0.1 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_grad_is_noop_and_decay_is_coupled() {
        let mut p = [0.7, -0.2];
        adam_step(
            &mut p,
            &[0.0, 0.0],
            &mut [0.0; 2],
            &mut [0.0; 2],
            1,
            0.1,
            0.9,
            0.999,
            1e-8,
            0.0,
        );
        assert_eq!(p, [0.7, -0.2]);
        // decay alone acts like a gradient of wd·p
        let mut q = [0.7];
        adam_step(
            &mut q,
            &[0.0],
            &mut [0.0],
            &mut [0.0],
            1,
            0.1,
            0.9,
            0.999,
            1e-8,
            0.5,
        );
        let mut r = [0.7];
        adam_step(
            &mut r,
            &[0.35],
            &mut [0.0],
            &mut [0.0],
            1,
            0.1,
            0.9,
            0.999,
            1e-8,
            0.0,
        );
        assert_eq!(q, r);
    }

    #[test]
    fn adam_tensors_update_independently() {
        let (mut a, mut b) = ([1.0, 2.0], [3.0]);
        let (mut ma, mut va, mut mb, mut vb) = ([0.0; 2], [0.0; 2], [0.0], [0.0]);
        adam_step(
            &mut a,
            &[0.1, -0.1],
            &mut ma,
            &mut va,
            1,
            0.01,
            0.9,
            0.999,
            1e-8,
            0.0,
        );
        adam_step(
            &mut b,
            &[0.0],
            &mut mb,
            &mut vb,
            1,
            0.01,
            0.9,
            0.999,
            1e-8,
            0.0,
        );
        assert_eq!(b, [3.0]);
        assert!(a[0] < 1.0 && a[1] > 2.0);
    }

    #[test]
    fn bce_is_stable() {
        let z = Matrix::from_rows(&[vec![1e6_f64], vec![-1e6], vec![0.0]]);
        let y = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![1.0]]);
        let (l, g) = Loss::BceWithLogits.evaluate(&z, &y);
        assert!(l.is_finite() && g.is_finite());
        assert!((l - (2e6 + std::f64::consts::LN_2) / 3.0).abs() < 1e-6);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let z = Matrix::from_rows(&[vec![0.3_f64, -1.2, 2.0], vec![-0.4, 0.9, 0.1]]);
        let onehot = Matrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let bin = Matrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]]);
        for (loss, y) in [
            (Loss::CrossEntropy, &onehot),
            (Loss::BceWithLogits, &bin),
            (Loss::Mse, &onehot),
        ] {
            let (_, g) = loss.evaluate(&z, y);
            for i in 0..6 {
                let h = 1e-6;
                let mut zp = z.clone();
                zp.as_mut_slice()[i] += h;
                let mut zm = z.clone();
                zm.as_mut_slice()[i] -= h;
                let fd = (loss.evaluate(&zp, y).0 - loss.evaluate(&zm, y).0) / (2.0 * h);
                assert!((fd - g.as_slice()[i]).abs() < 1e-8, "{loss:?} {i}");
            }
        }
    }

    fn parity_net(seed: u64) -> Network<f64> {
        let xnor = Activation::ail(Kind::Xnor);
        Network::new(
            vec![
                LayerSpec::affine(4, 4),
                LayerSpec::act(xnor),
                LayerSpec::affine(2, 2),
                LayerSpec::act(xnor),
                LayerSpec::affine(1, 1),
            ],
            seed,
        )
        .unwrap()
    }

    fn config(lr: f64) -> TrainConfig {
        TrainConfig {
            optimizer: Optimizer::default(),
            max_lr: lr,
            schedule: Schedule::OneCycle { peak_fraction: 0.3 },
            weight_decay: 1e-4,
            epochs: 3,
            batch_size: 16,
            seed: 2,
            loss: Loss::BceWithLogits,
        }
    }

    #[test]
    fn zero_lr_leaves_metrics_unchanged() {
        let data = gen_parity4::<f64>(64, 1);
        let mut net = parity_net(1);
        let mut cfg = config(0.0);
        cfg.weight_decay = 0.0;
        let report = fit(&mut net, &data, None, &cfg).unwrap();
        for e in &report.epochs {
            assert_eq!(e.train_loss, report.initial.train_loss);
            assert_eq!(e.train_metric, report.initial.train_metric);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = gen_parity4::<f64>(64, 1);
        let a = fit(&mut parity_net(4), &data, None, &config(0.01)).unwrap();
        let b = fit(&mut parity_net(4), &data, None, &config(0.01)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.to_csv().lines().count() == 5);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(0.01);
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(-1.0);
        assert!(cfg.validate().is_err());
        cfg.max_lr = 0.1;
        cfg.schedule = Schedule::OneCycle { peak_fraction: 1.0 };
        assert!(cfg.validate().is_err());
        let json = r#"{"max_lr": 0.01, "epochs": 2, "batch_size": 8, "loss": "mse"}"#;
        let cfg: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.optimizer, Optimizer::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn nan_aborts_with_location() {
        let data = gen_parity4::<f64>(32, 1);
        let mut net = parity_net(1);
        net.set_param(0, f64::NAN);
        let err = fit(&mut net, &data, None, &config(0.01)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::NonFinite {
                    epoch: 1,
                    batch: 0,
                    layer: 0
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let data = crate::data::gen_xor2::<f64>();
        assert!(fit(&mut parity_net(1), &data, None, &config(0.01)).is_err());
    }
}
