//! Feed-forward networks of affine, batch-norm, and activation layers.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::tensor::Matrix;

pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Affine {
        input: usize,
        output: usize,
    },
    BatchNorm {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    Act {
        spec: EnsembleSpec,
    },
}

impl LayerSpec {
    pub fn affine(input: usize, output: usize) -> Self {
        LayerSpec::Affine { input, output }
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            momentum: DEFAULT_BN_MOMENTUM,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn act(spec: impl Into<EnsembleSpec>) -> Self {
        LayerSpec::Act { spec: spec.into() }
    }
}

/// Width of the network output for a chain of specs, validating the chain.
///
/// Returns `(input_width, output_width)`.
pub fn chain_widths(specs: &[LayerSpec]) -> Result<(usize, usize)> {
    let input = match specs.first() {
        Some(LayerSpec::Affine { input, .. }) => *input,
        Some(LayerSpec::BatchNorm { channels, .. }) => *channels,
        Some(LayerSpec::Act { .. }) => {
            return Err(Error::Chain {
                layer: 0,
                reason: "first layer must be affine or batch-norm".into(),
            })
        }
        None => {
            return Err(Error::Chain {
                layer: 0,
                reason: "empty network".into(),
            })
        }
    };
    let mut width = input;
    for (i, spec) in specs.iter().enumerate() {
        width = match spec {
            LayerSpec::Affine { input, output } => {
                if *input != width || *output == 0 {
                    return Err(Error::Chain {
                        layer: i,
                        reason: format!(
                            "affine expects {input} inputs, previous layer gives {width}"
                        ),
                    });
                }
                *output
            }
            LayerSpec::BatchNorm {
                channels,
                momentum,
                epsilon,
            } => {
                if *channels != width || !(0.0..=1.0).contains(momentum) || !(*epsilon > 0.0) {
                    return Err(Error::Chain {
                        layer: i,
                        reason: format!("batch-norm over {channels} channels after width {width}"),
                    });
                }
                width
            }
            LayerSpec::Act { spec } => spec.output_width(width).map_err(|e| Error::Chain {
                layer: i,
                reason: e.to_string(),
            })?,
        };
    }
    Ok((input, width))
}

#[derive(Debug, Clone)]
enum Layer<T> {
    Affine {
        weight: Matrix<T>,
        bias: Matrix<T>,
        grad_weight: Matrix<T>,
        grad_bias: Matrix<T>,
    },
    BatchNorm {
        gamma: Matrix<T>,
        beta: Matrix<T>,
        grad_gamma: Matrix<T>,
        grad_beta: Matrix<T>,
        running_mean: Vec<T>,
        running_var: Vec<T>,
        momentum: T,
        epsilon: T,
    },
    Act(EnsembleSpec),
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Input(Matrix<T>),
    Normalized { x_hat: Matrix<T>, inv_std: Vec<T> },
}

/// Intermediate values recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    layers: Vec<LayerCache<T>>,
    version: u64,
    training: bool,
    non_finite_layer: Option<usize>,
}

impl<T> Cache<T> {
    /// Index of the first layer whose output contained NaN or infinity.
    pub fn non_finite_layer(&self) -> Option<usize> {
        self.non_finite_layer
    }
}

/// A trainable parameter with its gradient.
pub struct ParamSlot<'a, T> {
    pub value: &'a mut [T],
    pub grad: &'a [T],
    /// Whether weight decay applies (affine weights only).
    pub decay: bool,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    input_width: usize,
    output_width: usize,
    seed: u64,
    version: u64,
}

impl<T: Scalar> Network<T> {
    /// Build a network with affine weights drawn from
    /// `Uniform(-sqrt(1/in), sqrt(1/in))`, zero biases, `γ = 1`, `β = 0`.
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let (input_width, output_width) = chain_widths(&specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|spec| match spec {
                LayerSpec::Affine { input, output } => {
                    let bound = (1.0 / *input as f64).sqrt();
                    Layer::Affine {
                        weight: Matrix::uniform(*input, *output, bound, &mut rng),
                        bias: Matrix::zeros(1, *output),
                        grad_weight: Matrix::zeros(*input, *output),
                        grad_bias: Matrix::zeros(1, *output),
                    }
                }
                LayerSpec::BatchNorm {
                    channels,
                    momentum,
                    epsilon,
                } => Layer::BatchNorm {
                    gamma: Matrix::filled(1, *channels, T::one()),
                    beta: Matrix::zeros(1, *channels),
                    grad_gamma: Matrix::zeros(1, *channels),
                    grad_beta: Matrix::zeros(1, *channels),
                    running_mean: vec![T::zero(); *channels],
                    running_var: vec![T::one(); *channels],
                    momentum: T::lit(*momentum),
                    epsilon: T::lit(*epsilon),
                },
                LayerSpec::Act { spec } => Layer::Act(spec.clone()),
            })
            .collect();
        Ok(Network {
            specs,
            layers,
            input_width,
            output_width,
            seed,
            version: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Affine weight matrix (`input x output`) of layer `index`.
    pub fn affine_weight(&self, index: usize) -> Option<&Matrix<T>> {
        match self.layers.get(index)? {
            Layer::Affine { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn affine_weight_mut(&mut self, index: usize) -> Option<&mut Matrix<T>> {
        self.version += 1;
        match self.layers.get_mut(index)? {
            Layer::Affine { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn affine_bias_mut(&mut self, index: usize) -> Option<&mut Matrix<T>> {
        self.version += 1;
        match self.layers.get_mut(index)? {
            Layer::Affine { bias, .. } => Some(bias),
            _ => None,
        }
    }

    /// Total number of trainable scalars.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Affine { weight, bias, .. } => {
                    weight.as_slice().len() + bias.as_slice().len()
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    gamma.as_slice().len() + beta.as_slice().len()
                }
                Layer::Act(_) => 0,
            })
            .sum()
    }

    /// Trainable parameters and their gradients, in layer order.
    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_, T>> {
        self.version += 1;
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Affine {
                    weight,
                    bias,
                    grad_weight,
                    grad_bias,
                } => {
                    out.push(ParamSlot {
                        value: weight.as_mut_slice(),
                        grad: grad_weight.as_slice(),
                        decay: true,
                    });
                    out.push(ParamSlot {
                        value: bias.as_mut_slice(),
                        grad: grad_bias.as_slice(),
                        decay: false,
                    });
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    grad_gamma,
                    grad_beta,
                    ..
                } => {
                    out.push(ParamSlot {
                        value: gamma.as_mut_slice(),
                        grad: grad_gamma.as_slice(),
                        decay: false,
                    });
                    out.push(ParamSlot {
                        value: beta.as_mut_slice(),
                        grad: grad_beta.as_slice(),
                        decay: false,
                    });
                }
                Layer::Act(_) => {}
            }
        }
        out
    }

    /// Flat copy of every trainable parameter, in [`Network::param_slots`] order.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            match layer {
                Layer::Affine { weight, bias, .. } => {
                    out.extend_from_slice(weight.as_slice());
                    out.extend_from_slice(bias.as_slice());
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.extend_from_slice(gamma.as_slice());
                    out.extend_from_slice(beta.as_slice());
                }
                Layer::Act(_) => {}
            }
        }
        out
    }

    /// Flat copy of every parameter gradient, aligned with [`Network::params_flat`].
    pub fn grads_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            match layer {
                Layer::Affine {
                    grad_weight,
                    grad_bias,
                    ..
                } => {
                    out.extend_from_slice(grad_weight.as_slice());
                    out.extend_from_slice(grad_bias.as_slice());
                }
                Layer::BatchNorm {
                    grad_gamma,
                    grad_beta,
                    ..
                } => {
                    out.extend_from_slice(grad_gamma.as_slice());
                    out.extend_from_slice(grad_beta.as_slice());
                }
                Layer::Act(_) => {}
            }
        }
        out
    }

    /// Overwrite the parameter at flat index `i` (see [`Network::params_flat`]).
    pub fn set_param(&mut self, mut i: usize, value: T) {
        for slot in self.param_slots() {
            if i < slot.value.len() {
                slot.value[i] = value;
                return;
            }
            i -= slot.value.len();
        }
        panic!("parameter index out of range");
    }

    /// Forward pass. Batch-norm layers use batch statistics (and update their
    /// running estimates) when `training`, running statistics otherwise.
    pub fn forward(&mut self, x: &Matrix<T>, training: bool) -> (Matrix<T>, Cache<T>) {
        assert_eq!(
            x.cols(),
            self.input_width,
            "network forward: expected {} input columns, got {}",
            self.input_width,
            x.cols()
        );
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut non_finite_layer = None;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (out, cache) = forward_layer(layer, h, training);
            if non_finite_layer.is_none() && !out.is_finite() {
                non_finite_layer = Some(i);
            }
            caches.push(cache);
            h = out;
        }
        (
            h,
            Cache {
                layers: caches,
                version: self.version,
                training,
                non_finite_layer,
            },
        )
    }

    /// Inference-mode forward pass that leaves the network untouched.
    pub fn predict(&self, x: &Matrix<T>) -> Matrix<T> {
        assert_eq!(
            x.cols(),
            self.input_width,
            "network predict: input width mismatch"
        );
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Affine { weight, bias, .. } => h.matmul(weight).add_row(bias),
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    epsilon,
                    ..
                } => {
                    let inv: Vec<T> = running_var
                        .iter()
                        .map(|&v| T::one() / (v + *epsilon).sqrt())
                        .collect();
                    normalize_with(&h, running_mean, &inv, gamma, beta).0
                }
                Layer::Act(spec) => spec.forward(&h),
            };
        }
        h
    }

    /// Backward pass from `dy = dL/d(output)`. Overwrites every parameter
    /// gradient and returns `dL/d(input)`.
    pub fn backward(&mut self, cache: &Cache<T>, dy: &Matrix<T>) -> Matrix<T> {
        assert!(
            cache.version == self.version && cache.layers.len() == self.layers.len(),
            "network backward: stale cache"
        );
        assert!(
            cache.training,
            "network backward: cache from an inference-mode forward"
        );
        let mut g = dy.clone();
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            g = match (layer, lc) {
                (
                    Layer::Affine {
                        weight,
                        grad_weight,
                        grad_bias,
                        ..
                    },
                    LayerCache::Input(x),
                ) => {
                    assert_eq!(
                        g.cols(),
                        weight.cols(),
                        "network backward: gradient width mismatch"
                    );
                    *grad_weight = x.t_matmul(&g);
                    *grad_bias = g.sum_rows();
                    g.matmul_t(weight)
                }
                (
                    Layer::BatchNorm {
                        gamma,
                        grad_gamma,
                        grad_beta,
                        ..
                    },
                    LayerCache::Normalized { x_hat, inv_std },
                ) => batch_norm_backward(&g, x_hat, inv_std, gamma, grad_gamma, grad_beta),
                (Layer::Act(spec), LayerCache::Input(z)) => spec.backward(z, &g),
                _ => panic!("network backward: cache does not match layers"),
            };
        }
        g
    }

    /// Write the network as a JSON header followed by little-endian `f64`
    /// parameter arrays.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = SavedHeader {
            format: FORMAT_TAG.to_string(),
            layers: self.specs.clone(),
            seed: self.seed,
            values: self.persisted_len(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for layer in &self.layers {
            for arr in persisted_arrays(layer) {
                for v in arr {
                    w.write_all(&v.as_f64().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn save_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| Error::format("header length", "file shorter than 8 bytes"))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(Error::format(
                "header length",
                format!("implausible header size {len}"),
            ));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)
            .map_err(|_| Error::format("header", "truncated JSON header"))?;
        let header: SavedHeader = serde_json::from_slice(&json)?;
        if header.format != FORMAT_TAG {
            return Err(Error::format(
                "format",
                format!("unknown tag {:?}", header.format),
            ));
        }
        let mut net = Network::new(header.layers, header.seed)?;
        if net.persisted_len() != header.values {
            return Err(Error::format(
                "values",
                format!(
                    "header declares {}, layers need {}",
                    header.values,
                    net.persisted_len()
                ),
            ));
        }
        let mut buf = [0u8; 8];
        let mut read = 0usize;
        for layer in &mut net.layers {
            for arr in persisted_arrays_mut(layer) {
                for v in arr.iter_mut() {
                    r.read_exact(&mut buf).map_err(|_| {
                        Error::format("values", format!("truncated after {read} parameters"))
                    })?;
                    *v = T::lit(f64::from_le_bytes(buf));
                    read += 1;
                }
            }
        }
        Ok(net)
    }

    pub fn load_from(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Network::load(std::io::BufReader::new(file))
    }

    fn persisted_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| persisted_arrays(l).iter().map(|a| a.len()).sum::<usize>())
            .sum()
    }
}

const FORMAT_TAG: &str = "logitgates-network-v1";

#[derive(Serialize, Deserialize)]
struct SavedHeader {
    format: String,
    layers: Vec<LayerSpec>,
    seed: u64,
    values: usize,
}

fn persisted_arrays<T: Scalar>(layer: &Layer<T>) -> Vec<&[T]> {
    match layer {
        Layer::Affine { weight, bias, .. } => vec![weight.as_slice(), bias.as_slice()],
        Layer::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            ..
        } => vec![gamma.as_slice(), beta.as_slice(), running_mean, running_var],
        Layer::Act(_) => vec![],
    }
}

fn persisted_arrays_mut<T: Scalar>(layer: &mut Layer<T>) -> Vec<&mut [T]> {
    match layer {
        Layer::Affine { weight, bias, .. } => vec![weight.as_mut_slice(), bias.as_mut_slice()],
        Layer::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            ..
        } => vec![
            gamma.as_mut_slice(),
            beta.as_mut_slice(),
            running_mean.as_mut_slice(),
            running_var.as_mut_slice(),
        ],
        Layer::Act(_) => vec![],
    }
}

fn forward_layer<T: Scalar>(
    layer: &mut Layer<T>,
    x: Matrix<T>,
    training: bool,
) -> (Matrix<T>, LayerCache<T>) {
    match layer {
        Layer::Affine { weight, bias, .. } => {
            let out = x.matmul(weight).add_row(bias);
            (out, LayerCache::Input(x))
        }
        Layer::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            momentum,
            epsilon,
            ..
        } => {
            let c = x.cols();
            let (mean, var) = if training {
                let n = T::lit(x.rows() as f64);
                let mean: Vec<T> = x.sum_rows().as_slice().iter().map(|&s| s / n).collect();
                let mut var = vec![T::zero(); c];
                for row in x.row_chunks() {
                    for j in 0..c {
                        let d = row[j] - mean[j];
                        var[j] = var[j] + d * d;
                    }
                }
                for v in &mut var {
                    *v = *v / n;
                }
                let unbias = if x.rows() > 1 {
                    n / (n - T::one())
                } else {
                    T::one()
                };
                for j in 0..c {
                    running_mean[j] =
                        (T::one() - *momentum) * running_mean[j] + *momentum * mean[j];
                    running_var[j] =
                        (T::one() - *momentum) * running_var[j] + *momentum * var[j] * unbias;
                }
                (mean, var)
            } else {
                (running_mean.clone(), running_var.clone())
            };
            let inv_std: Vec<T> = var
                .iter()
                .map(|&v| T::one() / (v + *epsilon).sqrt())
                .collect();
            let (out, x_hat) = normalize_with(&x, &mean, &inv_std, gamma, beta);
            (out, LayerCache::Normalized { x_hat, inv_std })
        }
        Layer::Act(spec) => {
            let out = spec.forward(&x);
            (out, LayerCache::Input(x))
        }
    }
}

fn normalize_with<T: Scalar>(
    x: &Matrix<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &Matrix<T>,
    beta: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>) {
    let mut x_hat = x.clone();
    let mut out = x.clone();
    let (g, b) = (gamma.as_slice(), beta.as_slice());
    for r in 0..x.rows() {
        let xh = x_hat.row_mut(r);
        for j in 0..xh.len() {
            xh[j] = (xh[j] - mean[j]) * inv_std[j];
        }
        let xh = x_hat.row(r).to_vec();
        let o = out.row_mut(r);
        for j in 0..o.len() {
            o[j] = g[j] * xh[j] + b[j];
        }
    }
    (out, x_hat)
}

fn batch_norm_backward<T: Scalar>(
    dy: &Matrix<T>,
    x_hat: &Matrix<T>,
    inv_std: &[T],
    gamma: &Matrix<T>,
    grad_gamma: &mut Matrix<T>,
    grad_beta: &mut Matrix<T>,
) -> Matrix<T> {
    let c = dy.cols();
    let n = T::lit(dy.rows() as f64);
    *grad_beta = dy.sum_rows();
    *grad_gamma = dy.mul(x_hat).sum_rows();
    let g = gamma.as_slice();
    // with d = dy·γ: dx = inv_std/N · (N·d - Σd - x̂·Σ(d·x̂))
    let sum_d: Vec<T> = (0..c).map(|j| grad_beta.as_slice()[j] * g[j]).collect();
    let sum_dx: Vec<T> = (0..c).map(|j| grad_gamma.as_slice()[j] * g[j]).collect();
    let mut dx = Matrix::zeros(dy.rows(), c);
    for r in 0..dy.rows() {
        let (dyr, xh) = (dy.row(r), x_hat.row(r));
        let out = dx.row_mut(r);
        for j in 0..c {
            out[j] = inv_std[j] / n * (n * dyr[j] * g[j] - sum_d[j] - xh[j] * sum_dx[j]);
        }
    }
    dx
}
