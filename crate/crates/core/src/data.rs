//! Synthetic tasks and MNIST IDX ingestion.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activations::xnor_il;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Scalar};
use crate::tensor::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One-hot targets over `classes` columns.
    Classification {
        classes: usize,
    },
    /// Single `{0, 1}` target column, predicted as a logit.
    Binary,
    Regression,
}

#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub inputs: Matrix<T>,
    pub targets: Matrix<T>,
    pub task: Task,
    /// Free-form provenance, e.g. which parity is the positive class.
    pub note: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Matrix<T>, targets: Matrix<T>, task: Task) -> Result<Self> {
        if inputs.rows() == 0 || inputs.rows() != targets.rows() {
            return Err(Error::Config(format!(
                "dataset needs matching non-zero row counts, got {} inputs and {} targets",
                inputs.rows(),
                targets.rows()
            )));
        }
        if !inputs.is_finite() || !targets.is_finite() {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        let ok = match task {
            Task::Classification { classes } => {
                targets.cols() == classes
                    && targets.row_chunks().all(|r| {
                        r.iter().filter(|&&v| v == T::one()).count() == 1
                            && r.iter().all(|&v| v == T::one() || v == T::zero())
                    })
            }
            Task::Binary => {
                targets.cols() == 1
                    && targets
                        .as_slice()
                        .iter()
                        .all(|&v| v == T::one() || v == T::zero())
            }
            Task::Regression => targets.cols() >= 1,
        };
        if !ok {
            return Err(Error::Config(format!("targets do not fit task {task:?}")));
        }
        Ok(Dataset {
            inputs,
            targets,
            task,
            note: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_width(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_width(&self) -> usize {
        self.targets.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select_rows(idx),
            task: self.task,
            note: self.note.clone(),
        }
    }

    /// Split off the last `n_tail` rows.
    pub fn split_tail(&self, n_tail: usize) -> (Self, Self) {
        assert!(n_tail < self.len(), "split_tail: tail larger than dataset");
        let head: Vec<usize> = (0..self.len() - n_tail).collect();
        let tail: Vec<usize> = (self.len() - n_tail..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Class index per row for classification, `{0, 1}` for binary.
    pub fn labels(&self) -> Vec<usize> {
        self.targets
            .row_chunks()
            .map(|r| match self.task {
                Task::Binary => usize::from(r[0] > T::lit(0.5)),
                _ => argmax(r),
            })
            .collect()
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Parity label: 1 when the number of positive inputs is even.
pub fn parity_label(x: &[f64]) -> f64 {
    let positives = x.iter().filter(|&&v| v > 0.0).count();
    if positives % 2 == 0 {
        1.0
    } else {
        0.0
    }
}

const PARITY_NOTE: &str = "target 1 = even number of positive inputs";

/// `n` samples of four `Uniform(-1, 1)` logits (never exactly zero) labelled
/// by [`parity_label`].
pub fn gen_parity4<T: Scalar>(n: usize, seed: u64) -> Dataset<T> {
    assert!(n >= 1, "gen_parity4: n must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n * 4);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = [0.0; 4];
        for v in &mut row {
            *v = loop {
                let u: f64 = rng.random_range(-1.0..1.0);
                if u != 0.0 {
                    break u;
                }
            };
        }
        ys.push(T::lit(parity_label(&row)));
        xs.extend(row.iter().map(|&v| T::lit(v)));
    }
    Dataset::new(
        Matrix::from_vec(n, 4, xs),
        Matrix::from_vec(n, 1, ys),
        Task::Binary,
    )
    .expect("parity data is well formed")
    .with_note(PARITY_NOTE)
}

/// The 16 points of `{-1, +1}^4` with parity labels.
pub fn parity4_lattice<T: Scalar>() -> Dataset<T> {
    let mut xs = Vec::with_capacity(64);
    let mut ys = Vec::with_capacity(16);
    for code in 0..16u32 {
        let row: Vec<f64> = (0..4)
            .map(|b| if code >> b & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        ys.push(T::lit(parity_label(&row)));
        xs.extend(row.iter().map(|&v| T::lit(v)));
    }
    Dataset::new(
        Matrix::from_vec(16, 4, xs),
        Matrix::from_vec(16, 1, ys),
        Task::Binary,
    )
    .expect("lattice is well formed")
    .with_note(PARITY_NOTE)
}

/// Nested exact XNOR over eight logits, squashed to a probability.
pub fn nested_xnor8_target(x: &[f64]) -> f64 {
    assert_eq!(x.len(), 8);
    let left = xnor_il(xnor_il(x[2], x[5]), xnor_il(x[3], x[4]));
    let right = xnor_il(xnor_il(x[6], x[7]), xnor_il(x[0], x[1]));
    sigmoid(xnor_il(left, right))
}

/// `n` samples of eight `Uniform(-2, 2)` inputs with [`nested_xnor8_target`].
pub fn gen_nested_xnor8<T: Scalar>(n: usize, seed: u64) -> Dataset<T> {
    assert!(n >= 1, "gen_nested_xnor8: n must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n * 8);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        ys.push(T::lit(nested_xnor8_target(&row)));
        xs.extend(row.iter().map(|&v| T::lit(v)));
    }
    Dataset::new(
        Matrix::from_vec(n, 8, xs),
        Matrix::from_vec(n, 1, ys),
        Task::Regression,
    )
    .expect("nested xnor data is well formed")
}

/// The four XOR points `(±1, ±1)`; label 1 when the signs differ.
pub fn gen_xor2<T: Scalar>() -> Dataset<T> {
    let pts = [
        (1.0, 1.0, 0.0),
        (1.0, -1.0, 1.0),
        (-1.0, 1.0, 1.0),
        (-1.0, -1.0, 0.0),
    ];
    let xs = pts
        .iter()
        .flat_map(|&(a, b, _)| [T::lit(a), T::lit(b)])
        .collect();
    let ys = pts.iter().map(|&(_, _, c)| T::lit(c)).collect();
    Dataset::new(
        Matrix::from_vec(4, 2, xs),
        Matrix::from_vec(4, 1, ys),
        Task::Binary,
    )
    .expect("xor points are well formed")
    .with_note("target 1 = operands of opposite sign")
}

/// Dense grid over `[-extent, extent]^2` with `points` samples per axis, for
/// decision-surface export. Rows are `(x, y)` with `x` varying fastest.
pub fn xor2_grid<T: Scalar>(extent: f64, points: usize) -> Matrix<T> {
    assert!(points >= 2);
    let step = 2.0 * extent / (points - 1) as f64;
    let mut data = Vec::with_capacity(points * points * 2);
    for j in 0..points {
        for i in 0..points {
            data.push(T::lit(-extent + i as f64 * step));
            data.push(T::lit(-extent + j as f64 * step));
        }
    }
    Matrix::from_vec(points * points, 2, data)
}

fn read_u32(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                field,
                format!("file ends before byte offset {}", offset + 4),
            )
        })
}

/// Parsed IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "images magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            "images magic",
            format!("expected 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let n = read_u32(bytes, 4, "images count")? as usize;
    let rows = read_u32(bytes, 8, "images rows")? as usize;
    let cols = read_u32(bytes, 12, "images cols")? as usize;
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::format(
            "images payload",
            format!(
                "truncated at byte offset {}, expected {} bytes",
                bytes.len(),
                16 + need
            ),
        ));
    }
    Ok((n, rows, cols, &payload[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "labels magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            "labels magic",
            format!("expected 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let n = read_u32(bytes, 4, "labels count")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::format(
            "labels payload",
            format!(
                "truncated at byte offset {}, expected {} bytes",
                bytes.len(),
                8 + n
            ),
        ));
    }
    Ok(&payload[..n])
}

/// Build a 10-class dataset from IDX image and label bytes; pixels scaled to `[0, 1]`.
pub fn mnist_from_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::format(
            "labels count",
            format!("{} labels for {} images", labels.len(), n),
        ));
    }
    if n == 0 {
        return Err(Error::format("images count", "no images"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::format(
            "labels payload",
            format!("label {bad} outside 0..9"),
        ));
    }
    let width = rows * cols;
    let scale = T::lit(1.0 / 255.0);
    let inputs = Matrix::from_vec(
        n,
        width,
        pixels.iter().map(|&p| T::lit(p as f64) * scale).collect(),
    );
    let mut targets = Matrix::zeros(n, 10);
    for (i, &l) in labels.iter().enumerate() {
        targets[(i, l as usize)] = T::one();
    }
    Dataset::new(inputs, targets, Task::Classification { classes: 10 })
}

pub fn load_mnist_idx<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let mut images = Vec::new();
    std::fs::File::open(images_path)?.read_to_end(&mut images)?;
    let mut labels = Vec::new();
    std::fs::File::open(labels_path)?.read_to_end(&mut labels)?;
    mnist_from_idx(&images, &labels)
}

/// Emit an IDX image file.
pub fn write_idx_images<W: Write>(mut w: W, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = pixels.len() / (rows * cols);
    assert_eq!(
        n * rows * cols,
        pixels.len(),
        "pixel count not a multiple of the image size"
    );
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(pixels)?;
    Ok(())
}

/// Emit an IDX label file.
pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> Result<()> {
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_labels() {
        assert_eq!(parity_label(&[0.5, 0.1, 0.9, 0.2]), 1.0);
        assert_eq!(parity_label(&[0.5, -0.1, -0.9, -0.2]), 0.0);
        let lattice = parity4_lattice::<f64>();
        assert_eq!(lattice.len(), 16);
        let ones = lattice
            .targets
            .as_slice()
            .iter()
            .filter(|&&v| v == 1.0)
            .count();
        assert_eq!(ones, 8);
    }

    #[test]
    fn parity_generator() {
        let a = gen_parity4::<f64>(256, 1);
        let b = gen_parity4::<f64>(256, 1);
        assert_eq!(a.inputs, b.inputs);
        assert!(a
            .inputs
            .as_slice()
            .iter()
            .all(|&v| v != 0.0 && v.abs() < 1.0));
        for r in 0..a.len() {
            assert_eq!(a.targets[(r, 0)], parity_label(a.inputs.row(r)));
        }
        assert!(a.note.contains("even"));
    }

    // Direct probability-space nesting, valid while |x| <= 2 keeps p away from 0 and 1.
    fn naive_target(x: &[f64]) -> f64 {
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let xn = |a: f64, b: f64| {
            let p = s(a) * s(b) + s(-a) * s(-b);
            (p / (1.0 - p)).ln()
        };
        let z = xn(
            xn(xn(x[2], x[5]), xn(x[3], x[4])),
            xn(xn(x[6], x[7]), xn(x[0], x[1])),
        );
        s(z)
    }

    #[test]
    fn nested_xnor_matches_naive_evaluation() {
        let d = gen_nested_xnor8::<f64>(2000, 4);
        for r in 0..d.len() {
            let x = d.inputs.row(r);
            assert!((d.targets[(r, 0)] - naive_target(x)).abs() < 1e-12);
            assert!(x.iter().all(|v| v.abs() <= 2.0));
        }
    }

    #[test]
    fn nested_xnor_symmetries() {
        assert_eq!(nested_xnor8_target(&[0.0; 8]), 0.5);
        let x = [0.3, -1.2, 1.7, 0.4, -0.9, -1.5, 0.8, 1.1];
        let mut swapped = x;
        swapped.swap(2, 5);
        assert_eq!(nested_xnor8_target(&x), nested_xnor8_target(&swapped));
        let mut neg = x;
        neg[6] = -neg[6];
        let t = nested_xnor8_target(&x);
        assert!((nested_xnor8_target(&neg) - (1.0 - t)).abs() < 1e-12);
    }

    #[test]
    fn xor_points() {
        let d = gen_xor2::<f64>();
        let find = |a: f64, b: f64| {
            (0..4)
                .find(|&r| d.inputs.row(r) == [a, b])
                .map(|r| d.targets[(r, 0)])
                .unwrap()
        };
        assert_eq!(find(1.0, 1.0), 0.0);
        assert_eq!(find(1.0, -1.0), 1.0);
        assert_eq!(find(-1.0, -1.0), 0.0);
        let g = xor2_grid::<f64>(2.0, 5);
        assert_eq!(g.shape(), (25, 2));
        assert_eq!(g.row(0), [-2.0, -2.0]);
        assert_eq!(g.row(24), [2.0, 2.0]);
    }

    fn synthetic_idx(n: usize) -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..n * 4).map(|i| (i * 37 % 256) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let (mut img, mut lab) = (Vec::new(), Vec::new());
        write_idx_images(&mut img, 2, 2, &pixels).unwrap();
        write_idx_labels(&mut lab, &labels).unwrap();
        (img, lab)
    }

    #[test]
    fn idx_roundtrip() {
        let (img, lab) = synthetic_idx(12);
        let d = mnist_from_idx::<f64>(&img, &lab).unwrap();
        assert_eq!(d.inputs.shape(), (12, 4));
        assert_eq!(d.labels(), (0..12).map(|i| i % 10).collect::<Vec<_>>());
        assert!((d.inputs[(0, 1)] - 37.0 / 255.0).abs() < 1e-15);
        assert!(d
            .inputs
            .as_slice()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn idx_errors() {
        let (img, lab) = synthetic_idx(5);
        let err = mnist_from_idx::<f64>(&img, &img).unwrap_err().to_string();
        assert!(err.contains("labels magic"), "{err}");
        let err = mnist_from_idx::<f64>(&lab, &lab).unwrap_err().to_string();
        assert!(err.contains("images magic"), "{err}");
        let err = mnist_from_idx::<f64>(&img[..img.len() - 2], &lab)
            .unwrap_err()
            .to_string();
        assert!(err.contains("byte offset 34"), "{err}");
        let (_, lab6) = synthetic_idx(6);
        let err = mnist_from_idx::<f64>(&img, &lab6).unwrap_err().to_string();
        assert!(err.contains("labels count"), "{err}");
        assert!(mnist_from_idx::<f64>(&img[..6], &lab).is_err());
    }

    #[test]
    fn dataset_validation() {
        let x = Matrix::<f64>::zeros(2, 3);
        assert!(Dataset::new(x.clone(), Matrix::zeros(3, 1), Task::Regression).is_err());
        assert!(Dataset::new(x.clone(), Matrix::filled(2, 1, 0.5), Task::Binary).is_err());
        assert!(Dataset::new(
            x.clone(),
            Matrix::zeros(2, 10),
            Task::Classification { classes: 10 }
        )
        .is_err());
        assert!(Dataset::new(x, Matrix::filled(2, 1, f64::NAN), Task::Regression).is_err());
    }
}
