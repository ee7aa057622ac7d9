use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use logitgates::data::{
    gen_nested_xnor8, gen_parity4, gen_xor2, load_mnist_idx, parity4_lattice, xor2_grid,
};
use logitgates::numerics::sigmoid;
use logitgates::train::fit;
use logitgates::{Dataset, EnsembleSpec, LayerSpec, Network, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{env_seed, CmdResult, Failure, TrainArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Parity4,
    NestedXnor8,
    Xor2,
    Mnist,
}

impl TaskName {
    fn name(self) -> &'static str {
        match self {
            TaskName::Parity4 => "parity4",
            TaskName::NestedXnor8 => "nested_xnor8",
            TaskName::Xor2 => "xor2",
            TaskName::Mnist => "mnist",
        }
    }

    fn dims(self) -> (usize, usize) {
        match self {
            TaskName::Parity4 => (4, 1),
            TaskName::NestedXnor8 => (8, 1),
            TaskName::Xor2 => (2, 1),
            TaskName::Mnist => (784, 10),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskName,
    /// Ensemble text form, e.g. `xnor_ail` or `ail:or+and+xnor:d`.
    pub activation: EnsembleSpec,
    /// Pre-activation width of each hidden layer.
    pub widths: Vec<usize>,
    #[serde(default)]
    pub batch_norm: bool,
    /// Generated sample count for the synthetic tasks.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Directory with the four MNIST IDX files; falls back to LOGITGATES_MNIST_DIR.
    #[serde(default)]
    pub mnist_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Hidden blocks `Affine -> [BatchNorm] -> Act` per width, then an affine readout.
    pub fn layers(&self) -> Result<Vec<LayerSpec>, Failure> {
        let (input, output) = self.task.dims();
        let mut specs = Vec::new();
        let mut prev = input;
        for &w in &self.widths {
            specs.push(LayerSpec::affine(prev, w));
            if self.batch_norm {
                specs.push(LayerSpec::batch_norm(w));
            }
            specs.push(LayerSpec::act(self.activation.clone()));
            prev = self.activation.output_width(w)?;
        }
        specs.push(LayerSpec::affine(prev, output));
        Ok(specs)
    }
}

/// Parse a config, filling a missing `train.seed` from `fallback_seed`.
pub fn parse_config(text: &str, fallback_seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let bad = |e: serde_json::Error| Failure::new(2, format!("invalid config: {e}"));
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
    if let (Some(seed), Some(train)) = (
        fallback_seed,
        value.get_mut("train").and_then(|t| t.as_object_mut()),
    ) {
        train.entry("seed").or_insert(seed.into());
    }
    let config: ExperimentConfig = serde_json::from_value(value).map_err(bad)?;
    config.train.validate()?;
    Ok(config)
}

fn mnist_split(dir: &Path, prefix: &str) -> Result<Dataset, Failure> {
    let images = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let labels = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    Ok(load_mnist_idx(images, labels)?)
}

/// `(train, validation)` for the configured task.
fn datasets(config: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>), Failure> {
    let seed = config.train.seed;
    Ok(match config.task {
        TaskName::Parity4 => (
            gen_parity4(config.samples.unwrap_or(1024), seed),
            Some(parity4_lattice()),
        ),
        TaskName::NestedXnor8 => {
            let n = config.samples.unwrap_or(5120);
            if n < 5 {
                return Err(Failure::new(2, "nested_xnor8 needs at least 5 samples"));
            }
            let (train, val) = gen_nested_xnor8(n, seed).split_tail(n / 5);
            (train, Some(val))
        }
        TaskName::Xor2 => (gen_xor2(), None),
        TaskName::Mnist => {
            let dir = config
                .mnist_dir
                .clone()
                .or_else(|| std::env::var_os("LOGITGATES_MNIST_DIR").map(PathBuf::from))
                .ok_or_else(|| {
                    Failure::new(2, "mnist task needs mnist_dir or LOGITGATES_MNIST_DIR")
                })?;
            (
                mnist_split(&dir, "train")?,
                Some(mnist_split(&dir, "t10k")?),
            )
        }
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))
}

/// `x,y,logit,probability` over `[-2, 2]^2`.
fn decision_surface(net: &Network) -> String {
    let grid = xor2_grid::<f64>(2.0, 81);
    let out = net.predict(&grid);
    let mut csv = String::from("x,y,logit,probability\n");
    for r in 0..grid.rows() {
        let z = out[(r, 0)];
        writeln!(
            csv,
            "{},{},{},{}",
            grid[(r, 0)],
            grid[(r, 1)],
            z,
            sigmoid(z)
        )
        .expect("writing to a String");
    }
    csv
}

pub fn run(args: &TrainArgs) -> CmdResult {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        Failure::new(
            2,
            format!("cannot read config {}: {e}", args.config.display()),
        )
    })?;
    let mut config = parse_config(&text, env_seed()?)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }

    let mut net = Network::new(config.layers()?, config.train.seed)?;
    let (train, val) = datasets(&config)?;
    let mut report = fit(&mut net, &train, val.as_ref(), &config.train)?;
    report.label = format!("{} {}", config.task.name(), config.activation);
    if config.task == TaskName::Parity4 {
        let acc = report.summary["val_accuracy"];
        report.summary.insert("lattice_accuracy".into(), acc);
    }

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Failure::new(1, format!("{}: {e}", dir.display())))?;
    write(&dir.join("report.json"), report.to_json()?)?;
    write(&dir.join("curves.csv"), report.to_csv())?;
    net.save_to(dir.join("model.bin"))?;
    if config.task == TaskName::Xor2 {
        write(&dir.join("decision_surface.csv"), decision_surface(&net))?;
    }

    let finals: Vec<String> = report
        .summary
        .iter()
        .map(|(k, v)| format!("{k}={v:.6}"))
        .collect();
    println!(
        "{}: {} params, {}",
        report.label,
        report.params,
        finals.join(" ")
    );
    println!("wrote {}", dir.display());
    Ok(())
}
