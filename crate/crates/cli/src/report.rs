use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use logitgates::TrainReport;

use crate::{CmdResult, Failure, ReportArgs};

fn json_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            json_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

struct Row {
    label: String,
    metric: String,
    params: usize,
    train: f64,
    val: Option<f64>,
}

impl Row {
    /// The value rows are ranked by: validation if present, else training.
    fn key(&self) -> f64 {
        self.val.unwrap_or(self.train)
    }
}

fn row(path: &Path, report: TrainReport) -> Row {
    let label = if report.label.is_empty() {
        path.parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    } else {
        report.label.clone()
    };
    let last = report.last();
    Row {
        label,
        metric: report.metric.clone(),
        params: report.params,
        train: last.train_metric,
        val: last.val_metric,
    }
}

/// Best first: higher accuracy, lower RMSE.
fn compare(a: &Row, b: &Row) -> Ordering {
    a.metric.cmp(&b.metric).then_with(|| {
        let ord = a.key().total_cmp(&b.key());
        if a.metric == "rmse" {
            ord
        } else {
            ord.reverse()
        }
    })
}

fn render(mut rows: Vec<Row>) -> String {
    rows.sort_by(compare);
    let mut md =
        String::from("| run | metric | params | train | validation |\n|---|---|---:|---:|---:|\n");
    for r in &rows {
        let val = r.val.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(
            md,
            "| {} | {} | {} | {:.4} | {} |",
            r.label, r.metric, r.params, r.train, val
        )
        .expect("writing to a String");
    }
    md
}

pub fn run(args: &ReportArgs) -> CmdResult {
    let mut files = Vec::new();
    json_files(&args.input, &mut files)
        .map_err(|e| Failure::new(2, format!("{}: {e}", args.input.display())))?;
    let mut rows = Vec::new();
    for path in files {
        let parsed = fs::read_to_string(&path)
            .ok()
            .and_then(|text| serde_json::from_str::<TrainReport>(&text).ok());
        match parsed {
            Some(report) if !report.epochs.is_empty() => rows.push(row(&path, report)),
            _ => eprintln!("skipping {}: not a training report", path.display()),
        }
    }
    if rows.is_empty() {
        return Err(Failure::new(
            2,
            format!("no training reports under {}", args.input.display()),
        ));
    }
    let n = rows.len();
    fs::write(&args.out, render(rows))
        .map_err(|e| Failure::new(1, format!("{}: {e}", args.out.display())))?;
    println!("{n} report(s) -> {}", args.out.display());
    Ok(())
}
