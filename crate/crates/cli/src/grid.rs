use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use logitgates::verify::{grid_axis, grid_compare};
use logitgates::{Activation, Kind};

use crate::{CmdResult, Failure, GridArgs, GridFamily, GridKind};

fn kind(k: GridKind) -> Kind {
    match k {
        GridKind::And => Kind::And,
        GridKind::Or => Kind::Or,
        GridKind::Xnor => Kind::Xnor,
    }
}

pub fn run(args: &GridArgs) -> CmdResult {
    if !(args.step > 0.0) || !(args.range >= 0.0) {
        return Err(Failure::new(
            2,
            "--step must be positive and --range non-negative",
        ));
    }
    let kind = kind(args.kind);
    let mut file = File::create(&args.out)
        .map_err(|e| Failure::new(1, format!("{}: {e}", args.out.display())))?;
    let report = grid_compare(kind, args.range, args.step, args.band, Some(&mut file))?;
    println!(
        "{} over [-{r}, {r}]^2 step {}: {} cells, max |diff| {:.6} at ({}, {}), off-boundary max {:.6}, max rel diff {:.6}",
        kind.name(),
        args.step,
        report.cells,
        report.max_abs_diff,
        report.argmax.0,
        report.argmax.1,
        report.max_abs_diff_off_boundary,
        report.max_rel_diff,
        r = args.range,
    );
    if let Some(pgm) = &args.pgm {
        let path = pgm
            .clone()
            .unwrap_or_else(|| args.out.with_extension("pgm"));
        write_heatmap(&path, kind, args.family, args.range, args.step)?;
    }
    Ok(())
}

fn write_heatmap(path: &Path, kind: Kind, family: GridFamily, range: f64, step: f64) -> CmdResult {
    let (il, ail) = (Activation::il(kind), Activation::ail(kind));
    let value = |x: f64, y: f64| match family {
        GridFamily::Il => il.apply(x, y),
        GridFamily::Ail => ail.apply(x, y),
        GridFamily::Both => ail.apply(x, y) - il.apply(x, y),
    };
    let axis = grid_axis(range, step);
    // image rows run top to bottom, so y descends
    let values: Vec<f64> = axis
        .iter()
        .rev()
        .flat_map(|&y| axis.iter().map(move |&x| value(x, y)))
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values
        .iter()
        .map(|v| ((v - lo) / span * 255.0).round() as u8)
        .collect();
    let io = |e: std::io::Error| Failure::new(1, format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(w, "P5\n{} {}\n255\n", axis.len(), axis.len()).map_err(io)?;
    w.write_all(&pixels).map_err(io)?;
    w.flush().map_err(io)
}
