use std::path::Path;

use logitgates::activations::{or_ail_mean, or_ail_variance, xnor_ail_variance, REFERENCE_MOMENTS};
use logitgates::verify::{
    bayes_identity_check, gradcheck_activation, grid_compare, mc_constants, random_points,
    GRADCHECK_STEP,
};
use logitgates::{Activation, Kind};
use serde::Deserialize;

use crate::{env_seed, CmdResult, Failure, VerifyArgs};

#[derive(Deserialize)]
struct Reference {
    name: String,
    mean: f64,
    std: f64,
}

struct Check {
    quantity: String,
    value: f64,
    target: f64,
    tolerance: String,
    pass: bool,
}

fn number(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

fn reference_table(path: Option<&Path>) -> Result<Vec<(Activation, f64, f64)>, Failure> {
    let Some(path) = path else {
        return Ok(REFERENCE_MOMENTS.to_vec());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
    let rows: Vec<Reference> = serde_json::from_str(&text)
        .map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
    rows.into_iter()
        .map(|r| {
            let act: Activation = r
                .name
                .to_lowercase()
                .parse()
                .map_err(|e| Failure::new(2, format!("{e}")))?;
            Ok((act, r.mean, r.std))
        })
        .collect()
}

fn constants(n: u64, seed: u64, table: &[(Activation, f64, f64)], out: &mut Vec<Check>) {
    for (i, &(act, mean, std)) in table.iter().enumerate() {
        let est = mc_constants(act, n, seed.wrapping_add(i as u64));
        let name = act.to_string().to_uppercase();
        out.push(Check {
            quantity: format!("{name} mean"),
            value: est.mean,
            target: mean,
            tolerance: format!("4 SE ({:.1e}) and 2e-3", 4.0 * est.se_mean),
            pass: (est.mean - mean).abs() <= (4.0 * est.se_mean).min(2e-3),
        });
        out.push(Check {
            quantity: format!("{name} std"),
            value: est.std,
            target: std,
            tolerance: format!("4 SE ({:.1e}) and 2e-3", 4.0 * est.se_std),
            pass: (est.std - std).abs() <= (4.0 * est.se_std).min(2e-3),
        });
    }
    let lookup = |name: &str, std: bool| {
        table
            .iter()
            .find(|(a, _, _)| a.to_string() == name)
            .map(|&(_, m, s)| if std { s } else { m })
    };
    let closed = [
        (
            "OR_AIL mean (closed form)",
            or_ail_mean(),
            lookup("or_ail", false),
        ),
        (
            "OR_AIL std (closed form)",
            or_ail_variance().sqrt(),
            lookup("or_ail", true),
        ),
        (
            "XNOR_AIL std (closed form)",
            xnor_ail_variance().sqrt(),
            lookup("xnor_ail", true),
        ),
    ];
    for (quantity, value, target) in closed {
        if let Some(target) = target {
            out.push(Check {
                quantity: quantity.into(),
                value,
                target,
                tolerance: "5e-5".into(),
                pass: (value - target).abs() <= 5e-5,
            });
        }
    }
}

fn gradients(seed: u64, out: &mut Vec<Check>) {
    for (i, act) in Activation::all().into_iter().enumerate() {
        let r = gradcheck_activation(
            act,
            &random_points(10_000, 6.0, seed.wrapping_add(i as u64)),
            GRADCHECK_STEP,
        );
        out.push(Check {
            quantity: format!("{} gradient rel err", act.to_string().to_uppercase()),
            value: r.max_rel_error,
            target: 0.0,
            tolerance: "< 1e-5".into(),
            pass: r.max_rel_error < 1e-5,
        });
    }
}

fn diff_bound(out: &mut Vec<Check>) -> Result<(), Failure> {
    for kind in [Kind::And, Kind::Or, Kind::Xnor] {
        let r = grid_compare(kind, 10.0, 0.01, 0.02, None)?;
        let name = kind.name().to_uppercase();
        out.push(Check {
            quantity: format!("{name} max |AIL-IL| off axes/diagonals"),
            value: r.max_abs_diff_off_boundary,
            target: 1.0,
            tolerance: "<= 1 + 1e-9".into(),
            pass: r.max_abs_diff_off_boundary <= 1.0 + 1e-9,
        });
        // informational: the strict maximum includes the kinks
        out.push(Check {
            quantity: format!("{name} max |AIL-IL| strict"),
            value: r.max_abs_diff,
            target: f64::NAN,
            tolerance: "info".into(),
            pass: true,
        });
    }
    Ok(())
}

fn bayes(seed: u64, out: &mut Vec<Check>) {
    let err = bayes_identity_check(10_000, seed);
    out.push(Check {
        quantity: "probability identities max abs err".into(),
        value: err,
        target: 0.0,
        tolerance: "< 1e-12".into(),
        pass: err < 1e-12,
    });
}

pub fn run(args: &VerifyArgs) -> CmdResult {
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    if args.n < 2 {
        return Err(Failure::new(2, "--n must be at least 2"));
    }
    let all = !(args.constants || args.gradients || args.diff_bound || args.bayes);
    let mut checks = Vec::new();
    if all || args.constants {
        let table = reference_table(args.reference.as_deref())?;
        constants(args.n, seed, &table, &mut checks);
    }
    if all || args.gradients {
        gradients(seed, &mut checks);
    }
    if all || args.diff_bound {
        diff_bound(&mut checks)?;
    }
    if all || args.bayes {
        bayes(seed, &mut checks);
    }

    let width = checks.iter().map(|c| c.quantity.len()).max().unwrap_or(8);
    println!(
        "{:<width$}  {:>12}  {:>10}  {:<24}  status",
        "quantity", "value", "target", "tolerance"
    );
    for c in &checks {
        let status = match (c.pass, c.target.is_nan()) {
            (_, true) => "info",
            (true, false) => "pass",
            (false, false) => "FAIL",
        };
        println!(
            "{:<width$}  {:>12}  {:>10}  {:<24}  {status}",
            c.quantity,
            number(c.value),
            number(c.target),
            c.tolerance,
        );
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| {
            format!(
                "{} = {} (target {}, tolerance {})",
                c.quantity,
                number(c.value),
                number(c.target),
                c.tolerance
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            1,
            format!("verification failed: {}", failed.join("; ")),
        ))
    }
}
