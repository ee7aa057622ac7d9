use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use logitgates::Network;
use logitgates::TrainReport;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_logitgates"));
    cmd.env_remove("LOGITGATES_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn logitgates")
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train(config: &str, out: &Path) -> Output {
    let cfg = manifest(&format!("configs/{config}.json"));
    run(&[
        "train",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ])
}

fn read_report(dir: &Path) -> TrainReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn help_for_every_subcommand() {
    for sub in ["grid", "verify", "train", "report"] {
        let o = run(&[sub, "--help"]);
        assert!(o.status.success(), "{sub} --help");
        assert!(stdout(&o).contains("Usage"));
    }
}

#[test]
fn grid_csv_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("or.csv");
    let o = run(&[
        "grid",
        "--kind",
        "or",
        "--family",
        "both",
        "--range",
        "10",
        "--step",
        "0.05",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,exact,approx,diff"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 401 * 401);
    // the diff column agrees with the summary the library computes
    let max_diff = rows.iter().map(|r| r[4].abs()).fold(0.0, f64::max);
    let report =
        logitgates::verify::grid_compare(logitgates::Kind::Or, 10.0, 0.05, 0.02, None).unwrap();
    assert_eq!(max_diff, report.max_abs_diff);
    assert!(stdout(&o).contains(&format!("max |diff| {:.6}", report.max_abs_diff)));
}

#[test]
fn grid_pgm_is_binary_graymap() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let o = run(&[
        "grid",
        "--kind",
        "xnor",
        "--range",
        "1",
        "--step",
        "0.1",
        "--out",
        csv.to_str().unwrap(),
        "--pgm",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = std::fs::read(dir.path().join("x.pgm")).unwrap();
    let header = b"P5\n21 21\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let pixels = &bytes[header.len()..];
    assert_eq!(pixels.len(), 21 * 21);
    assert_eq!(pixels.iter().min(), Some(&0));
    assert_eq!(pixels.iter().max(), Some(&255));
}

#[test]
fn grid_to_unwritable_path_fails() {
    let o = run(&[
        "grid",
        "--kind",
        "and",
        "--range",
        "1",
        "--step",
        "0.5",
        "--out",
        "/nonexistent/dir/a.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/dir/a.csv"));
}

#[test]
fn verify_constants_pass_at_full_size() {
    let o = run(&["verify", "--constants", "--n", "10000000", "--seed", "3"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("OR_AIL std"));
}

#[test]
fn verify_repeats_exactly() {
    let args = [
        "verify",
        "--constants",
        "--bayes",
        "--n",
        "50000",
        "--seed",
        "3",
    ];
    assert_eq!(stdout(&run(&args)), stdout(&run(&args)));
}

#[test]
fn verify_seed_falls_back_to_env() {
    let flag = run(&["verify", "--constants", "--n", "20000", "--seed", "11"]);
    let env = bin()
        .args(["verify", "--constants", "--n", "20000"])
        .env("LOGITGATES_SEED", "11")
        .output()
        .unwrap();
    let default = run(&["verify", "--constants", "--n", "20000"]);
    assert_eq!(stdout(&flag), stdout(&env));
    assert_ne!(stdout(&flag), stdout(&default));
}

#[test]
fn verify_names_a_corrupted_constant() {
    let fixture = manifest("tests/fixtures/corrupt_reference.json");
    let o = run(&[
        "verify",
        "--constants",
        "--n",
        "10000000",
        "--reference",
        fixture.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("OR_AIL std"), "{err}");
    assert!(!err.contains("OR_IL"), "{err}");
}

#[test]
fn verify_gradients_and_identities_pass() {
    let o = run(&["verify", "--gradients", "--bayes"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches("gradient rel err").count(), 16);
}

#[test]
fn verify_diff_bound_reports_the_origin_excess() {
    // AND and OR exceed 1 just off the origin; XNOR stays below
    let o = run(&["verify", "--diff-bound"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("AND max |AIL-IL| off axes/diagonals = 1.0754"),
        "{err}"
    );
    assert!(err.contains("OR max"));
    assert!(!err.contains("XNOR max"));
}

#[test]
fn bundled_parity_configs() {
    let dir = tempfile::tempdir().unwrap();
    let (xnor, relu) = (dir.path().join("xnor"), dir.path().join("relu"));
    let o = train("parity4_xnor_ail", &xnor);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_report(&xnor).summary["lattice_accuracy"], 1.0);
    let o = train("parity4_relu", &relu);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read_report(&relu).summary["lattice_accuracy"] < 1.0);

    let net = Network::load_from(xnor.join("model.bin")).unwrap();
    assert_eq!((net.input_width(), net.output_width()), (4, 1));
    assert!(
        std::fs::read_to_string(xnor.join("curves.csv"))
            .unwrap()
            .lines()
            .count()
            > 100
    );
}

#[test]
fn bundled_xor_config_writes_decision_surface() {
    let dir = tempfile::tempdir().unwrap();
    let o = train("xor2_xnor_nail", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_report(dir.path()).summary["train_accuracy"], 1.0);
    let surface = std::fs::read_to_string(dir.path().join("decision_surface.csv")).unwrap();
    let mut lines = surface.lines();
    assert_eq!(lines.next(), Some("x,y,logit,probability"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 81 * 81);
    // the training corners land on the right side of the surface
    for (x, y, label) in [
        (1.0, 1.0, 0.0),
        (1.0, -1.0, 1.0),
        (-1.0, 1.0, 1.0),
        (-1.0, -1.0, 0.0),
    ] {
        let r = rows
            .iter()
            .find(|r| (r[0] - x).abs() < 1e-9 && (r[1] - y).abs() < 1e-9)
            .unwrap();
        assert_eq!(r[3] > 0.5, label == 1.0, "({x}, {y})");
    }
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train("parity4_xnor_ail", &a).status.success());
    assert!(train("parity4_xnor_ail", &b).status.success());
    for f in ["report.json", "model.bin", "curves.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn train_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let out = dir.path().join("out");
    let base = r#"{"task":"parity4","activation":"ACT","widths":[4,2],
        "train":{"optimizer":{"type":"OPT"},"max_lr":LR,"epochs":2,"batch_size":64,"loss":"bce_with_logits"},
        "output_dir":"OUT"}"#
        .replace("OUT", out.to_str().unwrap());
    let cfg = |act: &str, opt: &str, lr: &str| {
        base.replace("ACT", act)
            .replace("OPT", opt)
            .replace("LR", lr)
    };

    let ok = write("ok.json", &cfg("xnor_ail", "adam", "0.01"));
    assert_eq!(run(&["train", ok.to_str().unwrap()]).status.code(), Some(0));

    for (name, text) in [
        ("syntax.json", "{ not json".to_string()),
        ("act.json", cfg("xnor_bogus", "adam", "0.01")),
        ("lr.json", cfg("xnor_ail", "adam", "-1")),
        (
            "odd.json",
            cfg("xnor_ail", "adam", "0.01").replace("[4,2]", "[3]"),
        ),
    ] {
        let p = write(name, &text);
        let o = run(&["train", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(
        run(&["train", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let blowup = write("nan.json", &cfg("xnor_ail", "sgd", "1e300"));
    let o = run(&["train", blowup.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn report_requires_reports() {
    let dir = tempfile::tempdir().unwrap();
    let md = dir.path().join("r.md");
    let o = run(&[
        "report",
        "--in",
        dir.path().to_str().unwrap(),
        "--out",
        md.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!md.exists());
}

#[test]
fn report_rows_sorted_by_metric() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let md = dir.path().join("r.md");
    let report = |out: &Path| {
        let o = run(&[
            "report",
            "--in",
            runs.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };

    assert!(train("parity4_relu", &runs.join("relu")).status.success());
    let one = report(&md);
    assert_eq!(one.lines().count(), 3);
    assert!(one.contains("| parity4 relu | accuracy |"));

    assert!(train("parity4_xnor_ail", &runs.join("xnor"))
        .status
        .success());
    let two = report(&md);
    let rows: Vec<&str> = two.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("| parity4 xnor_ail |"), "{two}");
    assert!(rows[1].starts_with("| parity4 relu |"), "{two}");
}
