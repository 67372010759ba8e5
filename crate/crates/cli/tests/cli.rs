use roughflow::field::SpectralField;
use roughflow_cli::output::sha256_hex;
use roughflow_cli::{execute, plots, Command};
use serde_json::Value;
use std::path::Path;
use std::process::Command as Process;

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn binary(args: &[&str], config: Option<&str>, dir: &Path) -> i32 {
    let mut cmd = Process::new(env!("CARGO_BIN_EXE_roughflow"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(binary(&["synth"], Some("field.cutoff = 1\n"), tmp.path()), 0);
    assert_eq!(binary(&["synth"], Some("field.cutof = 1\n"), tmp.path()), 2);
    assert_eq!(binary(&["synth"], Some("field.s = -1\n"), tmp.path()), 2);
    assert_eq!(binary(&["qdelta"], Some("qdelta.deltas = [0.1, 0.2]\n"), tmp.path()), 2);
    assert_eq!(binary(&["counterexample"], Some("ce.n_list = [64]\n"), tmp.path()), 3);
    assert_eq!(
        binary(&["flow"], Some("field.amplitude = 1e9\nfield.period = 10.0\n"), tmp.path()),
        4
    );
    assert_eq!(binary(&["synth", "--workers", "0"], None, tmp.path()), 2);
}

#[test]
fn minimal_field_round_trips_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    execute(Command::Synth, "field.cutoff = 1\n", tmp.path(), None).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("field.json")).unwrap();
    let field = SpectralField::from_json(&text).unwrap();
    assert_eq!(field.modes().len(), 2);
    assert_eq!(format!("{}\n", field.to_json()), text);
}

#[test]
fn manifest_records_sup_bound_and_digests() {
    let tmp = tempfile::tempdir().unwrap();
    execute(Command::Synth, "field.s = 0.95\nfield.cutoff = 256\nfield.amplitude = 1.0\n", tmp.path(), None).unwrap();
    let manifest = read_json(&tmp.path().join("manifest.json"));
    let sup = manifest["summary"]["sup_bound"].as_f64().unwrap();
    assert!((sup - 1.0).abs() <= 1e-12);
    for entry in manifest["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(tmp.path().join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    assert_eq!(manifest["config"]["field.cutoff"], 256);
}

#[test]
fn seed_override_changes_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    execute(Command::Synth, "seed = 1\n", &a, None).unwrap();
    execute(Command::Synth, "seed = 1\n", &b, Some(2)).unwrap();
    execute(Command::Synth, "seed = 2\n", &c, None).unwrap();
    let read = |p: &Path| std::fs::read(p.join("field.json")).unwrap();
    assert_ne!(read(&a), read(&b));
    assert_eq!(read(&b), read(&c));
}

#[test]
fn ballistic_counterexample_reports_slope_minus_one() {
    let tmp = tempfile::tempdir().unwrap();
    execute(Command::Counterexample, "ce.shape = \"zero\"\nce.v = 2.0\n", tmp.path(), None).unwrap();
    let summary = read_json(&tmp.path().join("summary.json"));
    let slope = summary["fit"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 1e-10);
    let csv = std::fs::read_to_string(tmp.path().join("scan.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "N,delta,t0,t0_delta,separation,eta,A_eta,ratio,quadrature_tol"
    );
}

#[test]
fn gate_failures_still_leave_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let err = execute(Command::Counterexample, "ce.n_list = [64, 128]\n", tmp.path(), None).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(tmp.path().join("manifest.json").is_file());
    assert!(read_json(&tmp.path().join("summary.json"))["fit"].is_null());
}

#[test]
fn mollify_on_a_band_limited_field_gives_zero_distances() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "field.cutoff = 4\nensemble.count = 8\nflow.horizon = 0.5\nmollify.cutoffs = [4, 8, 16]\n";
    execute(Command::Mollify, cfg, tmp.path(), None).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("cauchy.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn plot_script_stanzas_follow_the_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, n) = plots::emit_plots(tmp.path()).unwrap();
    assert_eq!(n, 0);
    let script = std::fs::read_to_string(tmp.path().join(plots::SCRIPT)).unwrap();
    assert!(!script.contains("savefig"));

    std::fs::write(tmp.path().join("qdelta.csv"), "delta,Q,Q_over_log,n_samples,h,seed\n").unwrap();
    let (_, n) = plots::emit_plots(tmp.path()).unwrap();
    assert_eq!(n, 1);

    execute(Command::Counterexample, "ce.shape = \"zero\"\nce.v = 2.0\n", tmp.path(), None).unwrap();
    let (_, n) = plots::emit_plots(tmp.path()).unwrap();
    assert_eq!(n, 2);
    let script = std::fs::read_to_string(tmp.path().join(plots::SCRIPT)).unwrap();
    assert!(script.contains("loglog") && script.contains("fit, slope"));
    assert!(plots::emit_plots(&tmp.path().join("missing")).is_err());
}
