//! End-to-end runs of the CLI against temp directories: simulate, analyze,
//! power, and replay, plus the no-partial-outputs rule on argument errors.

use std::path::{Path, PathBuf};

use srt_core::design::percs_design;
use srt_core::io::{load_manifest, load_report, save_model};
use srt_core::simulate::percs_like_model;

fn model_file(dir: &Path) -> PathBuf {
    let model = percs_like_model(&percs_design()).unwrap();
    let path = dir.join("model.json");
    save_model(&path, &model).unwrap();
    path
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let mut buf = Vec::new();
    srt_cli::run_args(args, &mut buf).unwrap();
    serde_json::from_slice(&buf).expect("commands print one JSON document")
}

fn run_err(args: &[&str]) -> srt_core::Error {
    let mut buf = Vec::new();
    srt_cli::run_args(args, &mut buf).unwrap_err()
}

fn simulate_into(dir: &Path, model: &Path, n: &str, seed: &str) -> serde_json::Value {
    run_ok(&[
        "srt",
        "simulate",
        "--design",
        "percs",
        "--model",
        model.to_str().unwrap(),
        "--n",
        n,
        "--seed",
        seed,
        "--mix",
        "IN=0.4,US=0.35,other=0.25",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn simulate_writes_log_assignments_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let out = tmp.path().join("run");
    let doc = simulate_into(&out, &model, "200", "11");

    assert_eq!(doc["learners"], 200);
    assert_eq!(doc["periods"], 3);
    assert!(doc["emails_sent"].as_u64().unwrap() > 0);
    for name in ["events.csv", "assignments.csv", "manifest.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }

    let manifest = load_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.command[0], "srt");
    assert_eq!(manifest.master_seed, Some(11));
    assert_eq!(manifest.outputs, vec!["events.csv", "assignments.csv"]);
    assert_eq!(manifest.inputs.len(), 2);
    assert_eq!(manifest.inputs[0].path, "builtin:percs");
}

#[test]
fn simulate_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    simulate_into(&a, &model, "150", "77");
    simulate_into(&b, &model, "150", "77");
    for name in ["events.csv", "assignments.csv"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn analyze_ate_defaults_to_problem_groups_vs_no_email() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "900", "5");

    let report_dir = tmp.path().join("report");
    let doc = run_ok(&[
        "srt",
        "analyze",
        "ate",
        "--design",
        "percs",
        "--log",
        sim.join("events.csv").to_str().unwrap(),
        "--period",
        "1",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(doc["n_comparisons"], 3);
    let rows = doc["rows"].as_array().unwrap();
    let groups: Vec<&str> = rows.iter().map(|r| r["group"].as_str().unwrap()).collect();
    assert_eq!(groups, vec!["P0", "P1", "P2"]);

    let report = load_report(&report_dir.join("report.json")).unwrap();
    assert_eq!(report.rows.len(), 3);
    let plot = std::fs::read_to_string(report_dir.join("plot_data.csv")).unwrap();
    assert!(plot.starts_with("comparison_id,period,group,stratum,estimate,ci_low,ci_high\n"));
    assert_eq!(plot.lines().count(), 4);

    let manifest = load_manifest(&report_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.master_seed, None);
    assert!(!std::fs::read_to_string(report_dir.join("manifest.json"))
        .unwrap()
        .contains("master_seed"));
}

#[test]
fn analyze_sequence_defaults_to_the_post_trial_period() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "600", "9");

    let doc = run_ok(&[
        "srt",
        "analyze",
        "sequence",
        "--design",
        "percs",
        "--log",
        sim.join("events.csv").to_str().unwrap(),
        "--pattern",
        "(E0,*,*)",
        "--pattern",
        "(E1,*,*)",
    ]);
    assert_eq!(doc["outcome_period"], 4);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let total: u64 = rows.iter().map(|r| r["n"].as_u64().unwrap()).sum();
    assert_eq!(total, 600, "the two email patterns partition the cohort");
    for row in rows {
        let p = row["proportion"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(row["ci_low"].as_f64().unwrap() <= p);
        assert!(row["ci_high"].as_f64().unwrap() >= p);
    }
}

#[test]
fn analyze_moderator_defaults_give_six_strata() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "1200", "21");

    let doc = run_ok(&[
        "srt",
        "analyze",
        "moderator",
        "--design",
        "percs",
        "--log",
        sim.join("events.csv").to_str().unwrap(),
        "--period",
        "2",
        "--moderator",
        "prior-activity",
    ]);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6, "three groups, active and inactive strata each");
    for row in rows {
        let stratum = row["stratum"].as_str().unwrap();
        assert!(stratum == "active" || stratum == "inactive", "got {stratum}");
        assert_eq!(row["comparison_id"], "moderator:prior-activity");
    }
}

#[test]
fn power_runs_and_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let out = tmp.path().join("power");
    let doc = run_ok(&[
        "srt",
        "power",
        "--design",
        "percs",
        "--model",
        model.to_str().unwrap(),
        "--comparison",
        "direct/1/P0/E0",
        "--n",
        "300",
        "--reps",
        "100",
        "--seed",
        "31",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(doc["replications"], 100);
    assert_eq!(doc["seed"], 31);
    let power = doc["power"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&power));
    assert!(doc["mc_se"].as_f64().unwrap() >= 0.0);

    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("power.json")).unwrap()).unwrap();
    assert_eq!(written, doc, "power.json matches stdout");
    let manifest = load_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.master_seed, Some(31));
    assert_eq!(manifest.outputs, vec!["power.json"]);
}

#[test]
fn replay_reproduces_a_simulation_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "120", "3");
    let manifest_path = sim.join("manifest.json");

    let doc = run_ok(&["srt", "replay", "--manifest", manifest_path.to_str().unwrap()]);
    assert_eq!(doc["status"], "reproduced");
    let compared: Vec<&str> = doc["compared"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(compared, vec!["events.csv", "assignments.csv", "manifest.json"]);

    // A tampered output no longer matches the re-run.
    let events = sim.join("events.csv");
    let original = std::fs::read_to_string(&events).unwrap();
    std::fs::write(&events, original.replace(',', ";")).unwrap();
    let err = run_err(&["srt", "replay", "--manifest", manifest_path.to_str().unwrap()]);
    assert_eq!(err.code(), "E002");
    assert!(err.to_string().contains("events.csv"), "{err}");
    std::fs::write(&events, original).unwrap();

    // A tampered input is caught before anything is re-run.
    let mut model_text = std::fs::read_to_string(&model).unwrap();
    model_text.push('\n');
    std::fs::write(&model, model_text).unwrap();
    let err = run_err(&["srt", "replay", "--manifest", manifest_path.to_str().unwrap()]);
    assert_eq!(err.code(), "E002");
    assert!(err.to_string().contains("has changed"), "{err}");
}

#[test]
fn replay_covers_analysis_manifests_too() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "300", "13");

    let report_dir = tmp.path().join("report");
    run_ok(&[
        "srt",
        "analyze",
        "delayed",
        "--design",
        "percs",
        "--log",
        sim.join("events.csv").to_str().unwrap(),
        "--period",
        "1",
        "--outcome-period",
        "3",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    let scratch = tmp.path().join("scratch");
    let doc = run_ok(&[
        "srt",
        "replay",
        "--manifest",
        report_dir.join("manifest.json").to_str().unwrap(),
        "--scratch",
        scratch.to_str().unwrap(),
    ]);
    assert_eq!(doc["status"], "reproduced");
    assert!(scratch.join("report.json").exists());
}

#[test]
fn replay_refuses_its_own_directory_and_its_own_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "120", "3");
    let manifest_path = sim.join("manifest.json");

    let err = run_err(&[
        "srt",
        "replay",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--scratch",
        sim.to_str().unwrap(),
    ]);
    assert_eq!(err.code(), "E002");
    assert!(err.to_string().contains("scratch"), "{err}");

    let fake = tmp.path().join("fake");
    std::fs::create_dir_all(&fake).unwrap();
    let manifest = srt_core::io::RunManifest::new(
        vec!["srt".into(), "replay".into(), "--manifest".into(), "x".into()],
        None,
    );
    manifest.save(&fake.join("manifest.json")).unwrap();
    let err = run_err(&[
        "srt",
        "replay",
        "--manifest",
        fake.join("manifest.json").to_str().unwrap(),
    ]);
    assert_eq!(err.code(), "E002");
    assert!(err.to_string().contains("replay"), "{err}");
}

#[test]
fn argument_errors_leave_no_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let model = model_file(tmp.path());
    let out = tmp.path().join("never");

    // Unknown country code dies at argument parsing.
    let err = run_err(&[
        "srt",
        "simulate",
        "--design",
        "percs",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "50",
        "--seed",
        "1",
        "--mix",
        "XX=1.0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(err.code(), "E002");
    assert!(!out.exists(), "failed run must not create the out dir");

    // Missing seed (flag and environment both absent).
    std::env::remove_var("SRT_SEED");
    let err = run_err(&[
        "srt",
        "simulate",
        "--design",
        "percs",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(err.code(), "E002");
    assert!(err.to_string().contains("SRT_SEED"), "{err}");
    assert!(!out.exists());

    // Bad estimator arguments fail after ingest but still before any write.
    let sim = tmp.path().join("sim");
    simulate_into(&sim, &model, "80", "2");
    let report_dir = tmp.path().join("report");
    let err = run_err(&[
        "srt",
        "analyze",
        "moderator",
        "--design",
        "percs",
        "--log",
        sim.join("events.csv").to_str().unwrap(),
        "--period",
        "2",
        "--moderator",
        "activity:3",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(err.code(), "E202");
    assert!(!report_dir.exists());
}
