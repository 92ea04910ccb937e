use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phaseless_core::data::{read_fields, PhasedFields};
use phaseless_core::scene::load_scene;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phaseless-helm"))
}

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_retrieve_reproduces_the_circle_fields() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("circle.json");
    let (data, fields, report) = (dir.path().join("d.csv"), dir.path().join("f.csv"), dir.path().join("b.json"));
    let out = run(&["synth", "--scene", s(&scene), "--out", s(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "retrieve",
        "--data",
        s(&data),
        "--scene-geometry",
        s(&scene),
        "--out",
        s(&fields),
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let truth = PhasedFields::compute(&load_scene(&scene).unwrap()).unwrap();
    let (meta, got) = read_fields(&fields).unwrap();
    assert!(meta.expansion_center.is_some() && meta.scene_hash.is_some());
    let err = got
        .values
        .iter()
        .flatten()
        .zip(truth.values.iter().flatten())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err <= 1e-6, "max field error {err:.3e}");

    let branch: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ratio = branch["residual_minus"].as_f64().unwrap() / branch["residual_plus"].as_f64().unwrap();
    assert!(branch["chosen"] == "plus" && ratio >= 1e6, "{branch}");

    let indicator = dir.path().join("i.csv");
    let out = run(&["image", "--fields", s(&fields), "--grid", "32", "--out", s(&indicator)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&indicator).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap().trim_start_matches('#')).unwrap();
    let p = header["argmax_point"].as_array().unwrap();
    let cell = header["grid"]["side"].as_f64().unwrap() / 32.0;
    assert!(p.iter().all(|c| c.as_f64().unwrap().abs() <= cell), "{header}");
    assert_eq!(text.lines().count(), 2 + 32 * 32);
}

#[test]
fn eigenguard_at_a_bessel_zero_fails() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let config = scenes().join("verify/eigenguard_zero.json");
    let out = run(&["verify", "--suite", "eigenguard", "--config", s(&config), "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr(&out).lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
    assert_eq!(v["checks"][0]["detail"]["offending_order"], 0);
}

#[test]
fn bundled_verification_configs_pass() {
    let dir = tempfile::tempdir().unwrap();
    for (suite, name) in [
        ("reciprocity", "reciprocity"),
        ("reciprocity", "reciprocity_kite"),
        ("green", "green"),
        ("eigenguard", "eigenguard"),
        ("invariance", "invariance"),
        ("uniqueness", "uniqueness_translated"),
        ("uniqueness", "uniqueness_boundary"),
        ("uniqueness", "uniqueness_identical"),
    ] {
        let config = scenes().join(format!("verify/{name}.json"));
        let report = dir.path().join(format!("{name}.json"));
        let out = run(&["verify", "--suite", suite, "--config", s(&config), "--out", s(&report)]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(v["passed"], true, "{name}");
        assert!(v["checks"][0]["scene_hash"].is_string() || suite == "eigenguard", "{name}");
    }
}

#[test]
fn missing_scene_is_a_usage_error() {
    let out = run(&["synth", "--out", "never.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--scene"));
    assert!(!Path::new("never.csv").exists());
}

#[test]
fn malformed_incident_is_a_usage_error() {
    let scene = scenes().join("kite.json");
    for spec in ["plane", "plane:x", "superpose:1", "source:1,2,3", "wave:1"] {
        let out = run(&["forward", "--scene", s(&scene), "--incident", spec, "--out", "never.csv"]);
        assert_eq!(out.status.code(), Some(2), "{spec}");
    }
}

#[test]
fn missing_input_file_is_a_one_line_failure() {
    let out = run(&["synth", "--scene", "/definitely/not/here.json", "--out", "never.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("/definitely/not/here.json"), "{err}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("verify/kite.json");
    let outputs: Vec<Vec<u8>> = [None, Some("1")]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let path = dir.path().join(format!("d{i}.csv"));
            let mut cmd = bin();
            cmd.args(["synth", "--scene", s(&scene), "--noise", "0.01", "--seed", "7", "--out", s(&path)]);
            if let Some(t) = threads {
                cmd.env("PHASELESS_HELM_THREADS", t);
            }
            let out = cmd.output().unwrap();
            assert!(out.status.success(), "{}", stderr(&out));
            std::fs::read(&path).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);

    let other = dir.path().join("other.csv");
    let out = run(&["synth", "--scene", s(&scene), "--noise", "0.01", "--seed", "8", "--out", s(&other)]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(&other).unwrap(), outputs[0]);
}

#[test]
fn forward_writes_near_and_far_tables() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("verify/circle_soft.json");
    let near = dir.path().join("near.csv");
    let far = dir.path().join("far.csv");
    let out = run(&["forward", "--scene", s(&scene), "--incident", "superpose:0,1.5", "--out", s(&near)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "--threads",
        "1",
        "forward",
        "--scene",
        s(&scene),
        "--incident",
        "source:0,2",
        "--points",
        "far",
        "--angles",
        "16",
        "--out",
        s(&far),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let near = std::fs::read_to_string(near).unwrap();
    assert_eq!(near.lines().next(), Some("x1,x2,re_u,im_u,re_us,im_us"));
    assert_eq!(near.lines().count(), 33);
    let row: Vec<&str> = near.lines().nth(1).unwrap().split(',').collect();
    // Seventeen significant digits.
    assert_eq!(row[2].split('e').next().unwrap().trim_start_matches('-').len(), 18);
    let far = std::fs::read_to_string(far).unwrap();
    assert_eq!(far.lines().next(), Some("angle,re,im"));
    assert_eq!(far.lines().count(), 17);
}

#[test]
fn zero_threads_is_rejected() {
    let out = run(&["--threads", "0", "verify", "--suite", "eigenguard", "--config", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}
