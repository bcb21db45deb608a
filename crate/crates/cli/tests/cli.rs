use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn canvas_psd(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_canvas-psd"));
    cmd.args(args);
    match config {
        Some(p) => cmd.env("CANVAS_PSD_CONFIG", p),
        None => cmd.env_remove("CANVAS_PSD_CONFIG"),
    };
    cmd.output().expect("run canvas-psd")
}

fn error_of(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(out.stderr.trim_ascii()).expect("stderr is a JSON error")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn synth_small(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = path(dir, name);
    let mut args = vec!["synth", "--fv", "10", "--fh", "7", "--width", "2.2", "--height", "2.2"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["-o", &out]);
    let run = canvas_psd(&args, None);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    out
}

fn sidecar(image: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(format!("{image}.meta.json")).unwrap()).unwrap()
}

#[test]
fn synth_writes_image_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_small(dir.path(), "plain.png", &[]);
    assert!(Path::new(&image).is_file());
    let meta = sidecar(&image);
    assert_eq!(meta["resolution"], 200.0);
    let pattern = &meta["synthesis"]["pattern"];
    assert_eq!((pattern["m"].as_u64(), pattern["n"].as_u64(), pattern["p"].as_u64()), (Some(2), Some(1), Some(1)));
}

#[test]
fn psd_report_recovers_the_synthesized_counts() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_small(dir.path(), "plain.pgm", &[]);
    let out = canvas_psd(&["psd", &image], None);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["command"], "psd");
    let fit = &report["psd"]["fit"];
    assert_eq!((fit["m"].as_u64(), fit["n"].as_u64()), (Some(2), Some(1)));
    assert!((fit["f_v"].as_f64().unwrap() - 10.0).abs() < 0.1);
    assert!((fit["f_h"].as_f64().unwrap() - 7.0).abs() < 0.1);
    assert!(report["fingerprint"].is_object());
    assert!(report["source"]["synthesis"].is_object());
}

#[test]
fn count_writes_csv_and_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_small(dir.path(), "plain.png", &[]);
    let csv = path(dir.path(), "maps.csv");
    let out = canvas_psd(&["count", &image, "--csv", &csv], None);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mode = report["counting"]["vertical"]["mode"].as_f64().unwrap();
    assert!((mode - 10.0).abs() <= 0.2, "mode {mode}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("x_px,y_px,f_v,f_h,angle_v,angle_h,confidence"));
    assert!(text.lines().count() > 1);
}

#[test]
fn compare_needs_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_small(dir.path(), "plain.png", &[]);
    let count = path(dir.path(), "count.json");
    let print = path(dir.path(), "print.json");
    assert!(canvas_psd(&["count", &image, "-o", &count], None).status.success());
    assert!(canvas_psd(&["fingerprint", &image, "-o", &print], None).status.success());
    let err = error_of(&canvas_psd(&["compare", &count, &print], None));
    assert_eq!(err["error"], "invalid-input");

    let out = canvas_psd(&["compare", &print, &print], None);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["comparison"]["result"]["verdict"], "match");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = error_of(&canvas_psd(&["psd", &path(dir.path(), "absent.png")], None));
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("absent.png"));
}

#[test]
fn resolution_is_required_without_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_small(dir.path(), "plain.pgm", &[]);
    std::fs::remove_file(format!("{image}.meta.json")).unwrap();
    let err = error_of(&canvas_psd(&["fingerprint", &image], None));
    assert_eq!(err["error"], "missing-resolution");
    assert!(canvas_psd(&["fingerprint", &image, "--resolution", "200"], None).status.success());
}

#[test]
fn twill_parameters_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "t.png");
    let err = error_of(&canvas_psd(
        &["synth", "--pattern", "twill", "--m", "4", "--n", "2", "--fv", "10", "--fh", "10", "-o", &out],
        None,
    ));
    assert_eq!(err["error"], "invalid-input");
    assert!(!Path::new(&out).exists());
}

#[test]
fn config_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "seed = 42\n").unwrap();
    let out = path(dir.path(), "seeded.png");
    let run = canvas_psd(
        &["synth", "--fv", "10", "--fh", "7", "--width", "2.2", "--height", "2.2", "--noise", "0.1", "-o", &out],
        Some(&config),
    );
    assert!(run.status.success());
    assert_eq!(sidecar(&out)["synthesis"]["degradation"]["seed"], 42);

    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    let err = error_of(&canvas_psd(&["psd", &out], Some(&config)));
    assert_eq!(err["error"], "format");
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_small(dir.path(), "noisy.png", &["--snr-db", "5", "--seed", "3"]);
    let first = canvas_psd(&["psd", &image], None);
    let second = canvas_psd(&["psd", &image], None);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}
