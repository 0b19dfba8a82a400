//! The `posekit` binary driven as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn posekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posekit"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn posekit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Point at distance `d1` from (0, 0) and `d2` from (1, 0), upper half-plane.
fn intersect(d1: f64, d2: f64) -> (f64, f64) {
    let x = (d1 * d1 - d2 * d2 + 1.0) / 2.0;
    (x, (d1 * d1 - x * x).sqrt())
}

/// Two one-keypoint instances with unit area, so with `uniform(1)` the OKS
/// is `exp(-d²/2)`. Predictions are placed to give the OKS matrix
/// `[[0.9, 0.4], [0.8, 0.2]]`.
fn write_tae_fixture(dir: &Path) {
    let d = |o: f64| (-2.0 * f64::ln(o)).sqrt();
    let (x1, y1) = intersect(d(0.9), d(0.8));
    let (x2, y2) = intersect(d(0.4), d(0.2));
    let gt = json!({
        "images": [{"id": 1, "width": 10, "height": 10}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "keypoints": [0, 0, 2], "num_keypoints": 1, "area": 1, "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 1, "keypoints": [1, 0, 2], "num_keypoints": 1, "area": 1, "iscrowd": 0}
        ],
        "categories": [{"id": 1, "name": "person", "keypoints": ["nose"], "skeleton": []}]
    });
    let preds = json!([
        {"image_id": 1, "category_id": 1, "keypoints": [x1, y1, 1], "score": 0.9},
        {"image_id": 1, "category_id": 1, "keypoints": [x2, y2, 1], "score": 0.8}
    ]);
    let selected = json!([
        {"image_id": 1, "gt_id": 1, "pred_index": 0},
        {"image_id": 1, "gt_id": 2, "pred_index": 1}
    ]);
    std::fs::write(dir.join("gt.json"), gt.to_string()).unwrap();
    std::fs::write(dir.join("preds.json"), preds.to_string()).unwrap();
    std::fs::write(dir.join("selected.json"), selected.to_string()).unwrap();
}

#[test]
fn no_arguments_is_a_usage_error() {
    let o = posekit(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_and_version_succeed_on_stdout() {
    for flag in ["--help", "--version"] {
        let o = posekit(&[flag]);
        assert_eq!(o.status.code(), Some(0));
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn worked_fixture_gives_tae_of_one_twentieth() {
    let dir = tempfile::tempdir().unwrap();
    write_tae_fixture(dir.path());
    let p = |f: &str| dir.path().join(f);
    let o = posekit(&[
        "--sigmas",
        "uniform(1)",
        "tae",
        "--gt",
        s(&p("gt.json")),
        "--preds",
        s(&p("preds.json")),
        "--selected",
        s(&p("selected.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("image 1: TAE 0.050"), "{out}");
    assert!(out.contains("mean TAE 0.050"), "{out}");

    let o = posekit(&[
        "--sigmas",
        "uniform(1)",
        "--format",
        "machine",
        "tae",
        "--gt",
        s(&p("gt.json")),
        "--preds",
        s(&p("preds.json")),
        "--selected",
        s(&p("selected.json")),
    ]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["mean_tae"].as_f64().unwrap() - 0.05).abs() < 1e-12);
}

#[test]
fn noiseless_synth_evaluates_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = posekit(&[
        "--seed",
        "3",
        "--out",
        s(&out),
        "synth",
        "--scenes",
        "4",
        "--noise",
        "0",
        "--conf-noise",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("seed: 3"));
    for f in ["gt.json", "cands.txt", "preds.json", "selected.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = posekit(&[
        "eval",
        "--gt",
        s(&out.join("gt.json")),
        "--preds",
        s(&out.join("preds.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("AP   = 1.000"), "{}", stdout(&o));

    let o = posekit(&[
        "tae",
        "--gt",
        s(&out.join("gt.json")),
        "--cands",
        s(&out.join("cands.txt")),
        "--selected",
        s(&out.join("selected.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean TAE 0.000"), "{}", stdout(&o));
}

#[test]
fn machine_output_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = posekit(&[
            "--format",
            "machine",
            "--seed",
            "8",
            "--jobs",
            jobs,
            "--out",
            s(&out),
            "synth",
            "--scenes",
            "5",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let files: Vec<Vec<u8>> = ["gt.json", "cands.txt", "preds.json", "selected.json"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        (o.stdout, files)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let v: Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(v["seed"], 8);
}

#[test]
fn randomized_machine_runs_require_a_seed() {
    let o = posekit(&["--format", "machine", "loss-check", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "usage");

    let o = posekit(&["loss-check", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("seed: 0"));
    assert!(
        !stderr(&o).is_empty(),
        "text mode warns about the default seed"
    );
}

#[test]
fn errors_go_to_stderr_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write_tae_fixture(dir.path());
    let missing = dir.path().join("missing.json");
    let o = posekit(&[
        "eval",
        "--gt",
        s(&missing),
        "--preds",
        s(&dir.path().join("preds.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).starts_with("error: "));

    let o = posekit(&[
        "--format",
        "machine",
        "eval",
        "--gt",
        s(&missing),
        "--preds",
        s(&missing),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(v["error"]["message"]
        .as_str()
        .unwrap()
        .contains("missing.json"));

    // One keypoint in the files, seventeen in the preset.
    let o = posekit(&[
        "oks",
        "--gt",
        s(&dir.path().join("gt.json")),
        "--preds",
        s(&dir.path().join("preds.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn logging_stays_off_stdout() {
    let dir = tempfile::tempdir().unwrap();
    write_tae_fixture(dir.path());
    let args = |v: bool| {
        let mut a = vec![];
        if v {
            a.push("-vvv");
        }
        a.extend([
            "--sigmas",
            "uniform(1)",
            "--format",
            "machine",
            "nms",
            "--preds",
        ]);
        a
    };
    let preds = dir.path().join("preds.json");
    let mut quiet = args(false);
    quiet.push(s(&preds));
    let mut loud = args(true);
    loud.push(s(&preds));
    let q = posekit(&quiet);
    let l = posekit(&loud);
    assert_eq!(q.status.code(), Some(0), "{}", stderr(&q));
    assert_eq!(q.stdout, l.stdout);
}

#[test]
fn sweep_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = posekit(&[
        "--seed",
        "2",
        "--out",
        s(&out),
        "synth",
        "sweep",
        "--scenes",
        "6",
        "--noise-levels",
        "0,0.05,0.1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tsv = std::fs::read_to_string(out.join("sweep.tsv")).unwrap();
    let mut lines = tsv.lines();
    assert!(lines.next().unwrap().starts_with("regime"));
    assert_eq!(lines.count(), 6);
}
