use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn speedcam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speedcam"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn speedcam")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = speedcam(dir, args);
    assert!(
        out.status.success(),
        "speedcam {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = speedcam(dir, args);
    assert!(!out.status.success(), "speedcam {args:?} unexpectedly succeeded");
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMOKE_CONFIG: &str = r#"{
  "dataset": { "n_episodes": 6 },
  "model": {
    "r3d18": { "timesteps": 8, "input_hw": [16, 16], "width_multiplier": 0.125 },
    "cnn_gru": { "timesteps": 4, "input_hw": [56, 56], "backbone": "desk", "gru_units": 8 }
  },
  "training": { "max_epochs": 2 }
}"#;

fn with<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--config", "smoke.json", "--seed", "5"];
    v.extend_from_slice(rest);
    v
}

fn first_line(s: &str) -> PathBuf {
    PathBuf::from(s.lines().next().unwrap().split(' ').next().unwrap())
}

#[test]
fn invalid_flag_prints_usage_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stderr) = err(tmp.path(), &["generate", "--no-such-flag"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("Usage"), "{stderr}");
    assert_eq!(err(tmp.path(), &["train", "--model", "resnet50"]).0, 2);
    assert_eq!(err(tmp.path(), &["generate", "--resolution", "96by54"]).0, 2);
}

#[test]
fn missing_upstream_artifacts_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stderr) = err(tmp.path(), &["split"]);
    assert_ne!(code, 0);
    assert!(stderr.contains("generate"), "{stderr}");
    let (_, stderr) = err(tmp.path(), &["evaluate"]);
    assert!(stderr.contains("error"), "{stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), r#"{"dataset": {"episodes": 3}}"#).unwrap();
    let (code, stderr) = err(tmp.path(), &["--config", "bad.json", "generate"]);
    assert_ne!(code, 0);
    assert!(stderr.contains("episodes"), "{stderr}");
}

#[test]
fn generate_is_reproducible_and_guards_existing_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let args = [
        "--seed",
        "3",
        "--dataset",
        "a",
        "generate",
        "--episodes",
        "2",
        "--resolution",
        "96x54",
    ];
    ok(d, &args);
    let first = fs::read(d.join("a/manifest.json")).unwrap();
    assert_ne!(err(d, &args).0, 0);
    let mut again = args.to_vec();
    again.push("--overwrite");
    ok(d, &again);
    assert_eq!(fs::read(d.join("a/manifest.json")).unwrap(), first);
    ok(
        d,
        &[
            "--seed",
            "3",
            "--dataset",
            "b",
            "generate",
            "--episodes",
            "2",
            "--resolution",
            "96x54",
        ],
    );
    assert_eq!(fs::read(d.join("b/manifest.json")).unwrap(), first);
    assert_eq!(
        fs::read(d.join("a/episodes/ep_00001/frames/000003.png")).unwrap(),
        fs::read(d.join("b/episodes/ep_00001/frames/000003.png")).unwrap()
    );
}

#[test]
fn full_pipeline_on_smoke_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("smoke.json"), SMOKE_CONFIG).unwrap();

    ok(d, &with(&["generate", "--resolution", "32x32"]));
    assert!(d.join("data/manifest.json").is_file());
    ok(d, &with(&["split"]));
    assert!(d.join("runs/splits.json").is_file());
    assert!(d.join("runs/resolved_config_split.json").is_file());

    let r3d = first_line(&ok(d, &with(&["train", "--model", "r3d18"])));
    let gru = first_line(&ok(d, &with(&["train", "--model", "cnn-gru"])));
    assert!(r3d.starts_with("runs/r3d18") && r3d.ends_with("best.ckpt"), "{r3d:?}");
    assert!(gru.starts_with("runs/cnn_gru"), "{gru:?}");
    let run = r3d.parent().unwrap();
    assert!(d.join(run).join("history.csv").is_file());
    assert!(d.join(run).join("train_config.json").is_file());

    let r3d_s = r3d.to_str().unwrap();
    let gru_s = gru.to_str().unwrap();
    let out = ok(d, &with(&["evaluate", "--checkpoint", r3d_s]));
    assert!(out.contains("r3d18: MAE"), "{out}");
    for f in [
        "summary.json",
        "errors.csv",
        "report_vehicle.csv",
        "report_speedbin.csv",
        "loss_curve.svg",
    ] {
        assert!(d.join(run).join("report").join(f).is_file(), "missing {f}");
    }
    ok(d, &with(&["evaluate", "--model", "cnn-gru"]));

    let (_, stderr) = err(d, &with(&["evaluate", "--checkpoint", r3d_s, "--model", "cnn-gru"]));
    assert!(stderr.contains("r3d18"), "{stderr}");
    let (_, stderr) = err(d, &with(&["evaluate", "--checkpoint", gru_s, "--timesteps", "16"]));
    assert!(stderr.contains("16") && stderr.contains('4'), "{stderr}");

    let table = ok(d, &with(&["report", "--checkpoint", r3d_s, "--checkpoint", gru_s]));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(
        lines[1].contains(",r3d18,") && lines[2].contains(",cnn_gru,"),
        "{table}"
    );
    assert!(d.join("runs/comparison.csv").is_file());
}

#[test]
fn preview_renders_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "preview",
            "--episode",
            "2",
            "--out",
            "pv",
            "--resolution",
            "48x27",
            "--max-frames",
            "5",
        ],
    );
    assert!(out.starts_with("5 frames"), "{out}");
    assert!(tmp.path().join("pv/000004.png").is_file());
    assert!(tmp.path().join("pv/episode.json").is_file());
}
