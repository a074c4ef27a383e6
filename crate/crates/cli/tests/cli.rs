use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "data.class=boxes",
    "data.count=6",
    "data.train_fraction=0.5",
    "data.val_fraction=0",
    "data.n_uniform=1500",
    "data.n_surface=1500",
    "data.fracture_samples=20000",
    "model.latent_c=4",
    "model.latent_b=4",
    "model.width=16",
    "train.epochs=3",
    "train.batch_instances=2",
    "train.batch_points=128",
    "train.val_period=0",
    "infer.steps=5",
    "infer.query_points=512",
    "ttt.epochs=2",
    "eval.resolution=12",
    "eval.surface_samples=300",
    "eval.curve_points=8",
];

fn mendkit(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mendkit"));
    cmd.arg("-q");
    for s in TINY {
        cmd.args(["--set", s]);
    }
    cmd.args(args);
    match seed {
        Some(s) => cmd.env("MENDKIT_SEED", s),
        None => cmd.env_remove("MENDKIT_SEED"),
    };
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn pipeline(root: &Path, seed: Option<&str>) -> Vec<u8> {
    let data = root.join("data");
    let run = root.join("run");
    let res = root.join("results");
    let records = root.join("records.csv");
    let report = root.join("report");
    for args in [
        vec!["gen-data", "--out", p(&data)],
        vec!["train", "--data", p(&data), "--out", p(&run)],
        vec!["infer", "--data", p(&data), "--run", p(&run), "--out", p(&res)],
        vec!["ttt", "--data", p(&data), "--run", p(&run), "--out", p(&res), "--jobs", "2"],
        vec!["eval", "--results", p(&res), "--out", p(&records)],
        vec!["report", "--records", p(&records), "--out", p(&report)],
    ] {
        let o = mendkit(&args, seed);
        assert!(o.status.success(), "{:?}: {}", args, stderr(&o));
    }
    assert!(res.join("inference-only").is_dir() && res.join("with-ttt").is_dir());
    fs::read(report.join("report.csv")).unwrap()
}

#[test]
fn version_lists_format_versions() {
    let o = Command::new(env!("CARGO_BIN_EXE_mendkit")).arg("--version").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_mendkit")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_mendkit")).args(["-V"]).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("mendkit"));
    let long = Command::new(env!("CARGO_BIN_EXE_mendkit")).arg("--version").output().unwrap();
    assert!(String::from_utf8_lossy(&long.stdout).contains("checkpoint v1"));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let o = Command::new(env!("CARGO_BIN_EXE_mendkit")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = mendkit(&["--set", "model.colour=red", "gen-data", "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
    let o = mendkit(&["gen-data", "--out", p(&out)], Some("minus-one"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MENDKIT_SEED"));
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"ttt": {"epochs": 1, "alpha": 0.1, "extra": true}}"#).unwrap();
    let o = mendkit(&["--config", p(&cfg), "gen-data", "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_exits_2_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(mendkit(&["gen-data", "--out", p(&data)], None).status.success());
    let missing = dir.path().join("no-such-run");
    let o = mendkit(&["infer", "--data", p(&data), "--run", p(&missing), "--out", p(&dir.path().join("r"))], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-run"), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(mendkit(&["gen-data", "--out", p(&data)], None).status.success());
    let o = mendkit(
        &["--set", "train.lr_net=1e30", "--set", "train.epochs=20", "train", "--data", p(&data), "--out", p(&dir.path().join("run"))],
        None,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn seed_variable_and_config_file_drive_the_pipeline() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = pipeline(a.path(), Some("5"));
    assert_eq!(first, pipeline(b.path(), Some("5")));
    let rerun = mendkit(&["gen-data", "--out", p(&a.path().join("data"))], Some("5"));
    assert!(String::from_utf8_lossy(&rerun.stdout).contains("up to date"));

    pipeline(c.path(), Some("6"));
    assert_ne!(
        fs::read(a.path().join("data/manifest.json")).unwrap(),
        fs::read(c.path().join("data/manifest.json")).unwrap()
    );

    let cfg = a.path().join("seed.json");
    fs::write(&cfg, r#"{"seed": 5}"#).unwrap();
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("data");
    assert!(mendkit(&["--config", p(&cfg), "gen-data", "--out", p(&out)], None).status.success());
    assert_eq!(
        fs::read(a.path().join("data/manifest.json")).unwrap(),
        fs::read(out.join("manifest.json")).unwrap()
    );
}
