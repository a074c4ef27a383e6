mod common;

use std::fs;
use std::path::Path;

use common::tiny_run;
use mendkit::eval::Method;
use mendkit::pipeline::{self, StageOutcome, InstanceResult};
use mendkit::MendError;

fn run_all(cfg: &mendkit::RunConfig, root: &Path) -> Vec<StageOutcome> {
    let data = root.join("data");
    let run = root.join("run");
    let res = root.join("results");
    let outcomes = vec![
        pipeline::gen_data(cfg, &data, 1).unwrap(),
        pipeline::train(cfg, &data, &run, 1).unwrap(),
        pipeline::restore_split(cfg, &data, &run, &res, Method::InferenceOnly, 1).unwrap(),
        pipeline::restore_split(cfg, &data, &run, &res, Method::WithTtt, 1).unwrap(),
    ];
    let records = pipeline::eval(&[res], &root.join("records.csv")).unwrap();
    pipeline::report(&records, cfg.eval.curve_points, &root.join("report")).unwrap();
    outcomes
}

#[test]
fn end_to_end_is_deterministic_and_idempotent() {
    let cfg = tiny_run();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_all(&cfg, a.path()).iter().all(|o| *o == StageOutcome::Ran));
    assert!(a.path().join("run/checkpoint_ttt/checkpoint.json").exists());
    let log = fs::read_to_string(a.path().join("run/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4);
    assert!(log.lines().nth(2).unwrap().split(',').nth(6).is_some_and(|v| !v.is_empty()));

    let results = pipeline::collect_results(&[a.path().join("results")]).unwrap();
    let tags: Vec<Method> = results.iter().map(|r: &InstanceResult| r.method).collect();
    assert!(tags.contains(&Method::InferenceOnly) && tags.contains(&Method::WithTtt));
    for r in &results {
        let dir = a.path().join("results").join(r.method.tag()).join(&r.id);
        for f in ["complete.obj", "fractured.obj", "restoration.obj", "result.json"] {
            assert!(dir.join(f).exists(), "{}", f);
        }
    }

    assert!(run_all(&cfg, a.path()).iter().all(|o| *o == StageOutcome::UpToDate));
    run_all(&cfg, b.path());
    assert_eq!(
        fs::read(a.path().join("report/report.csv")).unwrap(),
        fs::read(b.path().join("report/report.csv")).unwrap()
    );

    let inst = a.path().join("results/with-ttt").join(&results[0].id);
    let out = a.path().join("remesh");
    let meshes = pipeline::mesh(&inst, 10, &out).unwrap();
    assert!(out.join("complete.obj").exists());
    assert!(meshes.complete.validate().is_ok());
}

#[test]
fn missing_checkpoint_names_the_path() {
    let cfg = tiny_run();
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline::restore_split(&cfg, dir.path(), &dir.path().join("norun"), dir.path(), Method::InferenceOnly, 1)
        .unwrap_err();
    assert!(matches!(err, MendError::Data(_)));
    assert_eq!(err.exit_class() as u8, 2);
    assert!(err.to_string().contains("norun"), "{}", err);
}

#[test]
fn changed_config_reruns_a_stage() {
    let mut cfg = tiny_run();
    cfg.data.count = 4;
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(pipeline::gen_data(&cfg, &data, 1).unwrap(), StageOutcome::Ran);
    assert_eq!(pipeline::gen_data(&cfg, &data, 1).unwrap(), StageOutcome::UpToDate);
    cfg.seed = 1;
    assert_eq!(pipeline::gen_data(&cfg, &data, 1).unwrap(), StageOutcome::Ran);
}

fn validation_setup(root: &Path) -> (mendkit::RunConfig, mendkit::dataset::Dataset) {
    let mut cfg = tiny_run();
    cfg.data.count = 4;
    cfg.data.train_fraction = 1.0;
    cfg.data.val_fraction = 0.0;
    cfg.model.width = 32;
    cfg.train.epochs = 400;
    cfg.train.batch_points = 512;
    cfg.train.lr_net = 2e-3;
    cfg.train.val_period = 0;
    cfg.train.val_steps = 50;
    cfg.train.val_resolution = 32;
    cfg.train.val_surface_samples = 3000;
    cfg.infer.query_points = 2000;
    cfg.ttt.epochs = 0;
    pipeline::gen_data(&cfg, &root.join("data"), 1).unwrap();
    let data = mendkit::dataset::Dataset::open(&root.join("data")).unwrap();
    (cfg, data)
}

#[test]
fn validation_of_a_trained_model_beats_random_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data) = validation_setup(dir.path());
    let ids = data.ids(mendkit::dataset::Split::Train).to_vec();
    let val = pipeline::val_instances(&cfg, &data, &ids[..2]).unwrap();

    pipeline::train(&cfg, &dir.path().join("data"), &dir.path().join("run"), 1).unwrap();
    let (trained, _) = mendkit::checkpoint::load_checkpoint(&dir.path().join("run/checkpoint")).unwrap();
    let init = mendkit::training::TrainState::new(&ids, &cfg.model, &cfg.train, cfg.seed).unwrap().model;

    let cd_trained = pipeline::validate(&cfg, &val, &trained, 1).unwrap();
    let cd_init = pipeline::validate(&cfg, &val, &init, 1).unwrap();
    eprintln!("validation CD trained {:.3e} init {:.3e}", cd_trained, cd_init);
    assert!(cd_trained * 10.0 <= cd_init, "trained {} init {}", cd_trained, cd_init);
    assert_eq!(pipeline::validate(&cfg, &val, &trained, 1).unwrap(), cd_trained);
}

#[test]
fn empty_validation_set_is_a_parameter_error() {
    let cfg = tiny_run();
    let model = mendkit::training::TrainState::new(&["a".to_string()], &cfg.model, &cfg.train, 0).unwrap().model;
    let err = pipeline::validate(&cfg, &[], &model, 1).unwrap_err();
    assert!(matches!(err, MendError::Parameter(_)), "{:?}", err);
}
