mod common;

use common::{instances, instances_with, random_points, tiny_model, tiny_train, train_set};
use mendkit::config::{ModelConfig, ShapeClass, TrainConfig};
use mendkit::training::{train_class, write_train_log, TrainInstance, TrainState, Trainer, LOG_HEADER};
use mendkit::MendError;

fn store_bits(state: &TrainState) -> Vec<u32> {
    state
        .model
        .store
        .ids()
        .flat_map(|id| state.model.store.get(id).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let data = train_set(&instances(ShapeClass::Boxes, 3, 5));
    let mut model_cfg = tiny_model();
    model_cfg.dropout = 0.2;
    let cfg = tiny_train(100);
    let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
    let trainer = Trainer::new(&cfg, &data).unwrap();

    let mut straight = TrainState::new(&ids, &model_cfg, &cfg, 9).unwrap();
    trainer.run(&mut straight, u64::MAX, None, |_| {}).unwrap();

    // two steps per epoch, so the halfway point is epoch 50
    let dir = tempfile::tempdir().unwrap();
    let mut first = TrainState::new(&ids, &model_cfg, &cfg, 9).unwrap();
    trainer.run(&mut first, 100, None, |_| {}).unwrap();
    assert_eq!(first.epoch(), 50);
    first.save(dir.path()).unwrap();
    let mut resumed = TrainState::load(dir.path(), &cfg).unwrap();
    trainer.run(&mut resumed, u64::MAX, None, |_| {}).unwrap();

    assert_eq!(straight.step, 200);
    assert_eq!(resumed.step, straight.step);
    assert_eq!(store_bits(&resumed), store_bits(&straight));
    let losses = |s: &TrainState| s.history.iter().map(|e| (e.epoch, e.losses.clone(), e.val_cd)).collect::<Vec<_>>();
    assert_eq!(losses(&resumed), losses(&straight));
}

#[test]
fn zero_epochs_return_the_initialization() {
    let data = train_set(&instances(ShapeClass::Boxes, 2, 1));
    let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
    let cfg = tiny_train(0);
    let init = TrainState::new(&ids, &tiny_model(), &cfg, 4).unwrap();
    let trained = train_class(&data, &tiny_model(), &cfg, 4, None).unwrap();
    assert_eq!(store_bits(&trained), store_bits(&init));
    assert!(trained.history.is_empty());
}

#[test]
fn loss_decreases_on_a_small_set() {
    let data = train_set(&instances(ShapeClass::Boxes, 2, 2));
    let mut cfg = tiny_train(60);
    cfg.lr_net = 3e-3;
    let state = train_class(&data, &tiny_model(), &cfg, 3, None).unwrap();
    let first = state.history.first().unwrap().losses.total;
    let last = state.history.last().unwrap().losses.total;
    assert!(last < first, "{} -> {}", first, last);
}

#[test]
fn single_box_overfits() {
    let data = train_set(&instances_with(ShapeClass::Boxes, 1, 500, 1));
    let model_cfg = ModelConfig {
        latent_c: 8,
        latent_b: 8,
        width: 64,
        dropout: 0.0,
        latent_sigma: 0.01,
    };
    let cfg = TrainConfig {
        epochs: 2000,
        batch_instances: 1,
        batch_points: 1000,
        lr_net: 5e-4,
        lr_latent: 5e-4,
        val_period: 0,
        ..Default::default()
    };
    let state = train_class(&data, &model_cfg, &cfg, 1, None).unwrap();
    // Adam spikes make adjacent windows noisy, so windows are compared 500 epochs apart
    let windows: Vec<f64> = state
        .history
        .chunks(100)
        .map(|w| w.iter().map(|e| e.losses.total).sum::<f64>() / w.len() as f64)
        .collect();
    let spaced: Vec<f64> = windows.iter().skip(4).step_by(5).copied().collect();
    assert!(spaced.windows(2).all(|p| p[1] < p[0]), "{:?}", windows);
    assert!(*windows.last().unwrap() < 0.05, "{:?}", windows);
}

#[test]
fn identical_instances_learn_equivalent_latents() {
    let inst = instances(ShapeClass::Boxes, 1, 8);
    let mut data = train_set(&inst);
    data.push(TrainInstance {
        id: "twin".into(),
        samples: data[0].samples.clone(),
    });
    let mut model_cfg = tiny_model();
    model_cfg.width = 32;
    let mut cfg = tiny_train(400);
    cfg.batch_points = 512;
    cfg.lr_net = 2e-3;
    let state = train_class(&data, &model_cfg, &cfg, 2, None).unwrap();
    let latent = |i: usize| {
        let (c, b) = state.model.latent_values(i);
        c.data().iter().chain(b.data()).map(|&v| v as f64).collect::<Vec<f64>>()
    };
    let (a, b) = (latent(0), latent(1));
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine = dot / (norm(&a) * norm(&b));
    let points = random_points(2000, 3);
    let pa = state.model.predict(0, &points).unwrap();
    let pb = state.model.predict(1, &points).unwrap();
    let mad = pa.o_c.iter().chain(&pa.o_b).zip(pb.o_c.iter().chain(&pb.o_b)).map(|(x, y)| (x - y).abs()).sum::<f64>()
        / (2 * points.len()) as f64;
    assert!(cosine > 0.9 || mad < 1e-2, "cosine {} mean abs {}", cosine, mad);
}

#[test]
fn early_stopping_keeps_the_best_validation_model() {
    let data = train_set(&instances(ShapeClass::Boxes, 2, 3));
    let mut cfg = tiny_train(50);
    cfg.val_period = 1;
    cfg.patience = 3;
    let mut calls = 0;
    let mut validator = |_: &mendkit::model::RestorationModel<f32>| {
        calls += 1;
        Ok(if calls == 2 { 0.5 } else { 1.0 + calls as f64 })
    };
    let state = train_class(&data, &tiny_model(), &cfg, 3, Some(&mut validator)).unwrap();
    assert!(state.stopped);
    assert_eq!(state.history.len(), 5);
    let best = state.best.as_ref().unwrap();
    assert_eq!((best.cd, best.epoch), (0.5, 1));
    assert_eq!(state.selected().1, Some(0.5));
}

#[test]
fn non_finite_loss_is_a_numeric_error_with_context() {
    let data = train_set(&instances(ShapeClass::Boxes, 2, 4));
    let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
    let cfg = tiny_train(2);
    let mut state = TrainState::new(&ids, &tiny_model(), &cfg, 1).unwrap();
    let w = state.model.complete_layers()[0].weight;
    state.model.store.get_mut(w).data_mut()[0] = f32::NAN;
    let err = Trainer::new(&cfg, &data).unwrap().run(&mut state, u64::MAX, None, |_| {}).unwrap_err();
    assert!(matches!(err, MendError::Numeric(_)), "{:?}", err);
    assert!(err.to_string().contains("epoch 0"), "{}", err);
}

#[test]
fn latents_must_match_training_instances() {
    let data = train_set(&instances(ShapeClass::Boxes, 2, 4));
    let cfg = tiny_train(1);
    let mut state = TrainState::new(&["other".to_string()], &tiny_model(), &cfg, 1).unwrap();
    assert!(Trainer::new(&cfg, &data).unwrap().run(&mut state, u64::MAX, None, |_| {}).is_err());
}

#[test]
fn train_log_has_one_row_per_epoch() {
    let data = train_set(&instances(ShapeClass::Boxes, 2, 6));
    let state = train_class(&data, &tiny_model(), &tiny_train(3), 1, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train_log.csv");
    write_train_log(&path, &state.history).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], LOG_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(lines[3].split(',').count(), 8);
}
