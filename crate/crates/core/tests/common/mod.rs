#![allow(dead_code)]

use mendkit::config::{Band, DataConfig, ModelConfig, RunConfig, ShapeClass, TrainConfig};
use mendkit::dataset::{generate, Instance};
use mendkit::model::{Architecture, RestorationModel};
use mendkit::training::TrainInstance;
use mendkit_autodiff::rng::stream;

pub fn tiny_data(class: ShapeClass, count: usize) -> DataConfig {
    DataConfig {
        class,
        count,
        band: Band::Low,
        n_uniform: 1500,
        n_surface: 1500,
        fracture_samples: 20_000,
        ..Default::default()
    }
}

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        latent_c: 4,
        latent_b: 4,
        width: 16,
        dropout: 0.0,
        latent_sigma: 0.01,
    }
}

pub fn tiny_train(epochs: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_instances: 2,
        batch_points: 128,
        val_period: 0,
        ..Default::default()
    }
}

pub fn tiny_run() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data = tiny_data(ShapeClass::Boxes, 8);
    cfg.data.train_fraction = 0.5;
    cfg.data.val_fraction = 0.125;
    cfg.model = tiny_model();
    cfg.train = tiny_train(4);
    cfg.train.val_period = 2;
    cfg.train.val_steps = 3;
    cfg.train.val_resolution = 12;
    cfg.train.val_surface_samples = 300;
    cfg.infer.steps = 5;
    cfg.infer.query_points = 512;
    cfg.ttt.epochs = 3;
    cfg.eval.resolution = 12;
    cfg.eval.surface_samples = 300;
    cfg.eval.curve_points = 8;
    cfg
}

pub fn instances(class: ShapeClass, count: usize, seed: u64) -> Vec<Instance> {
    instances_with(class, count, 1500, seed)
}

/// Instances with `per_block` uniform and `per_block` near-surface samples.
pub fn instances_with(class: ShapeClass, count: usize, per_block: usize, seed: u64) -> Vec<Instance> {
    let cfg = DataConfig {
        train_fraction: 1.0,
        val_fraction: 0.0,
        n_uniform: per_block,
        n_surface: per_block,
        ..tiny_data(class, count)
    };
    generate(&cfg, seed, 1).unwrap().1
}

pub fn train_set(instances: &[Instance]) -> Vec<TrainInstance> {
    instances
        .iter()
        .map(|i| TrainInstance {
            id: i.id.clone(),
            samples: i.samples.clone(),
        })
        .collect()
}

pub fn small_model(latent_c: usize, latent_b: usize, width: usize, n_latents: usize, seed: u64) -> RestorationModel<f64> {
    let arch = Architecture { latent_c, latent_b, width };
    let mut rng = stream(seed, "test-model");
    let mut m = RestorationModel::<f64>::init(arch, &mut rng).unwrap();
    for k in 0..n_latents {
        m.add_latent(&format!("i{}", k), 0.3, &mut rng).unwrap();
    }
    m
}

pub fn random_points(n: usize, seed: u64) -> Vec<[f32; 3]> {
    use rand::Rng;
    let mut rng = stream(seed, "test-points");
    (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
}
