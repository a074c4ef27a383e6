//! Per-instance restoration: latent inference with a frozen network,
//! pseudo-labels for the missing part, test-time training, mesh extraction
//! and Chamfer evaluation.

use log::warn;
use mendkit_autodiff::rng::substream;
use mendkit_autodiff::{Adam, AdamConfig, Real, Tape, Var};
use mendkit_geometry::{chamfer_distance, marching_cubes, surface_sample, Point, PointCloud, TriangleMesh, VoxelGrid};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{InferConfig, TttConfig};
use crate::error::{MendError, Result};
use crate::loss::{box_distances, fracture_box, label_tensor, regularizer, RegWeights};
use crate::model::{points_tensor, Mode, RestorationModel};
use crate::samples::OccupancySampleSet;

/// Query points with the observed fractured occupancy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuerySet {
    pub points: Vec<[f32; 3]>,
    pub o_f: Vec<u8>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            o_f: idx.iter().map(|&i| self.o_f[i]).collect(),
        }
    }
}

/// What is known about a test instance: fitting points and held-out points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observation {
    pub fit: QuerySet,
    pub holdout: QuerySet,
}

/// Selects the observable points of an instance. Uniform samples are all
/// usable; of the near-surface samples only those on the fractured side
/// are kept, since surface sampling around the missing part would reveal
/// it.
pub fn observe<R: Rng + ?Sized>(samples: &OccupancySampleSet, cfg: &InferConfig, rng: &mut R) -> Result<Observation> {
    let mut idx: Vec<usize> = (0..samples.len())
        .filter(|&i| i < samples.n_uniform || samples.o_b[i] == 1)
        .collect();
    idx.shuffle(rng);
    let n_hold = (idx.len() as f64 * cfg.holdout_fraction).round() as usize;
    let (hold, fit) = idx.split_at(n_hold);
    let (mut hold, mut fit) = (hold.to_vec(), fit.to_vec());
    if cfg.query_points > 0 {
        fit.truncate(cfg.query_points);
        let cap = (cfg.query_points as f64 * cfg.holdout_fraction / (1.0 - cfg.holdout_fraction)).ceil();
        hold.truncate(cap as usize);
    }
    let set = |ids: &[usize]| QuerySet {
        points: ids.iter().map(|&i| samples.points[i]).collect(),
        o_f: ids.iter().map(|&i| samples.o_f(i)).collect(),
    };
    Ok(Observation {
        fit: set(&fit),
        holdout: set(&hold),
    })
}

fn bce_scalar(p: f64, t: u8) -> f64 {
    let p = p.clamp(mendkit_autodiff::BCE_EPS, 1.0 - mendkit_autodiff::BCE_EPS);
    if t == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Eval-mode mean BCE of the predicted fractured occupancy on `qs`.
pub fn fracture_loss(model: &RestorationModel<f32>, index: usize, qs: &QuerySet) -> Result<f64> {
    if qs.is_empty() {
        return Err(MendError::Parameter("empty query set".into()));
    }
    let occ = model.predict(index, &qs.points)?;
    Ok(occ.o_f.iter().zip(&qs.o_f).map(|(&p, &t)| bce_scalar(p, t)).sum::<f64>() / qs.len() as f64)
}

/// Loss breakdown of a latent fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitLoss {
    pub l_f: f64,
    pub l_reg: f64,
    pub total: f64,
}

fn check_observation(fit: &QuerySet) -> Result<()> {
    if fit.o_f.len() != fit.points.len() {
        return Err(MendError::Parameter("query labels disagree with points".into()));
    }
    if !fit.o_f.contains(&1) {
        return Err(MendError::Data("degenerate input: no fractured points observed".into()));
    }
    if !fit.o_f.contains(&0) {
        return Err(MendError::Data("degenerate input: every query point is occupied".into()));
    }
    Ok(())
}

/// Optimizes a fresh latent pair for the observation with the network
/// frozen. Returns the network with that single latent pair (index 0).
/// With `batch_points` set each step fits a random subset; the returned
/// loss is measured on the whole fitting set.
pub fn infer_latents<R: Rng + ?Sized>(
    base: &RestorationModel<f32>,
    fit: &QuerySet,
    cfg: &InferConfig,
    latent_sigma: f64,
    rng: &mut R,
) -> Result<(RestorationModel<f32>, FitLoss)> {
    check_observation(fit)?;
    let mut model = base.network_only();
    model.add_latent("target", latent_sigma, rng)?;
    let bounds = fracture_box(&fit.points, &fit.o_f, cfg.box_inflation).expect("fractured points present");
    let dist = box_distances(&fit.points, &bounds);
    let weights = RegWeights {
        nonempty: cfg.lambda_nonempty,
        min_restoration: cfg.min_restoration,
        proximity: cfg.lambda_prox,
    };
    let mut adam = Adam::new(AdamConfig::default()).with_group_lr(model.latent, cfg.lr_latent);
    adam.set_frozen(model.net, true);
    let batch_seed = rng.random::<u64>();
    let minibatch = cfg.batch_points > 0 && cfg.batch_points < fit.len();
    let mut last = FitLoss::default();
    for step in 0..=cfg.steps {
        let (values, grads) = {
            let picked;
            let (qs, d) = if minibatch && step < cfg.steps {
                let mut r = substream(batch_seed, "infer-batch", step);
                let idx: Vec<usize> = (0..cfg.batch_points).map(|_| r.random_range(0..fit.len())).collect();
                picked = (fit.subset(&idx), idx.iter().map(|&i| dist[i]).collect::<Vec<f64>>());
                (&picked.0, &picked.1[..])
            } else {
                (fit, &dist[..])
            };
            let mut tape = Tape::new(&model.store);
            tape.freeze_group(model.net);
            let x = tape.constant(points_tensor(&qs.points));
            let pred = model.forward(&mut tape, 0, x, &mut Mode::eval())?;
            let l_f = tape.bce(pred.o_f, label_tensor(qs.o_f.iter().copied()))?;
            let l_reg = regularizer(&mut tape, pred.o_r, d, weights)?;
            let total = tape.add(l_f, l_reg)?;
            let v = |x: Var| tape.value(x).item().as_f64();
            let values = FitLoss {
                l_f: v(l_f),
                l_reg: v(l_reg),
                total: v(total),
            };
            if !values.total.is_finite() {
                return Err(MendError::Numeric(format!("non-finite inference loss at step {}", step)));
            }
            if step == cfg.steps {
                (values, None)
            } else {
                (values, Some(tape.backward(total)?))
            }
        };
        last = values;
        if let Some(g) = grads {
            adam.step(&mut model.store, &g)
                .map_err(|e| MendError::Numeric(format!("inference step {}: {}", step, e)))?;
        }
    }
    Ok((model, last))
}

/// `1` where the predicted complete shape is occupied (`o_C ≥ τ`) and the
/// input fracture is not.
pub fn build_pseudo_restoration(o_c_pred: &[f64], o_f: &[u8], tau: f64) -> Result<Vec<u8>> {
    if o_c_pred.len() != o_f.len() {
        return Err(MendError::Parameter(format!(
            "{} predictions for {} labels",
            o_c_pred.len(),
            o_f.len()
        )));
    }
    Ok(o_c_pred
        .iter()
        .zip(o_f)
        .map(|(&c, &f)| u8::from(c >= tau && f == 0))
        .collect())
}

/// Fine-tunes network and latents of `model` (single instance at index 0)
/// on `L_F + α·L_R`, with `L_R` targeting the pseudo-restoration. A fresh
/// optimizer is used; dropout stays off.
pub fn ttt_finetune(
    model: &RestorationModel<f32>,
    fit: &QuerySet,
    pseudo: &[u8],
    cfg: &TttConfig,
    seed: u64,
) -> Result<RestorationModel<f32>> {
    check_observation(fit)?;
    if pseudo.len() != fit.len() {
        return Err(MendError::Parameter("pseudo-labels disagree with the query set".into()));
    }
    let mut model = model.clone();
    let mut adam = Adam::new(AdamConfig::default())
        .with_group_lr(model.net, cfg.lr_net)
        .with_group_lr(model.latent, cfg.lr_latent);
    let all: Vec<usize> = (0..fit.len()).collect();
    for epoch in 0..cfg.epochs {
        let idx = if cfg.resample {
            let mut rng = substream(seed, "ttt-resample", epoch);
            let n = if cfg.batch_points > 0 { cfg.batch_points } else { fit.len() };
            (0..n).map(|_| rng.random_range(0..fit.len())).collect()
        } else {
            all.clone()
        };
        let grads = {
            let mut tape = Tape::new(&model.store);
            let qs;
            let (points, labels, targets) = if cfg.resample {
                qs = fit.subset(&idx);
                (&qs.points, &qs.o_f, idx.iter().map(|&i| pseudo[i]).collect::<Vec<_>>())
            } else {
                (&fit.points, &fit.o_f, pseudo.to_vec())
            };
            let x = tape.constant(points_tensor(points));
            let pred = model.forward(&mut tape, 0, x, &mut Mode::eval())?;
            let l_f = tape.bce(pred.o_f, label_tensor(labels.iter().copied()))?;
            let l_r = tape.bce(pred.o_r, label_tensor(targets.into_iter()))?;
            let weighted = tape.scale(l_r, cfg.alpha);
            let total = tape.add(l_f, weighted)?;
            if !tape.value(total).item().as_f64().is_finite() {
                return Err(MendError::Numeric(format!("non-finite TTT loss at epoch {}", epoch)));
            }
            tape.backward(total)?
        };
        adam.step(&mut model.store, &grads)
            .map_err(|e| MendError::Numeric(format!("TTT epoch {}: {}", epoch, e)))?;
    }
    Ok(model)
}

/// Points jittered with `N(0, sigma²)` around surface samples of `mesh`,
/// clamped to the unit cube. An empty mesh yields no points.
pub fn surface_queries<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, sigma: f64, rng: &mut R) -> Result<Vec<[f32; 3]>> {
    if n == 0 || mesh.is_empty() || mesh.area() <= 0.0 {
        return Ok(Vec::new());
    }
    let cloud = surface_sample(mesh, n, rng)?;
    let noise = rand_distr::Normal::new(0.0, sigma).map_err(|e| MendError::Parameter(e.to_string()))?;
    Ok(cloud
        .points
        .iter()
        .map(|p| {
            let mut q = [0f32; 3];
            for (k, v) in q.iter_mut().enumerate() {
                *v = (p[k] + rand_distr::Distribution::sample(&noise, rng)).clamp(0.0, 1.0) as f32;
            }
            q
        })
        .collect())
}

/// Predicted occupancies on the unit-cube grid.
#[derive(Clone, Debug)]
pub struct OccupancyGrids {
    pub complete: VoxelGrid,
    pub fractured: VoxelGrid,
    pub restoration: VoxelGrid,
}

pub fn predict_grids(model: &RestorationModel<f32>, index: usize, resolution: usize) -> Result<OccupancyGrids> {
    let resolution = resolution.max(2);
    let points: Vec<[f32; 3]> = VoxelGrid::unit_cube_points(resolution)
        .iter()
        .map(|p| [p.x as f32, p.y as f32, p.z as f32])
        .collect();
    let occ = model.predict(index, &points)?;
    let grid = |values: Vec<f64>| VoxelGrid::new(resolution, Point::origin(), 1.0 / (resolution - 1) as f64, values);
    Ok(OccupancyGrids {
        complete: grid(occ.o_c)?,
        fractured: grid(occ.o_f)?,
        restoration: grid(occ.o_r)?,
    })
}

#[derive(Clone, Debug)]
pub struct RestorationMeshes {
    pub complete: TriangleMesh,
    pub fractured: TriangleMesh,
    pub restoration: TriangleMesh,
}

impl RestorationMeshes {
    pub fn named(&self) -> [(&'static str, &TriangleMesh); 3] {
        [
            ("complete", &self.complete),
            ("fractured", &self.fractured),
            ("restoration", &self.restoration),
        ]
    }

    pub fn empty_names(&self) -> Vec<String> {
        self.named()
            .iter()
            .filter(|(_, m)| m.is_empty())
            .map(|(n, _)| n.to_string())
            .collect()
    }
}

pub const ISO_LEVEL: f64 = 0.5;

/// Marching cubes of `o_C`, `o_F` and `o_R` at iso 0.5.
pub fn extract_restoration(model: &RestorationModel<f32>, index: usize, resolution: usize) -> Result<RestorationMeshes> {
    let g = predict_grids(model, index, resolution)?;
    let meshes = RestorationMeshes {
        complete: marching_cubes(&g.complete, ISO_LEVEL),
        fractured: marching_cubes(&g.fractured, ISO_LEVEL),
        restoration: marching_cubes(&g.restoration, ISO_LEVEL),
    };
    for name in meshes.empty_names() {
        warn!("predicted {} shape is empty", name);
    }
    Ok(meshes)
}

/// Surface samples of a predicted mesh; an empty prediction is represented
/// by the cube center so that the distance stays finite and large.
pub fn prediction_cloud<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Result<PointCloud> {
    if mesh.is_empty() || mesh.area() <= 0.0 {
        return Ok(PointCloud::new(vec![Point::new(0.5, 0.5, 0.5)]));
    }
    Ok(surface_sample(mesh, n, rng)?)
}

pub fn mesh_chamfer<R: Rng + ?Sized>(pred: &TriangleMesh, truth: &PointCloud, n: usize, rng: &mut R) -> Result<f64> {
    let cloud = prediction_cloud(pred, n, rng)?;
    Ok(chamfer_distance(&cloud, truth)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> OccupancySampleSet {
        let points: Vec<[f32; 3]> = (0..100).map(|i| [i as f32 / 100.0, 0.5, 0.5]).collect();
        let o_c = (0..100).map(|i| u8::from((20..80).contains(&i))).collect();
        let o_b = (0..100).map(|i| u8::from(i < 50 || i >= 90)).collect();
        OccupancySampleSet {
            points,
            o_c,
            o_b,
            n_uniform: 60,
        }
    }

    #[test]
    fn observation_hides_surface_points_of_the_missing_part() {
        let s = samples();
        let cfg = InferConfig {
            query_points: 0,
            holdout_fraction: 0.25,
            ..Default::default()
        };
        let obs = observe(&s, &cfg, &mut substream(1, "t", 0)).unwrap();
        assert_eq!(obs.fit.len() + obs.holdout.len(), 70);
        assert_eq!(obs.holdout.len(), 18);
        for p in obs.fit.points.iter().chain(&obs.holdout.points) {
            let i = (p[0] * 100.0).round() as usize;
            assert!(i < 60 || i >= 90, "{}", i);
        }
    }

    #[test]
    fn pseudo_restoration_matches_recount() {
        let c = [0.9, 0.4, 0.5, 0.7, 0.1];
        let f = [1, 0, 0, 0, 1];
        let r = build_pseudo_restoration(&c, &f, 0.5).unwrap();
        assert_eq!(r, vec![0, 0, 1, 1, 0]);
        assert_eq!(build_pseudo_restoration(&c, &[1; 5], 0.5).unwrap(), vec![0; 5]);
        assert!(build_pseudo_restoration(&c, &f[..2], 0.5).is_err());
    }

    #[test]
    fn empty_prediction_maps_to_center() {
        let cloud = prediction_cloud(&TriangleMesh::empty(), 10, &mut substream(0, "t", 0)).unwrap();
        assert_eq!(cloud.points, vec![Point::new(0.5, 0.5, 0.5)]);
    }
}
