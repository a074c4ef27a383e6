//! Pipeline stages over on-disk artifacts. Every stage writes a stamp with
//! a content hash of its configuration and inputs; rerunning a stage whose
//! stamp matches is a no-op.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use mendkit_autodiff::rng::substream;
use mendkit_geometry::{marching_cubes, surface_sample, write_obj, MeshOccupancy, OccupancyOracle, PointCloud, VoxelGrid};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::dataset::{generate, read_json, write_dataset, write_json, Dataset, Split};
use crate::error::{MendError, Result};
use crate::eval::{aggregate, render_report, write_records, EvalRecord, Method, Summary, DISPLAY_SCALE};
use crate::inference::{
    build_pseudo_restoration, extract_restoration, fracture_loss, infer_latents, mesh_chamfer, observe,
    predict_grids, surface_queries, ttt_finetune, FitLoss, RestorationMeshes, ISO_LEVEL,
};
use crate::model::RestorationModel;
use crate::parallel;
use crate::training::{steps_per_epoch, total_steps, write_train_log, TrainInstance, TrainState, Trainer, Validator};

pub const STAMP_FILE: &str = "stamp.json";
pub const RESULT_FILE: &str = "result.json";
pub const RESULT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    UpToDate,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

fn hash_tree(hasher: &mut Sha256, root: &Path, dir: &Path) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| MendError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| MendError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.file_name().is_some_and(|n| n == STAMP_FILE) {
            continue;
        }
        if path.is_dir() {
            hash_tree(hasher, root, &path)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            let bytes = fs::read(&path).map_err(|e| MendError::io(&path, e))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(())
}

/// SHA-256 over relative paths and contents of every file below `path`,
/// excluding stamps.
pub fn content_hash(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        hash_tree(&mut hasher, path, path)?;
    } else {
        hasher.update(fs::read(path).map_err(|e| MendError::io(path, e))?);
    }
    Ok(hex(&hasher.finalize()))
}

fn stage_hash(stage: &str, settings: &serde_json::Value, inputs: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
    hasher.update(settings.to_string().as_bytes());
    for input in inputs {
        if !input.exists() {
            return Err(MendError::Data(format!("missing input {}", input.display())));
        }
        hasher.update(content_hash(input)?.as_bytes());
    }
    Ok(hex(&hasher.finalize()))
}

fn is_current(out: &Path, stage: &str, hash: &str) -> bool {
    read_json::<Stamp>(&out.join(STAMP_FILE)).is_ok_and(|s| s.stage == stage && s.hash == hash)
}

fn write_stamp(out: &Path, stage: &str, hash: String) -> Result<()> {
    write_json(
        &out.join(STAMP_FILE),
        &Stamp {
            stage: stage.into(),
            hash,
        },
    )
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MendError::io(dir, e))
}

fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| MendError::io(dir, e))?;
    }
    create_dir(dir)
}

pub fn gen_data(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<StageOutcome> {
    let hash = stage_hash("gen-data", &json!({"seed": cfg.seed, "data": cfg.data}), &[])?;
    if is_current(out, "gen-data", &hash) {
        return Ok(StageOutcome::UpToDate);
    }
    let (manifest, instances) = generate(&cfg.data, cfg.seed, jobs)?;
    reset_dir(out)?;
    write_dataset(out, &manifest, &instances)?;
    write_stamp(out, "gen-data", hash)?;
    Ok(StageOutcome::Ran)
}

fn train_settings(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "seed": cfg.seed,
        "model": cfg.model,
        "train": cfg.train,
        "infer": cfg.infer,
        "ttt_epochs": cfg.ttt.epochs,
    })
}

fn load_train_data(data: &Dataset) -> Result<Vec<TrainInstance>> {
    data.ids(Split::Train)
        .iter()
        .map(|id| {
            Ok(TrainInstance {
                id: id.clone(),
                samples: data.samples(id)?,
            })
        })
        .collect()
}

/// A validation instance: its stored samples and ground-truth surface points.
pub struct ValInstance {
    pub samples: crate::samples::OccupancySampleSet,
    pub truth: PointCloud,
}

/// Loads `ids` from `data` for validation, with surface samples drawn per
/// position in `ids`.
pub fn val_instances(cfg: &RunConfig, data: &Dataset, ids: &[String]) -> Result<Vec<ValInstance>> {
    ids.iter()
        .enumerate()
        .map(|(j, id)| {
            Ok(ValInstance {
                samples: data.samples(id)?,
                truth: gt_surface(data, id, cfg.train.val_surface_samples, cfg.seed, "val-gt", j)?,
            })
        })
        .collect()
}

fn gt_surface(data: &Dataset, id: &str, n: usize, seed: u64, purpose: &str, index: usize) -> Result<PointCloud> {
    let mesh = data.mesh(id)?;
    Ok(surface_sample(&mesh, n, &mut substream(seed, purpose, index as u64))?)
}

/// Mean complete-shape Chamfer distance over `val` after a short latent
/// inference for each instance.
pub fn validate(cfg: &RunConfig, val: &[ValInstance], model: &RestorationModel<f32>, jobs: usize) -> Result<f64> {
    if val.is_empty() {
        return Err(MendError::Parameter("validation set is empty".into()));
    }
    let mut infer = cfg.infer.clone();
    infer.steps = cfg.train.val_steps;
    let idx: Vec<usize> = (0..val.len()).collect();
    let cds = parallel::map(jobs, &idx, |&j| -> Result<f64> {
        let v = &val[j];
        let obs = observe(&v.samples, &infer, &mut substream(cfg.seed, "val-observe", j as u64))?;
        let mut rng = substream(cfg.seed, "val-latent", j as u64);
        let (fitted, _) = infer_latents(model, &obs.fit, &infer, cfg.model.latent_sigma, &mut rng)?;
        let grids = predict_grids(&fitted, 0, cfg.train.val_resolution)?;
        let mesh = marching_cubes(&grids.complete, ISO_LEVEL);
        mesh_chamfer(&mesh, &v.truth, cfg.train.val_surface_samples, &mut substream(cfg.seed, "val-pred", j as u64))
    });
    let cds = cds.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(cds.iter().sum::<f64>() / cds.len() as f64)
}

pub const STATE_DIR: &str = "state";
pub const CHECKPOINT_DIR: &str = "checkpoint";
/// Model trained `ttt.epochs` fewer steps, used as the base for test-time
/// training so that both methods spend the same number of steps.
pub const SNAPSHOT_DIR: &str = "checkpoint_ttt";
const STATE_HASH_FILE: &str = "config_hash.txt";
const SAVE_EVERY_EPOCHS: u64 = 50;

/// Trains on the training split. Progress is saved under `state/` and a
/// rerun with the same inputs resumes from it.
pub fn train(cfg: &RunConfig, data_dir: &Path, out: &Path, jobs: usize) -> Result<StageOutcome> {
    let hash = stage_hash("train", &train_settings(cfg), &[data_dir])?;
    if is_current(out, "train", &hash) {
        return Ok(StageOutcome::UpToDate);
    }
    let data = Dataset::open(data_dir)?;
    let train_data = load_train_data(&data)?;
    let val = if cfg.train.val_period > 0 {
        val_instances(cfg, &data, data.ids(Split::Val))?
    } else {
        Vec::new()
    };
    if cfg.train.val_period > 0 && val.is_empty() {
        warn!("no validation instances; training runs for the full budget");
    }
    create_dir(out)?;
    let state_dir = out.join(STATE_DIR);
    let resumable = fs::read_to_string(state_dir.join(STATE_HASH_FILE)).is_ok_and(|h| h == hash);
    let mut state = if resumable {
        let s = TrainState::load(&state_dir, &cfg.train)?;
        info!("resuming training at step {}", s.step);
        s
    } else {
        reset_dir(&state_dir)?;
        fs::write(state_dir.join(STATE_HASH_FILE), &hash).map_err(|e| MendError::io(&state_dir, e))?;
        let ids: Vec<String> = train_data.iter().map(|t| t.id.clone()).collect();
        TrainState::new(&ids, &cfg.model, &cfg.train, cfg.seed)?
    };
    let trainer = Trainer::new(&cfg.train, &train_data)?;
    let budget = total_steps(&cfg.train, train_data.len());
    let snapshot = (cfg.train.fair_snapshot && cfg.ttt.epochs > 0).then(|| budget.saturating_sub(cfg.ttt.epochs));
    if snapshot.is_some_and(|s| state.step > s) && !out.join(SNAPSHOT_DIR).join(crate::checkpoint::CHECKPOINT_FILE).exists() {
        warn!("snapshot missing for resumed run; restarting");
        let ids: Vec<String> = train_data.iter().map(|t| t.id.clone()).collect();
        state = TrainState::new(&ids, &cfg.model, &cfg.train, cfg.seed)?;
    }
    let mut validate = |m: &RestorationModel<f32>| validate(cfg, &val, m, jobs);
    let chunk = SAVE_EVERY_EPOCHS * steps_per_epoch(train_data.len(), cfg.train.batch_instances);
    let mut targets: Vec<u64> = snapshot.into_iter().collect();
    targets.push(budget);
    for target in targets {
        while state.step < target && !state.stopped {
            let until = (state.step + chunk).min(target);
            let v: Option<&mut Validator<'_>> = if val.is_empty() { None } else { Some(&mut validate) };
            trainer.run(&mut state, until, v, |log| {
                info!(
                    "epoch {} loss {:.5} (C {:.4} B {:.4} F {:.4} R {:.4}){}",
                    log.epoch,
                    log.losses.total,
                    log.losses.c,
                    log.losses.b,
                    log.losses.f,
                    log.losses.r,
                    log.val_cd.map(|c| format!(" val CD {:.3e}", c)).unwrap_or_default()
                )
            })?;
            state.save(&state_dir)?;
        }
        if Some(target) == snapshot {
            state.save_selected(&out.join(SNAPSHOT_DIR))?;
        }
    }
    state.save_selected(&out.join(CHECKPOINT_DIR))?;
    if snapshot.is_none() {
        let stale = out.join(SNAPSHOT_DIR);
        if stale.exists() {
            fs::remove_dir_all(&stale).map_err(|e| MendError::io(&stale, e))?;
        }
    }
    write_train_log(&out.join("train_log.csv"), &state.history)?;
    write_stamp(out, "train", hash)?;
    Ok(StageOutcome::Ran)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub infer_seconds: f64,
    pub ttt_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub format_version: u16,
    pub id: String,
    pub class: String,
    pub method: Method,
    pub seed: u64,
    pub fit_points: usize,
    pub holdout_points: usize,
    /// Loss on the fitting points at the end of latent inference.
    pub inference: FitLoss,
    pub ttt_epochs: u64,
    pub pseudo_restoration_points: Option<usize>,
    /// Fractured-occupancy loss on held-out points after inference and at
    /// the end (after test-time training when it ran).
    pub holdout_l_f_inferred: Option<f64>,
    pub holdout_l_f_final: Option<f64>,
    pub cd_complete: f64,
    pub cd_restoration: Option<f64>,
    pub empty_meshes: Vec<String>,
    pub timings: Timings,
}

impl InstanceResult {
    pub fn record(&self) -> EvalRecord {
        let t = &self.timings;
        EvalRecord {
            id: self.id.clone(),
            class: self.class.clone(),
            method: self.method,
            cd: self.cd_complete,
            cd_restoration: self.cd_restoration,
            wall_seconds: t.infer_seconds + t.ttt_seconds + t.eval_seconds,
        }
    }
}

/// Occupancy of the input fractured shape: inside the complete mesh and
/// on the kept side of the cut.
struct FractureInput {
    occ: MeshOccupancy,
    brk: crate::fracture::BreakSet,
}

impl FractureInput {
    fn new(data: &Dataset, id: &str, seed: u64, index: usize) -> Result<Self> {
        let mesh = data.mesh(id)?;
        Ok(Self {
            occ: MeshOccupancy::new(&mesh, &mut substream(seed, "input-occupancy", index as u64))?,
            brk: data.break_set(id)?.clone(),
        })
    }

    fn labels(&self, points: &[[f32; 3]]) -> Vec<u8> {
        let pts: Vec<mendkit_geometry::Point> = points
            .iter()
            .map(|p| mendkit_geometry::Point::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect();
        self.occ
            .contains_many(&pts)
            .into_iter()
            .zip(&pts)
            .map(|(c, p)| u8::from(c && self.brk.contains(p)))
            .collect()
    }
}

/// Ground-truth restoration surface: marching cubes of the labeled
/// restoration occupancy on the evaluation grid.
fn gt_restoration(data: &Dataset, id: &str, resolution: usize, seed: u64, index: usize) -> Result<mendkit_geometry::TriangleMesh> {
    let mesh = data.mesh(id)?;
    let brk = data.break_set(id)?;
    let occ = MeshOccupancy::new(&mesh, &mut substream(seed, "gt-occupancy", index as u64))?;
    let points = VoxelGrid::unit_cube_points(resolution.max(2));
    let inside = occ.contains_many(&points);
    let values = points
        .iter()
        .zip(inside)
        .map(|(p, c)| if c && !brk.contains(p) { 1.0 } else { 0.0 })
        .collect();
    let n = resolution.max(2);
    let grid = VoxelGrid::new(n, mendkit_geometry::Point::origin(), 1.0 / (n - 1) as f64, values)?;
    Ok(marching_cubes(&grid, ISO_LEVEL))
}

pub struct RestoredInstance {
    pub result: InstanceResult,
    pub meshes: RestorationMeshes,
    pub model: RestorationModel<f32>,
}

/// Latent inference, optional test-time training, extraction and
/// evaluation of one test instance. `index` keys every random stream, so
/// both methods see the same observation of an instance.
pub fn restore_instance(
    cfg: &RunConfig,
    base: &RestorationModel<f32>,
    data: &Dataset,
    id: &str,
    index: usize,
    method: Method,
) -> Result<RestoredInstance> {
    let seed = cfg.seed;
    let i = index as u64;
    let ctx = |e: MendError| e.numeric_context(format!("instance {}", id));
    let samples = data.samples(id)?;
    let obs = observe(&samples, &cfg.infer, &mut substream(seed, "observe", i))?;
    let started = Instant::now();
    let (mut model, inference) = infer_latents(
        base,
        &obs.fit,
        &cfg.infer,
        cfg.model.latent_sigma,
        &mut substream(seed, "infer-latent", i),
    )
    .map_err(ctx)?;
    let infer_seconds = started.elapsed().as_secs_f64();
    let holdout = |m: &RestorationModel<f32>| -> Result<Option<f64>> {
        if obs.holdout.is_empty() {
            Ok(None)
        } else {
            fracture_loss(m, 0, &obs.holdout).map(Some)
        }
    };
    let holdout_l_f_inferred = holdout(&model)?;
    let started = Instant::now();
    let mut pseudo_count = None;
    let ttt_epochs = if method == Method::WithTtt { cfg.ttt.epochs } else { 0 };
    if ttt_epochs > 0 {
        let mut fit = obs.fit.clone();
        if cfg.ttt.surface_points > 0 {
            let inferred = marching_cubes(&predict_grids(&model, 0, cfg.eval.resolution)?.complete, ISO_LEVEL);
            let extra = surface_queries(
                &inferred,
                cfg.ttt.surface_points,
                cfg.ttt.surface_sigma,
                &mut substream(seed, "ttt-surface", i),
            )?;
            let input = FractureInput::new(data, id, seed, index)?;
            fit.o_f.extend(input.labels(&extra));
            fit.points.extend(extra);
        }
        let occ = model.predict(0, &fit.points)?;
        let pseudo = build_pseudo_restoration(&occ.o_c, &fit.o_f, cfg.ttt.tau)?;
        pseudo_count = Some(pseudo.iter().filter(|&&v| v == 1).count());
        let ttt_seed = substream(seed, "ttt", i).random::<u64>();
        model = ttt_finetune(&model, &fit, &pseudo, &cfg.ttt, ttt_seed).map_err(ctx)?;
    }
    let ttt_seconds = started.elapsed().as_secs_f64();
    let holdout_l_f_final = holdout(&model)?;
    let started = Instant::now();
    let meshes = extract_restoration(&model, 0, cfg.eval.resolution)?;
    let n = cfg.eval.surface_samples;
    let truth = gt_surface(data, id, n, seed, "gt-surface", index)?;
    let cd_complete = mesh_chamfer(&meshes.complete, &truth, n, &mut substream(seed, "pred-surface", i))?;
    let gt_rest = gt_restoration(data, id, cfg.eval.resolution, seed, index)?;
    let cd_restoration = if gt_rest.is_empty() {
        warn!("instance {}: empty ground-truth restoration at this resolution", id);
        None
    } else {
        let truth = surface_sample(&gt_rest, n, &mut substream(seed, "gt-restoration", i))?;
        Some(mesh_chamfer(&meshes.restoration, &truth, n, &mut substream(seed, "pred-restoration", i))?)
    };
    let result = InstanceResult {
        format_version: RESULT_VERSION,
        id: id.to_string(),
        class: data.manifest.class.name().to_string(),
        method,
        seed,
        fit_points: obs.fit.len(),
        holdout_points: obs.holdout.len(),
        inference,
        ttt_epochs,
        pseudo_restoration_points: pseudo_count,
        holdout_l_f_inferred,
        holdout_l_f_final,
        cd_complete,
        cd_restoration,
        empty_meshes: meshes.empty_names(),
        timings: Timings {
            infer_seconds,
            ttt_seconds,
            eval_seconds: started.elapsed().as_secs_f64(),
        },
    };
    Ok(RestoredInstance { result, meshes, model })
}

pub fn write_meshes(dir: &Path, meshes: &RestorationMeshes) -> Result<()> {
    create_dir(dir)?;
    for (name, mesh) in meshes.named() {
        let path = dir.join(format!("{}.obj", name));
        let file = File::create(&path).map_err(|e| MendError::io(&path, e))?;
        write_obj(BufWriter::new(file), mesh)?;
    }
    Ok(())
}

fn write_instance(dir: &Path, cfg: &RunConfig, restored: &RestoredInstance) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(RESULT_FILE), &restored.result)?;
    write_meshes(dir, &restored.meshes)?;
    let meta = CheckpointMeta::new(restored.model.arch, cfg.model.dropout, cfg.seed);
    save_checkpoint(&dir.join("model"), &restored.model, meta)?;
    Ok(())
}

/// Base checkpoint of a method: test-time training starts from the
/// shorter-trained snapshot when one exists.
pub fn base_checkpoint(run_dir: &Path, method: Method) -> PathBuf {
    let snapshot = run_dir.join(SNAPSHOT_DIR);
    if method == Method::WithTtt && snapshot.join(crate::checkpoint::CHECKPOINT_FILE).exists() {
        snapshot
    } else {
        run_dir.join(CHECKPOINT_DIR)
    }
}

/// Restores every test instance with `method`, writing
/// `<out>/<method>/<id>/` with `result.json`, OBJ meshes and the
/// instance model.
pub fn restore_split(cfg: &RunConfig, data_dir: &Path, run_dir: &Path, out: &Path, method: Method, jobs: usize) -> Result<StageOutcome> {
    let ckpt = base_checkpoint(run_dir, method);
    if !ckpt.join(crate::checkpoint::CHECKPOINT_FILE).exists() {
        return Err(MendError::Data(format!("missing checkpoint {}", ckpt.display())));
    }
    let mut settings = json!({
        "seed": cfg.seed,
        "latent_sigma": cfg.model.latent_sigma,
        "infer": cfg.infer,
        "eval": {"resolution": cfg.eval.resolution, "surface_samples": cfg.eval.surface_samples},
    });
    if method == Method::WithTtt {
        settings["ttt"] = json!(cfg.ttt);
    }
    let stage = method.tag();
    let hash = stage_hash(stage, &settings, &[data_dir, &ckpt])?;
    let dir = out.join(stage);
    if is_current(&dir, stage, &hash) {
        return Ok(StageOutcome::UpToDate);
    }
    let data = Dataset::open(data_dir)?;
    let (base, _) = load_checkpoint(&ckpt)?;
    let base = base.network_only();
    let ids = data.ids(Split::Test).to_vec();
    if ids.is_empty() {
        return Err(MendError::Data("dataset has no test instances".into()));
    }
    reset_dir(&dir)?;
    let idx: Vec<usize> = (0..ids.len()).collect();
    let outcomes = parallel::map(jobs, &idx, |&k| -> Result<()> {
        let restored = restore_instance(cfg, &base, &data, &ids[k], k, method)?;
        info!(
            "{} {}: CD {:.3e}",
            stage,
            ids[k],
            restored.result.cd_complete
        );
        write_instance(&dir.join(&ids[k]), cfg, &restored)
    });
    outcomes.into_iter().collect::<Result<Vec<()>>>()?;
    write_stamp(&dir, stage, hash)?;
    Ok(StageOutcome::Ran)
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| MendError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| MendError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_results(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == RESULT_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Every `result.json` below the given directories, in path order.
pub fn collect_results(dirs: &[PathBuf]) -> Result<Vec<InstanceResult>> {
    let mut paths = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(MendError::Data(format!("missing results directory {}", d.display())));
        }
        find_results(d, &mut paths)?;
    }
    paths.iter().map(|p| read_json(p)).collect()
}

/// Gathers results into an evaluation record table.
pub fn eval(dirs: &[PathBuf], out_csv: &Path) -> Result<Vec<EvalRecord>> {
    let records: Vec<EvalRecord> = collect_results(dirs)?.iter().map(InstanceResult::record).collect();
    if records.is_empty() {
        return Err(MendError::Data("no results found".into()));
    }
    for r in &records {
        r.validate()?;
    }
    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_records(out_csv, &records)?;
    Ok(records)
}

pub fn report(records: &[EvalRecord], curve_points: usize, out: &Path) -> Result<Vec<Summary>> {
    render_report(records, curve_points, out)
}

/// Re-extracts the meshes of a restored instance at another resolution.
pub fn mesh(instance_dir: &Path, resolution: usize, out: &Path) -> Result<RestorationMeshes> {
    let (model, _) = load_checkpoint(&instance_dir.join("model"))?;
    if model.num_latents() != 1 {
        return Err(MendError::Data(format!(
            "{} does not hold a single-instance model",
            instance_dir.display()
        )));
    }
    let meshes = extract_restoration(&model, 0, resolution)?;
    write_meshes(out, &meshes)?;
    Ok(meshes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dim_c: usize,
    pub dim_b: usize,
    pub method: Method,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

pub const ABLATION_HEADER: &str = "dim_c,dim_b,dim_total,method,count,mean_cd_x1e4,median_cd_x1e4";

/// Trains and evaluates once per latent dimension (`d_C = d_B = d`), using
/// test-time training when it is enabled.
pub fn ablate(cfg: &RunConfig, data_dir: &Path, out: &Path, jobs: usize) -> Result<Vec<AblationRow>> {
    if cfg.ablate.dims.is_empty() {
        return Err(MendError::Config("ablate.dims is empty".into()));
    }
    create_dir(out)?;
    let method = if cfg.ttt.epochs > 0 { Method::WithTtt } else { Method::InferenceOnly };
    let mut rows = Vec::new();
    for &d in &cfg.ablate.dims {
        let mut c = cfg.clone();
        c.model.latent_c = d;
        c.model.latent_b = d;
        c.validate()?;
        let dir = out.join(format!("dim-{}", d));
        info!("ablation: latent dimension {}", d);
        train(&c, data_dir, &dir.join("run"), jobs)?;
        restore_split(&c, data_dir, &dir.join("run"), &dir.join("results"), method, jobs)?;
        let records: Vec<EvalRecord> = collect_results(&[dir.join("results").join(method.tag())])?
            .iter()
            .map(InstanceResult::record)
            .collect();
        let s = aggregate(&records)
            .into_iter()
            .next()
            .ok_or_else(|| MendError::Data(format!("no results for dimension {}", d)))?;
        rows.push(AblationRow {
            dim_c: d,
            dim_b: d,
            method,
            count: s.count,
            mean: s.mean,
            median: s.median,
        });
    }
    let mut csv = format!("{}\n", ABLATION_HEADER);
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{:.4},{:.4}\n",
            r.dim_c,
            r.dim_b,
            r.dim_c + r.dim_b,
            r.method.tag(),
            r.count,
            r.mean * DISPLAY_SCALE,
            r.median * DISPLAY_SCALE
        ));
    }
    let path = out.join("ablation.csv");
    fs::write(&path, csv).map_err(|e| MendError::io(&path, e))?;
    Ok(rows)
}
