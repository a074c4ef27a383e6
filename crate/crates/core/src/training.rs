//! Joint optimization of both decoders and the per-instance latents.
//!
//! One epoch visits every training instance once, in batches of
//! `batch_instances`; each step draws `batch_points` stored samples per
//! instance with replacement. All randomness of step `s` comes from a
//! substream keyed by `s`, so a run stopped at any step and resumed from
//! its saved state continues bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use mendkit_autodiff::rng::{stream, substream};
use mendkit_autodiff::{Adam, AdamConfig, Tape, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_adam, load_checkpoint, save_adam, save_checkpoint, CheckpointMeta, LossSummary, ADAM_FILE};
use crate::config::{ModelConfig, TrainConfig};
use crate::dataset::{read_json, write_json};
use crate::error::{MendError, Result};
use crate::loss::{loss_terms, LossValues};
use crate::model::{points_tensor, Architecture, Mode, RestorationModel};
use crate::samples::OccupancySampleSet;

pub const STATE_FILE: &str = "state.json";

#[derive(Clone, Debug)]
pub struct TrainInstance {
    pub id: String,
    pub samples: OccupancySampleSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub losses: LossValues,
    pub val_cd: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Best {
    pub cd: f64,
    pub epoch: u64,
    pub step: u64,
    pub model: RestorationModel<f32>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: RestorationModel<f32>,
    pub adam: Adam<f32>,
    pub seed: u64,
    pub dropout: f64,
    pub step: u64,
    pub history: Vec<EpochLog>,
    partial: LossValues,
    partial_steps: u64,
    pub best: Option<Best>,
    pub rounds_since_best: u64,
    pub stopped: bool,
    wall_seconds: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    seed: u64,
    dropout: f64,
    step: u64,
    history: Vec<EpochLog>,
    partial: LossValues,
    partial_steps: u64,
    best: Option<(f64, u64, u64)>,
    rounds_since_best: u64,
    stopped: bool,
    wall_seconds: f64,
}

fn optimizer(model: &RestorationModel<f32>, lr_net: f64, lr_latent: f64) -> Adam<f32> {
    Adam::new(AdamConfig::default())
        .with_group_lr(model.net, lr_net)
        .with_group_lr(model.latent, lr_latent)
}

impl TrainState {
    /// Fresh network and latents for `ids`, seeded from `seed`.
    pub fn new(ids: &[String], model_cfg: &ModelConfig, train_cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let arch = Architecture::from_config(model_cfg);
        let mut model = RestorationModel::<f32>::init(arch, &mut stream(seed, "init"))?;
        let mut rng = stream(seed, "latents");
        for id in ids {
            model.add_latent(id, model_cfg.latent_sigma, &mut rng)?;
        }
        let adam = optimizer(&model, train_cfg.lr_net, train_cfg.lr_latent);
        Ok(Self {
            model,
            adam,
            seed,
            dropout: model_cfg.dropout,
            step: 0,
            history: Vec::new(),
            partial: LossValues::default(),
            partial_steps: 0,
            best: None,
            rounds_since_best: 0,
            stopped: false,
            wall_seconds: 0.0,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.history.len() as u64
    }

    /// Best-validation model if validation ran, otherwise the current one.
    pub fn selected(&self) -> (&RestorationModel<f32>, Option<f64>) {
        match &self.best {
            Some(b) => (&b.model, Some(b.cd)),
            None => (&self.model, None),
        }
    }

    pub fn meta(&self) -> CheckpointMeta {
        let totals: Vec<f64> = self.history.iter().map(|h| h.losses.total).collect();
        let mut meta = CheckpointMeta::new(self.model.arch, self.dropout, self.seed);
        meta.epoch = self.epoch();
        meta.step = self.step;
        meta.best_val_cd = self.best.as_ref().map(|b| b.cd);
        meta.loss_history = LossSummary {
            epochs: totals.len() as u64,
            first_total: totals.first().copied(),
            last_total: totals.last().copied(),
            min_total: totals.iter().copied().reduce(f64::min),
        };
        meta
    }

    /// Writes the selected model as a plain checkpoint.
    pub fn save_selected(&self, dir: &Path) -> Result<CheckpointMeta> {
        let mut meta = self.meta();
        if let Some(b) = &self.best {
            meta.epoch = b.epoch;
            meta.step = b.step;
        }
        save_checkpoint(dir, self.selected().0, meta)
    }

    /// Writes everything needed to resume: current model, optimizer
    /// moments, history and the best model so far.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, &self.model, self.meta())?;
        save_adam(&dir.join(ADAM_FILE), &self.model, &self.adam)?;
        if let Some(b) = &self.best {
            let mut meta = self.meta();
            meta.epoch = b.epoch;
            meta.step = b.step;
            save_checkpoint(&dir.join("best"), &b.model, meta)?;
        }
        let state = StateFile {
            seed: self.seed,
            dropout: self.dropout,
            step: self.step,
            history: self.history.clone(),
            partial: self.partial,
            partial_steps: self.partial_steps,
            best: self.best.as_ref().map(|b| (b.cd, b.epoch, b.step)),
            rounds_since_best: self.rounds_since_best,
            stopped: self.stopped,
            wall_seconds: self.wall_seconds,
        };
        write_json(&dir.join(STATE_FILE), &state)
    }

    pub fn load(dir: &Path, train_cfg: &TrainConfig) -> Result<Self> {
        let (model, _) = load_checkpoint(dir)?;
        let state: StateFile = read_json(&dir.join(STATE_FILE))?;
        let mut adam = optimizer(&model, train_cfg.lr_net, train_cfg.lr_latent);
        load_adam(&dir.join(ADAM_FILE), &model, &mut adam)?;
        let best = match state.best {
            Some((cd, epoch, step)) => Some(Best {
                cd,
                epoch,
                step,
                model: load_checkpoint(&dir.join("best"))?.0,
            }),
            None => None,
        };
        Ok(Self {
            model,
            adam,
            seed: state.seed,
            dropout: state.dropout,
            step: state.step,
            history: state.history,
            partial: state.partial,
            partial_steps: state.partial_steps,
            best,
            rounds_since_best: state.rounds_since_best,
            stopped: state.stopped,
            wall_seconds: state.wall_seconds,
        })
    }
}

pub fn steps_per_epoch(n_instances: usize, batch_instances: usize) -> u64 {
    n_instances.div_ceil(batch_instances) as u64
}

/// Step count after which training ends.
pub fn total_steps(cfg: &TrainConfig, n_instances: usize) -> u64 {
    let by_epochs = cfg.epochs * steps_per_epoch(n_instances, cfg.batch_instances);
    cfg.max_steps.map_or(by_epochs, |m| m.min(by_epochs))
}

pub type Validator<'a> = dyn FnMut(&RestorationModel<f32>) -> Result<f64> + 'a;

pub struct Trainer<'a> {
    pub cfg: &'a TrainConfig,
    pub data: &'a [TrainInstance],
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a TrainConfig, data: &'a [TrainInstance]) -> Result<Self> {
        if data.is_empty() {
            return Err(MendError::Parameter("no training instances".into()));
        }
        Ok(Self { cfg, data })
    }

    fn check_state(&self, state: &TrainState) -> Result<()> {
        if state.model.num_latents() != self.data.len()
            || state.model.instance_ids().iter().zip(self.data).any(|(a, b)| *a != b.id)
        {
            return Err(MendError::Data(
                "training state latents do not match the training instances".into(),
            ));
        }
        Ok(())
    }

    fn batch(&self, seed: u64, step: u64) -> Vec<usize> {
        let n = self.data.len();
        let spe = steps_per_epoch(n, self.cfg.batch_instances);
        let (epoch, pos) = (step / spe, (step % spe) as usize);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, "epoch-order", epoch));
        let start = pos * self.cfg.batch_instances;
        order[start..(start + self.cfg.batch_instances).min(n)].to_vec()
    }

    fn one_step(&self, state: &mut TrainState) -> Result<LossValues> {
        let batch = self.batch(state.seed, state.step);
        let mut rng = substream(state.seed, "step", state.step);
        let mut sum = LossValues::default();
        let grads = {
            let mut tape = Tape::new(&state.model.store);
            let mut total: Option<Var> = None;
            for &i in &batch {
                let inst = &self.data[i];
                let n = inst.samples.len();
                let picks: Vec<usize> = (0..self.cfg.batch_points).map(|_| rng.random_range(0..n)).collect();
                let pts: Vec<[f32; 3]> = picks.iter().map(|&k| inst.samples.points[k]).collect();
                let o_c: Vec<u8> = picks.iter().map(|&k| inst.samples.o_c[k]).collect();
                let o_b: Vec<u8> = picks.iter().map(|&k| inst.samples.o_b[k]).collect();
                let x = tape.constant(points_tensor(&pts));
                let mut mode = Mode::Train {
                    rate: state.dropout,
                    rng: &mut rng,
                };
                let ctx = || format!("epoch {} instance {}", state.epoch(), inst.id);
                let pred = state
                    .model
                    .forward(&mut tape, i, x, &mut mode)
                    .map_err(|e| e.numeric_context(ctx()))?;
                let l = loss_terms(&mut tape, &pred, &o_c, &o_b).map_err(|e| e.numeric_context(ctx()))?;
                let v = LossValues::read(&tape, &l);
                if !v.total.is_finite() {
                    return Err(MendError::Numeric(format!("non-finite loss at {}", ctx())));
                }
                sum.add(&v);
                total = Some(match total {
                    None => l.total,
                    Some(t) => tape.add(t, l.total)?,
                });
            }
            let loss = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
            tape.backward(loss)?
        };
        state
            .adam
            .step(&mut state.model.store, &grads)
            .map_err(|e| MendError::Numeric(format!("step {}: {}", state.step, e)))?;
        state.step += 1;
        Ok(sum.scaled(1.0 / batch.len() as f64))
    }

    /// Trains until `until_step` (capped by the configured budget) or early
    /// stopping, calling `on_epoch` after each finished epoch.
    pub fn run(
        &self,
        state: &mut TrainState,
        until_step: u64,
        mut validator: Option<&mut Validator<'_>>,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<()> {
        self.check_state(state)?;
        let spe = steps_per_epoch(self.data.len(), self.cfg.batch_instances);
        let end = until_step.min(total_steps(self.cfg, self.data.len()));
        while state.step < end && !state.stopped {
            let started = Instant::now();
            let v = self.one_step(state)?;
            state.partial.add(&v);
            state.partial_steps += 1;
            state.wall_seconds += started.elapsed().as_secs_f64();
            if state.step % spe != 0 {
                continue;
            }
            let epoch = state.epoch();
            let mut log = EpochLog {
                epoch,
                losses: state.partial.scaled(1.0 / state.partial_steps as f64),
                val_cd: None,
                wall_seconds: 0.0,
            };
            state.partial = LossValues::default();
            state.partial_steps = 0;
            let due = self.cfg.val_period > 0 && (epoch + 1) % self.cfg.val_period == 0;
            if let (true, Some(validate)) = (due, validator.as_mut()) {
                let started = Instant::now();
                let cd = validate(&state.model)?;
                state.wall_seconds += started.elapsed().as_secs_f64();
                log.val_cd = Some(cd);
                if state.best.as_ref().is_none_or(|b| cd < b.cd) {
                    state.best = Some(Best {
                        cd,
                        epoch,
                        step: state.step,
                        model: state.model.clone(),
                    });
                    state.rounds_since_best = 0;
                } else {
                    state.rounds_since_best += 1;
                    if state.rounds_since_best >= self.cfg.patience {
                        info!("early stop after epoch {} (best CD {:.3e})", epoch, state.best.as_ref().map_or(f64::NAN, |b| b.cd));
                        state.stopped = true;
                    }
                }
            }
            log.wall_seconds = state.wall_seconds;
            state.history.push(log.clone());
            on_epoch(&log);
        }
        Ok(())
    }
}

/// Trains from scratch for the whole configured budget.
pub fn train_class(
    data: &[TrainInstance],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    validator: Option<&mut Validator<'_>>,
) -> Result<TrainState> {
    let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
    let mut state = TrainState::new(&ids, model_cfg, cfg, seed)?;
    Trainer::new(cfg, data)?.run(&mut state, u64::MAX, validator, |_| {})?;
    Ok(state)
}

pub const LOG_HEADER: &str = "epoch,L_C,L_B,L_F,L_R,total,val_CD,wall_seconds";

pub fn write_train_log(path: &Path, history: &[EpochLog]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{}", LOG_HEADER).expect("vec write");
    for h in history {
        let l = &h.losses;
        let cd = h.val_cd.map(|v| format!("{:e}", v)).unwrap_or_default();
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{},{:.3}",
            h.epoch, l.c, l.b, l.f, l.r, l.total, cd, h.wall_seconds
        )
        .expect("vec write");
    }
    fs::write(path, out).map_err(|e| MendError::io(path, e))
}
