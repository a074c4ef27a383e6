//! Model persistence: `checkpoint.json` with a layout table, `params.bin`
//! (network, layer order) and `latents.bin` (instance order, `z_C` then
//! `z_B`), all little-endian `f32`. Training state adds `adam.bin`.

use std::fs;
use std::path::Path;

use mendkit_autodiff::{Adam, Moments, ParamId, Tensor};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::error::{MendError, Result};
use crate::model::{Architecture, RestorationModel};

pub const CHECKPOINT_VERSION: u16 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const LATENTS_FILE: &str = "latents.bin";
pub const ADAM_FILE: &str = "adam.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f32` elements into `params.bin`.
    pub offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSummary {
    pub epochs: u64,
    pub first_total: Option<f64>,
    pub last_total: Option<f64>,
    pub min_total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u16,
    pub architecture: Architecture,
    pub dropout: f64,
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
    pub best_val_cd: Option<f64>,
    pub loss_history: LossSummary,
    pub layout: Vec<LayoutEntry>,
    pub instances: Vec<String>,
}

fn write_f32s(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| MendError::io(path, e))
}

fn read_f32s(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| MendError::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(MendError::Format {
            path: path.to_path_buf(),
            offset: bytes.len().min(expected * 4) as u64,
            message: format!("expected {} bytes, file has {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

fn network_ids(model: &RestorationModel<f32>) -> Vec<ParamId> {
    model.network_layers().flat_map(|l| [l.weight, l.bias]).collect()
}

pub fn save_checkpoint(
    dir: &Path,
    model: &RestorationModel<f32>,
    meta_base: CheckpointMeta,
) -> Result<CheckpointMeta> {
    fs::create_dir_all(dir).map_err(|e| MendError::io(dir, e))?;
    let mut layout = Vec::new();
    let mut offset = 0;
    for id in network_ids(model) {
        let t = model.store.get(id);
        layout.push(LayoutEntry {
            name: model.store.name(id).to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        architecture: model.arch,
        layout,
        instances: model.instance_ids().to_vec(),
        ..meta_base
    };
    let params = network_ids(model).into_iter().flat_map(|id| model.store.get(id).data().to_vec());
    write_f32s(&dir.join(PARAMS_FILE), params)?;
    let latents = (0..model.num_latents()).flat_map(|i| {
        let (c, b) = model.latent_values(i);
        c.data().iter().chain(b.data()).copied().collect::<Vec<_>>()
    });
    write_f32s(&dir.join(LATENTS_FILE), latents)?;
    write_json(&dir.join(CHECKPOINT_FILE), &meta)?;
    Ok(meta)
}

pub fn load_checkpoint(dir: &Path) -> Result<(RestorationModel<f32>, CheckpointMeta)> {
    let meta_path = dir.join(CHECKPOINT_FILE);
    if !meta_path.exists() {
        return Err(MendError::Data(format!("no checkpoint at {}", meta_path.display())));
    }
    let meta: CheckpointMeta = read_json(&meta_path)?;
    if meta.format_version != CHECKPOINT_VERSION {
        return Err(MendError::Data(format!(
            "{}: checkpoint version {} (expected {})",
            meta_path.display(),
            meta.format_version,
            CHECKPOINT_VERSION
        )));
    }
    let mut model = RestorationModel::<f32>::zeros(meta.architecture)?;
    let ids = network_ids(&model);
    if ids.len() != meta.layout.len() {
        return Err(MendError::Data(format!(
            "{}: layout lists {} tensors, architecture has {}",
            meta_path.display(),
            meta.layout.len(),
            ids.len()
        )));
    }
    let total = model.arch.network_params();
    let params = read_f32s(&dir.join(PARAMS_FILE), total)?;
    for (id, entry) in ids.into_iter().zip(&meta.layout) {
        let expected = model.store.get(id).shape().to_vec();
        if entry.name != model.store.name(id) || entry.shape != expected {
            return Err(MendError::Data(format!(
                "{}: layout entry {} {:?} does not match {} {:?}",
                meta_path.display(),
                entry.name,
                entry.shape,
                model.store.name(id),
                expected
            )));
        }
        let len: usize = expected.iter().product();
        let end = entry.offset + len;
        if end > params.len() {
            return Err(MendError::Data(format!("{}: layout entry {} past end", meta_path.display(), entry.name)));
        }
        model.store.set(id, Tensor::new(expected, params[entry.offset..end].to_vec())?)?;
    }
    let (dc, db) = (model.arch.latent_c, model.arch.latent_b);
    let latents = read_f32s(&dir.join(LATENTS_FILE), meta.instances.len() * (dc + db))?;
    for (i, id) in meta.instances.iter().enumerate() {
        let chunk = &latents[i * (dc + db)..(i + 1) * (dc + db)];
        let zc = Tensor::new(vec![1, dc], chunk[..dc].to_vec())?;
        let zb = Tensor::new(vec![1, db], chunk[dc..].to_vec())?;
        model.insert_latent(id, zc, zb)?;
    }
    Ok((model, meta))
}

/// Writes the optimizer moments of every parameter of `model`, in store
/// order: a `u64` step count (0 for no state) followed by both moment
/// arrays.
pub fn save_adam(path: &Path, model: &RestorationModel<f32>, adam: &Adam<f32>) -> Result<()> {
    let mut bytes = Vec::new();
    for id in model.store.ids() {
        match adam.moments(id) {
            Some(m) => {
                bytes.extend_from_slice(&m.step.to_le_bytes());
                for v in m.first.iter().chain(&m.second) {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => bytes.extend_from_slice(&0u64.to_le_bytes()),
        }
    }
    fs::write(path, bytes).map_err(|e| MendError::io(path, e))
}

pub fn load_adam(path: &Path, model: &RestorationModel<f32>, adam: &mut Adam<f32>) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| MendError::io(path, e))?;
    let mut pos = 0usize;
    let truncated = |pos: usize| MendError::Format {
        path: path.to_path_buf(),
        offset: pos as u64,
        message: "truncated optimizer state".into(),
    };
    for id in model.store.ids() {
        let step_bytes = bytes.get(pos..pos + 8).ok_or_else(|| truncated(pos))?;
        let step = u64::from_le_bytes(step_bytes.try_into().expect("8 bytes"));
        pos += 8;
        if step == 0 {
            continue;
        }
        let n = model.store.get(id).len();
        let body = bytes.get(pos..pos + 8 * n).ok_or_else(|| truncated(pos))?;
        let vals: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        pos += 8 * n;
        adam.set_moments(
            id,
            Moments {
                first: vals[..n].to_vec(),
                second: vals[n..].to_vec(),
                step,
            },
        );
    }
    if pos != bytes.len() {
        return Err(MendError::Format {
            path: path.to_path_buf(),
            offset: pos as u64,
            message: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    Ok(())
}

impl CheckpointMeta {
    /// Metadata skeleton; layout and instance list are filled in on save.
    pub fn new(arch: Architecture, dropout: f64, seed: u64) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            architecture: arch,
            dropout,
            seed,
            epoch: 0,
            step: 0,
            best_val_cd: None,
            loss_history: LossSummary::default(),
            layout: Vec::new(),
            instances: Vec::new(),
        }
    }
}
