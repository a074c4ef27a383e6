//! Dataset generation and the on-disk format: `manifest.json`, one binary
//! sample file and one OBJ mesh per instance.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use mendkit_autodiff::rng::substream;
use mendkit_geometry::{read_obj, write_obj, MeshOccupancy, TriangleMesh};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{Band, DataConfig, ShapeClass};
use crate::error::{MendError, Result};
use crate::fracture::{fracture, BreakSet};
use crate::parallel;
use crate::samples::{sample_points, OccupancySampleSet};
use crate::shapes::gen_class_with_knobs;

pub const MAGIC: &[u8; 4] = b"OCCS";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: u64 = 16;
pub const RECORD_BYTES: u64 = 16;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Largest share of a class that may be skipped for failed fractures.
pub const MAX_SKIPPED_SHARE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub id: String,
    pub split: Split,
    pub samples: String,
    pub mesh: String,
    pub n_uniform: usize,
    pub n_surface: usize,
    pub measured_fraction: f64,
    pub break_set: BreakSet,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u16,
    pub name: String,
    pub class: ShapeClass,
    pub band: Band,
    pub band_range: [f64; 2],
    pub seed: u64,
    pub splits: Splits,
    pub instances: Vec<InstanceEntry>,
    pub skipped: Vec<String>,
}

impl DatasetManifest {
    pub fn entry(&self, id: &str) -> Option<&InstanceEntry> {
        self.instances.iter().find(|e| e.id == id)
    }

    pub fn split_ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.splits.train,
            Split::Val => &self.splits.val,
            Split::Test => &self.splits.test,
        }
    }
}

/// Writes one sample file: 16-byte header, then 16-byte records.
pub fn write_samples(path: &Path, set: &OccupancySampleSet) -> Result<()> {
    let file = File::create(path).map_err(|e| MendError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_BYTES as usize);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&0u16.to_le_bytes());
    header.extend_from_slice(&(set.len() as u64).to_le_bytes());
    let mut body = Vec::with_capacity(set.len() * RECORD_BYTES as usize);
    for i in 0..set.len() {
        for v in set.points[i] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body.extend_from_slice(&[set.o_c[i], set.o_b[i], 0, 0]);
    }
    w.write_all(&header)
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| MendError::io(path, e))
}

/// Reads a sample file; `n_uniform` comes from the manifest.
pub fn read_samples(path: &Path, n_uniform: usize) -> Result<OccupancySampleSet> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| MendError::io(path, e))?;
    let fmt = |offset: u64, message: String| MendError::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if (bytes.len() as u64) < HEADER_BYTES {
        return Err(fmt(
            0,
            format!("expected a {}-byte header, file has {} bytes", HEADER_BYTES, bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fmt(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(fmt(4, format!("format version {} (expected {})", version, FORMAT_VERSION)));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let expected = count
        .checked_mul(RECORD_BYTES)
        .and_then(|b| b.checked_add(HEADER_BYTES))
        .ok_or_else(|| fmt(8, format!("record count {} overflows", count)))?;
    if bytes.len() as u64 != expected {
        return Err(fmt(
            bytes.len().min(expected as usize) as u64,
            format!(
                "expected {} bytes for {} records, file has {}",
                expected,
                count,
                bytes.len()
            ),
        ));
    }
    if n_uniform as u64 > count {
        return Err(fmt(8, format!("{} uniform points but only {} records", n_uniform, count)));
    }
    let mut set = OccupancySampleSet {
        points: Vec::with_capacity(count as usize),
        o_c: Vec::with_capacity(count as usize),
        o_b: Vec::with_capacity(count as usize),
        n_uniform,
    };
    for (i, rec) in bytes[HEADER_BYTES as usize..].chunks_exact(RECORD_BYTES as usize).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        let (c, b) = (rec[12], rec[13]);
        if c > 1 || b > 1 {
            return Err(fmt(
                HEADER_BYTES + i as u64 * RECORD_BYTES + 12,
                format!("non-binary labels ({}, {})", c, b),
            ));
        }
        set.points.push([f(0), f(1), f(2)]);
        set.o_c.push(c);
        set.o_b.push(b);
    }
    Ok(set)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| MendError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| MendError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| MendError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| MendError::json(path, e))
}

/// One generated instance, held in memory.
#[derive(Clone, Debug)]
pub struct Instance {
    pub id: String,
    pub mesh: TriangleMesh,
    pub break_set: BreakSet,
    pub measured_fraction: f64,
    pub samples: OccupancySampleSet,
}

fn make_instance(cfg: &DataConfig, seed: u64, index: usize) -> Result<Instance> {
    let id = format!("{}-{:04}", cfg.class.name(), index);
    let mut rng = substream(seed, "instance", index as u64);
    let mesh = gen_class_with_knobs(cfg.class, 1, cfg.jitter, cfg.margin, cfg.knobs, &mut rng)?.remove(0);
    let occ = MeshOccupancy::new(&mesh, &mut rng)?;
    let fr = fracture(&mesh, &occ, cfg.band.range(), cfg.cut, cfg.fracture_samples, &mut rng)?;
    let samples = sample_points(
        &mesh,
        &occ,
        &fr.break_set,
        cfg.n_uniform,
        cfg.n_surface,
        cfg.surface_sigma,
        &mut rng,
    )?;
    samples.validate()?;
    Ok(Instance {
        id,
        mesh,
        break_set: fr.break_set,
        measured_fraction: fr.fraction,
        samples,
    })
}

/// Split sizes for `n` instances: rounded train and validation shares, the
/// test split takes the remainder.
pub fn split_sizes(n: usize, train: f64, val: f64) -> (usize, usize, usize) {
    let n_train = ((n as f64 * train).round() as usize).min(n);
    let n_val = ((n as f64 * val).round() as usize).min(n - n_train);
    (n_train, n_val, n - n_train - n_val)
}

/// Generates every instance of a class. Instances whose fracture fails are
/// logged and skipped; more than a tenth skipped is an error.
pub fn generate(cfg: &DataConfig, seed: u64, jobs: usize) -> Result<(DatasetManifest, Vec<Instance>)> {
    let indices: Vec<usize> = (0..cfg.count).collect();
    let results = parallel::map(jobs, &indices, |&i| make_instance(cfg, seed, i));
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(inst) => instances.push(inst),
            Err(e @ (MendError::Fracture(_) | MendError::Data(_))) => {
                warn!("skipping instance {}: {}", i, e);
                skipped.push(format!("{}-{:04}", cfg.class.name(), i));
            }
            Err(e) => return Err(e),
        }
    }
    if skipped.len() as f64 > MAX_SKIPPED_SHARE * cfg.count as f64 {
        return Err(MendError::Data(format!(
            "{} of {} instances could not be fractured",
            skipped.len(),
            cfg.count
        )));
    }
    let (n_train, n_val, _) = split_sizes(instances.len(), cfg.train_fraction, cfg.val_fraction);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut substream(seed, "split", 0));
    let mut split_of = vec![Split::Test; instances.len()];
    for (rank, &i) in order.iter().enumerate() {
        split_of[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut splits = Splits::default();
    let entries = instances
        .iter()
        .zip(&split_of)
        .map(|(inst, &split)| {
            match split {
                Split::Train => splits.train.push(inst.id.clone()),
                Split::Val => splits.val.push(inst.id.clone()),
                Split::Test => splits.test.push(inst.id.clone()),
            }
            InstanceEntry {
                id: inst.id.clone(),
                split,
                samples: format!("samples/{}.occs", inst.id),
                mesh: format!("meshes/{}.obj", inst.id),
                n_uniform: inst.samples.n_uniform,
                n_surface: inst.samples.len() - inst.samples.n_uniform,
                measured_fraction: inst.measured_fraction,
                break_set: inst.break_set.clone(),
            }
        })
        .collect();
    let (lo, hi) = cfg.band.range();
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        name: cfg.name.clone(),
        class: cfg.class,
        band: cfg.band,
        band_range: [lo, hi],
        seed,
        splits,
        instances: entries,
        skipped,
    };
    info!(
        "generated {} instances ({} train / {} val / {} test)",
        manifest.instances.len(),
        manifest.splits.train.len(),
        manifest.splits.val.len(),
        manifest.splits.test.len()
    );
    Ok((manifest, instances))
}

pub fn write_dataset(root: &Path, manifest: &DatasetManifest, instances: &[Instance]) -> Result<()> {
    for dir in ["samples", "meshes"] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| MendError::io(&d, e))?;
    }
    for inst in instances {
        let entry = manifest
            .entry(&inst.id)
            .ok_or_else(|| MendError::Data(format!("instance {} missing from manifest", inst.id)))?;
        write_samples(&root.join(&entry.samples), &inst.samples)?;
        let mesh_path = root.join(&entry.mesh);
        let file = File::create(&mesh_path).map_err(|e| MendError::io(&mesh_path, e))?;
        write_obj(BufWriter::new(file), &inst.mesh)?;
    }
    write_json(&root.join(MANIFEST_FILE), manifest)
}

/// Read access to a dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(MendError::Data(format!("no dataset manifest at {}", path.display())));
        }
        let manifest: DatasetManifest = read_json(&path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(MendError::Data(format!(
                "{}: format version {} (expected {})",
                path.display(),
                manifest.format_version,
                FORMAT_VERSION
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    fn entry(&self, id: &str) -> Result<&InstanceEntry> {
        self.manifest
            .entry(id)
            .ok_or_else(|| MendError::Data(format!("unknown instance `{}`", id)))
    }

    pub fn samples(&self, id: &str) -> Result<OccupancySampleSet> {
        let e = self.entry(id)?;
        let set = read_samples(&self.root.join(&e.samples), e.n_uniform)?;
        if set.len() != e.n_uniform + e.n_surface {
            return Err(MendError::Data(format!(
                "{}: {} records, manifest says {}",
                e.samples,
                set.len(),
                e.n_uniform + e.n_surface
            )));
        }
        Ok(set)
    }

    pub fn mesh(&self, id: &str) -> Result<TriangleMesh> {
        let e = self.entry(id)?;
        let path = self.root.join(&e.mesh);
        let file = File::open(&path).map_err(|err| MendError::io(&path, err))?;
        Ok(read_obj(BufReader::new(file))?)
    }

    pub fn break_set(&self, id: &str) -> Result<&BreakSet> {
        Ok(&self.entry(id)?.break_set)
    }

    pub fn ids(&self, split: Split) -> &[String] {
        self.manifest.split_ids(split)
    }
}
