//! Run configuration. Every section rejects unknown keys; omitted keys take
//! the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{MendError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Boxes,
    Mugs,
    Bottles,
}

impl ShapeClass {
    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Boxes => "boxes",
            ShapeClass::Mugs => "mugs",
            ShapeClass::Bottles => "bottles",
        }
    }
}

/// Removed-volume band of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    /// 5 to 20 percent removed.
    Low,
    /// 45 to 55 percent removed.
    High,
}

impl Band {
    pub fn range(self) -> (f64, f64) {
        match self {
            Band::Low => (0.05, 0.20),
            Band::High => (0.45, 0.55),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutKind {
    Plane,
    Ellipsoid,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub name: String,
    pub class: ShapeClass,
    pub count: usize,
    pub band: Band,
    pub n_uniform: usize,
    pub n_surface: usize,
    pub surface_sigma: f64,
    pub cut: CutKind,
    /// Monte Carlo points used to place each cut.
    pub fracture_samples: usize,
    /// Relative jitter of the class prototype dimensions.
    pub jitter: f64,
    /// Random spheres fused onto each mug as per-instance detail.
    pub knobs: usize,
    pub margin: f64,
    /// Train and validation shares; the test split takes the rest.
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            name: "dataset".into(),
            class: ShapeClass::Mugs,
            count: 240,
            band: Band::Low,
            n_uniform: 100_000,
            n_surface: 100_000,
            surface_sigma: 0.01,
            cut: CutKind::Plane,
            fracture_samples: 200_000,
            jitter: 0.15,
            knobs: 0,
            margin: 0.1,
            train_fraction: 0.70,
            val_fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_c: usize,
    pub latent_b: usize,
    pub width: usize,
    pub dropout: f64,
    pub latent_sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_c: 200,
            latent_b: 200,
            width: 512,
            dropout: 0.2,
            latent_sigma: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    /// Hard cap on optimizer steps; `None` means `epochs` alone decides.
    pub max_steps: Option<u64>,
    pub batch_instances: usize,
    pub batch_points: usize,
    pub lr_net: f64,
    pub lr_latent: f64,
    /// Validate every this many epochs; 0 disables validation.
    pub val_period: u64,
    /// Validation rounds without improvement before stopping.
    pub patience: u64,
    pub val_steps: u64,
    pub val_resolution: usize,
    pub val_surface_samples: usize,
    /// Also store a snapshot trained for `ttt.epochs` fewer steps, so the
    /// test-time-trained model gets the same total compute.
    pub fair_snapshot: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            max_steps: None,
            batch_instances: 8,
            batch_points: 4096,
            lr_net: 5e-4,
            lr_latent: 1e-3,
            val_period: 25,
            patience: 10,
            val_steps: 200,
            val_resolution: 64,
            val_surface_samples: 30_000,
            fair_snapshot: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub steps: u64,
    pub lr_latent: f64,
    pub lambda_nonempty: f64,
    pub min_restoration: f64,
    pub lambda_prox: f64,
    pub box_inflation: f64,
    /// Cap on fitting points per instance; 0 uses every available point.
    pub query_points: usize,
    /// Share of the observed points held out from fitting.
    pub holdout_fraction: f64,
    /// Points per latent step drawn from the fitting set; 0 uses all.
    pub batch_points: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            lr_latent: 1e-3,
            lambda_nonempty: 1.0,
            min_restoration: 0.01,
            lambda_prox: 0.5,
            box_inflation: 0.1,
            query_points: 16_384,
            holdout_fraction: 0.2,
            batch_points: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TttConfig {
    pub epochs: u64,
    pub alpha: f64,
    pub lr_net: f64,
    pub lr_latent: f64,
    pub tau: f64,
    /// Draw a fresh subset of the query set every epoch.
    pub resample: bool,
    /// Size of the resampled subset; 0 keeps the query set size.
    pub batch_points: usize,
    /// Extra query points jittered around the inferred complete surface,
    /// giving the pseudo-restoration support along its boundary.
    pub surface_points: usize,
    pub surface_sigma: f64,
}

impl Default for TttConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            alpha: 0.1,
            lr_net: 5e-4,
            lr_latent: 1e-3,
            tau: 0.5,
            resample: false,
            batch_points: 0,
            surface_points: 0,
            surface_sigma: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub resolution: usize,
    pub surface_samples: usize,
    pub curve_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            surface_samples: 30_000,
            curve_points: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub dims: Vec<usize>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            dims: vec![100, 200, 400],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub ttt: TttConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| MendError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MendError::io(path, e))?;
        Self::from_json(&text).map_err(|e| MendError::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `section.key=value`. The value is parsed as JSON when
    /// possible and taken as a string otherwise. Only the type is checked
    /// here; call [`RunConfig::validate`] after the last override so that
    /// settings which depend on each other can be changed one at a time.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| MendError::Config(format!("override `{}` is not key=value", assignment)))?;
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut doc;
        for key in path.trim().split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| MendError::Config(format!("unknown config key `{}`", path)))?;
        }
        *slot = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        let updated: RunConfig = serde_json::from_value(doc)
            .map_err(|e| MendError::Config(format!("override `{}`: {}", assignment, e)))?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(MendError::Config(m));
        let d = &self.data;
        if d.count == 0 {
            return err("data.count must be at least 1".into());
        }
        if d.n_uniform + d.n_surface == 0 {
            return err("data.n_uniform + data.n_surface must be at least 1".into());
        }
        if !(d.surface_sigma >= 0.0) || !(0.0..0.5).contains(&d.margin) || !(0.0..1.0).contains(&d.jitter) {
            return err("data.surface_sigma, data.margin or data.jitter out of range".into());
        }
        if d.knobs > 0 && d.class != ShapeClass::Mugs {
            return err("data.knobs requires data.class = mugs".into());
        }
        if !(d.train_fraction > 0.0 && d.val_fraction >= 0.0 && d.train_fraction + d.val_fraction <= 1.0) {
            return err("data split fractions must be positive and sum to at most 1".into());
        }
        let m = &self.model;
        if m.latent_c == 0 || m.latent_b == 0 || m.width == 0 {
            return err("model dimensions must be at least 1".into());
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return err(format!("model.dropout {} outside [0, 1)", m.dropout));
        }
        if !(m.latent_sigma > 0.0) {
            return err("model.latent_sigma must be positive".into());
        }
        let t = &self.train;
        if t.batch_instances == 0 || t.batch_points == 0 {
            return err("train batch sizes must be positive".into());
        }
        if !(t.lr_net > 0.0 && t.lr_latent > 0.0) {
            return err("train learning rates must be positive".into());
        }
        if t.patience == 0 || t.val_resolution < 2 || t.val_surface_samples == 0 {
            return err("train.patience, train.val_resolution or train.val_surface_samples too small".into());
        }
        let i = &self.infer;
        if !(i.lr_latent > 0.0) {
            return err("infer.lr_latent must be positive".into());
        }
        if !(i.lambda_nonempty >= 0.0 && i.lambda_prox >= 0.0 && i.min_restoration >= 0.0 && i.box_inflation >= 0.0) {
            return err("infer regularizer weights must be non-negative".into());
        }
        if !(0.0..1.0).contains(&i.holdout_fraction) {
            return err("infer.holdout_fraction outside [0, 1)".into());
        }
        let tt = &self.ttt;
        if !(tt.alpha >= 0.0) || !(tt.lr_net > 0.0 && tt.lr_latent > 0.0) || !(0.0..=1.0).contains(&tt.tau) || !(tt.surface_sigma >= 0.0) {
            return err("ttt.alpha, ttt learning rates, ttt.tau or ttt.surface_sigma out of range".into());
        }
        let e = &self.eval;
        if e.resolution < 2 || e.surface_samples == 0 || e.curve_points < 2 {
            return err("eval.resolution, eval.surface_samples or eval.curve_points too small".into());
        }
        if self.ablate.dims.iter().any(|&d| d == 0) {
            return err("ablate.dims entries must be positive".into());
        }
        Ok(())
    }
}
