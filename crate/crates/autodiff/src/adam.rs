use crate::error::{AutodiffError, Result};
use crate::params::{GroupId, ParamId, ParamStore};
use crate::real::Real;
use crate::tape::Gradients;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub step: u64,
}

#[derive(Clone, Debug)]
struct GroupSettings {
    lr: Option<f64>,
    frozen: bool,
}

/// Adam with bias correction and per-group learning rates.
///
/// Moments are kept per parameter; a parameter absent from a step's
/// gradients is left untouched, including its step counter.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    groups: Vec<GroupSettings>,
    moments: Vec<Option<Moments<T>>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            groups: Vec::new(),
            moments: Vec::new(),
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    fn settings_mut(&mut self, group: GroupId) -> &mut GroupSettings {
        if self.groups.len() <= group.index() {
            self.groups.resize(
                group.index() + 1,
                GroupSettings {
                    lr: None,
                    frozen: false,
                },
            );
        }
        &mut self.groups[group.index()]
    }

    pub fn with_group_lr(mut self, group: GroupId, lr: f64) -> Self {
        self.set_group_lr(group, lr);
        self
    }

    pub fn set_group_lr(&mut self, group: GroupId, lr: f64) {
        self.settings_mut(group).lr = Some(lr);
    }

    pub fn group_lr(&self, group: GroupId) -> Option<f64> {
        self.groups.get(group.index()).and_then(|g| g.lr)
    }

    pub fn set_frozen(&mut self, group: GroupId, frozen: bool) {
        self.settings_mut(group).frozen = frozen;
    }

    pub fn moments(&self, id: ParamId) -> Option<&Moments<T>> {
        self.moments.get(id.index()).and_then(|m| m.as_ref())
    }

    /// Restores moments, e.g. when resuming from a checkpoint.
    pub fn set_moments(&mut self, id: ParamId, moments: Moments<T>) {
        if self.moments.len() <= id.index() {
            self.moments.resize(id.index() + 1, None);
        }
        self.moments[id.index()] = Some(moments);
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for (id, g) in grads.params() {
            if !g.is_finite() {
                return Err(AutodiffError::NonFiniteGradient {
                    name: params.name(id).to_string(),
                });
            }
            if g.shape() != params.get(id).shape() {
                return Err(AutodiffError::dim(
                    "adam",
                    format!("gradient {:?} for `{}` {:?}", g.shape(), params.name(id), params.get(id).shape()),
                ));
            }
        }
        if self.moments.len() < params.len() {
            self.moments.resize(params.len(), None);
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        for (id, g) in grads.params() {
            let group = params.group_of(id);
            let settings = self.groups.get(group.index());
            if settings.is_some_and(|s| s.frozen) {
                continue;
            }
            let lr = settings.and_then(|s| s.lr).ok_or_else(|| {
                AutodiffError::Parameter(format!(
                    "no learning rate for group `{}`",
                    params.group_name(group)
                ))
            })?;
            let p = params.get_mut(id);
            let state = self.moments[id.index()].get_or_insert_with(|| Moments {
                first: vec![T::zero(); p.len()],
                second: vec![T::zero(); p.len()],
                step: 0,
            });
            if state.first.len() != p.len() {
                return Err(AutodiffError::dim(
                    "adam",
                    format!("moment length {} vs parameter {}", state.first.len(), p.len()),
                ));
            }
            state.step += 1;
            let t = state.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            let step_size = T::of(lr / bc1);
            let bc2_sqrt = T::of(bc2.sqrt());
            let (b1, b2, e) = (T::of(beta1), T::of(beta2), T::of(eps));
            let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
            for (((w, &gv), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(state.first.iter_mut())
                .zip(state.second.iter_mut())
            {
                *m = b1 * *m + one_b1 * gv;
                *v = b2 * *v + one_b2 * gv * gv;
                let denom = v.sqrt() / bc2_sqrt + e;
                *w = *w - step_size * *m / denom;
            }
        }
        Ok(())
    }
}
