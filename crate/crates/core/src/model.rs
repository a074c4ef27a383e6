//! Twin occupancy decoders. `f` predicts the complete shape from
//! `x ⊕ z_C`, `g` the break set from `x ⊕ z_B`; the fractured and
//! restoration occupancies are `o_F = o_C·o_B` and `o_R = o_C·(1 − o_B)`.

use mendkit_autodiff::{GroupId, ParamId, ParamStore, Real, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{MendError, Result};

pub const DEPTH: usize = 8;
/// The complete decoder re-injects `(z_C, x)` after this many layers.
pub const SKIP_AFTER: usize = 4;
pub const NET_GROUP: &str = "net";
pub const LATENT_GROUP: &str = "latent";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub latent_c: usize,
    pub latent_b: usize,
    pub width: usize,
}

impl Architecture {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            latent_c: cfg.latent_c,
            latent_b: cfg.latent_b,
            width: cfg.width,
        }
    }

    /// `(fan_in, fan_out)` of every layer of the complete decoder.
    pub fn complete_layers(&self) -> Vec<(usize, usize)> {
        let w = self.width;
        (0..DEPTH)
            .map(|i| match i {
                0 => (3 + self.latent_c, w),
                SKIP_AFTER => (w + self.latent_c + 3, w),
                i if i == DEPTH - 1 => (w, 1),
                _ => (w, w),
            })
            .collect()
    }

    pub fn break_layers(&self) -> Vec<(usize, usize)> {
        let w = self.width;
        (0..DEPTH)
            .map(|i| match i {
                0 => (3 + self.latent_b, w),
                i if i == DEPTH - 1 => (w, 1),
                _ => (w, w),
            })
            .collect()
    }

    /// Width of the activation entering the first post-skip layer.
    pub fn skip_width(&self) -> usize {
        self.width + self.latent_c + 3
    }

    pub fn network_params(&self) -> usize {
        self.complete_layers()
            .into_iter()
            .chain(self.break_layers())
            .map(|(i, o)| i * o + o)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layer {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentIds {
    pub c: ParamId,
    pub b: ParamId,
}

/// Network parameters plus one latent pair per instance, in one store
/// whose insertion order is: complete-decoder layers, break-decoder layers,
/// then latents in instance order.
#[derive(Clone, Debug)]
pub struct RestorationModel<T> {
    pub arch: Architecture,
    pub store: ParamStore<T>,
    pub net: GroupId,
    pub latent: GroupId,
    complete: Vec<Layer>,
    brk: Vec<Layer>,
    latents: Vec<LatentIds>,
    instance_ids: Vec<String>,
}

/// Symbolic outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub o_c: Var,
    pub o_b: Var,
    pub o_f: Var,
    pub o_r: Var,
}

/// Dropout setting of a forward pass.
pub enum Mode<'r, R: Rng + ?Sized> {
    Eval,
    Train { rate: f64, rng: &'r mut R },
}

impl Mode<'static, rand::rngs::ThreadRng> {
    pub fn eval() -> Self {
        Mode::Eval
    }
}

/// Uniform bound for Kaiming initialization of ReLU layers.
pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

impl<T: Real> RestorationModel<T> {
    /// Fresh network with Kaiming-uniform weights and zero biases, and no
    /// latents.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        Self::build(arch, |fan_in, len| {
            let bound = kaiming_bound(fan_in);
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        })
    }

    /// Network with every weight and bias zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        Self::build(arch, |_, len| vec![0.0; len])
    }

    fn build(arch: Architecture, mut weights: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        if arch.latent_c == 0 || arch.latent_b == 0 || arch.width == 0 {
            return Err(MendError::Parameter("model dimensions must be at least 1".into()));
        }
        let mut store = ParamStore::new();
        let net = store.group(NET_GROUP);
        let latent = store.group(LATENT_GROUP);
        let mut make = |prefix: &str, layers: Vec<(usize, usize)>| -> Vec<Layer> {
            layers
                .into_iter()
                .enumerate()
                .map(|(i, (fan_in, fan_out))| {
                    let w = weights(fan_in, fan_in * fan_out);
                    let weight = store.insert(
                        format!("{}.{}.weight", prefix, i),
                        net,
                        Tensor::from_f64(vec![fan_in, fan_out], &w).expect("shape"),
                    );
                    let bias = store.insert(format!("{}.{}.bias", prefix, i), net, Tensor::zeros(&[fan_out]));
                    Layer { weight, bias }
                })
                .collect()
        };
        let complete = make("complete", arch.complete_layers());
        let brk = make("break", arch.break_layers());
        Ok(Self {
            arch,
            store,
            net,
            latent,
            complete,
            brk,
            latents: Vec::new(),
            instance_ids: Vec::new(),
        })
    }

    /// Appends a latent pair with entries drawn from `Normal(0, sigma²)`.
    pub fn add_latent<R: Rng + ?Sized>(&mut self, id: &str, sigma: f64, rng: &mut R) -> Result<usize> {
        let normal = Normal::new(0.0, sigma).map_err(|e| MendError::Parameter(format!("latent sigma: {}", e)))?;
        if !(sigma > 0.0) {
            return Err(MendError::Parameter("latent sigma must be positive".into()));
        }
        let mut draw = |d: usize| -> Tensor<T> {
            let v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
            Tensor::from_f64(vec![1, d], &v).expect("shape")
        };
        let zc = draw(self.arch.latent_c);
        let zb = draw(self.arch.latent_b);
        self.insert_latent(id, zc, zb)
    }

    pub fn insert_latent(&mut self, id: &str, zc: Tensor<T>, zb: Tensor<T>) -> Result<usize> {
        if zc.shape() != [1, self.arch.latent_c] || zb.shape() != [1, self.arch.latent_b] {
            return Err(MendError::Data(format!(
                "latent shapes {:?}/{:?} do not match the architecture",
                zc.shape(),
                zb.shape()
            )));
        }
        let c = self.store.insert(format!("latent.{}.c", id), self.latent, zc);
        let b = self.store.insert(format!("latent.{}.b", id), self.latent, zb);
        self.latents.push(LatentIds { c, b });
        self.instance_ids.push(id.to_string());
        Ok(self.latents.len() - 1)
    }

    /// Copy of the network with no latents.
    pub fn network_only(&self) -> Self {
        let mut store = ParamStore::new();
        let net = store.group(NET_GROUP);
        let latent = store.group(LATENT_GROUP);
        let mut copy = |layers: &[Layer]| -> Vec<Layer> {
            layers
                .iter()
                .map(|l| Layer {
                    weight: store.insert(self.store.name(l.weight), net, self.store.get(l.weight).clone()),
                    bias: store.insert(self.store.name(l.bias), net, self.store.get(l.bias).clone()),
                })
                .collect()
        };
        let complete = copy(&self.complete);
        let brk = copy(&self.brk);
        Self {
            arch: self.arch,
            store,
            net,
            latent,
            complete,
            brk,
            latents: Vec::new(),
            instance_ids: Vec::new(),
        }
    }

    pub fn cast<U: Real>(&self) -> RestorationModel<U> {
        RestorationModel {
            arch: self.arch,
            store: self.store.cast(),
            net: self.net,
            latent: self.latent,
            complete: self.complete.clone(),
            brk: self.brk.clone(),
            latents: self.latents.clone(),
            instance_ids: self.instance_ids.clone(),
        }
    }

    pub fn complete_layers(&self) -> &[Layer] {
        &self.complete
    }

    pub fn break_layers(&self) -> &[Layer] {
        &self.brk
    }

    pub fn network_layers(&self) -> impl Iterator<Item = &Layer> {
        self.complete.iter().chain(&self.brk)
    }

    pub fn num_latents(&self) -> usize {
        self.latents.len()
    }

    pub fn latent_ids(&self, index: usize) -> LatentIds {
        self.latents[index]
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn latent_index(&self, id: &str) -> Option<usize> {
        self.instance_ids.iter().position(|s| s == id)
    }

    pub fn latent_values(&self, index: usize) -> (&Tensor<T>, &Tensor<T>) {
        let l = self.latents[index];
        (self.store.get(l.c), self.store.get(l.b))
    }

    pub fn param_count(&self) -> usize {
        self.store.num_scalars()
    }

    fn decoder<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        layers: &[Layer],
        name: &str,
        x: Var,
        z: Var,
        skip: bool,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let rows = tape.value(x).rows();
        let z_rows = tape.repeat_rows(z, rows)?;
        let input = tape.concat(x, z_rows)?;
        let mut h = input;
        for (i, layer) in layers.iter().enumerate() {
            if skip && i == SKIP_AFTER {
                let zx = tape.concat(z_rows, x)?;
                h = tape.concat(h, zx)?;
            }
            let (w, b) = (tape.param(layer.weight), tape.param(layer.bias));
            h = tape
                .linear(h, w, b)
                .map_err(|e| MendError::Numeric(format!("{} decoder layer {}: {}", name, i, e)))?;
            if i + 1 < layers.len() {
                h = tape.relu(h);
                if let Mode::Train { rate, rng } = mode {
                    h = tape.dropout(h, *rate, true, &mut **rng)?;
                }
            }
        }
        Ok(tape.sigmoid(h))
    }

    /// Records both decoders for latent pair `index` on points `x` (an
    /// `N x 3` tape value) and composes the four occupancies.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        index: usize,
        x: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Prediction> {
        let l = self.latents[index];
        let (zc, zb) = (tape.param(l.c), tape.param(l.b));
        let o_c = self.decoder(tape, &self.complete, "complete", x, zc, true, mode)?;
        let o_b = self.decoder(tape, &self.brk, "break", x, zb, false, mode)?;
        let o_f = tape.mul(o_c, o_b)?;
        let not_b = tape.one_minus(o_b);
        let o_r = tape.mul(o_c, not_b)?;
        Ok(Prediction { o_c, o_b, o_f, o_r })
    }
}

/// Point coordinates as an `N x 3` tensor.
pub fn points_tensor<T: Real>(points: &[[f32; 3]]) -> Tensor<T> {
    let data = points.iter().flat_map(|p| p.iter().map(|&v| T::of(v as f64))).collect();
    Tensor::new(vec![points.len(), 3], data).expect("N x 3")
}

/// Eval-mode occupancies at a set of points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Occupancies {
    pub o_c: Vec<f64>,
    pub o_b: Vec<f64>,
    pub o_f: Vec<f64>,
    pub o_r: Vec<f64>,
}

/// Rows evaluated per forward pass when predicting.
pub const PREDICT_CHUNK: usize = 8192;

impl<T: Real> RestorationModel<T> {
    /// Eval-mode prediction, chunked to bound memory.
    pub fn predict(&self, index: usize, points: &[[f32; 3]]) -> Result<Occupancies> {
        let mut out = Occupancies::default();
        for chunk in points.chunks(PREDICT_CHUNK) {
            let mut tape = Tape::new(&self.store);
            let x = tape.constant(points_tensor(chunk));
            let p = self.forward(&mut tape, index, x, &mut Mode::eval())?;
            out.o_c.extend(tape.value(p.o_c).to_f64_vec());
            out.o_b.extend(tape.value(p.o_b).to_f64_vec());
            out.o_f.extend(tape.value(p.o_f).to_f64_vec());
            out.o_r.extend(tape.value(p.o_r).to_f64_vec());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mendkit_autodiff::rng::stream;

    fn small() -> Architecture {
        Architecture {
            latent_c: 5,
            latent_b: 4,
            width: 7,
        }
    }

    #[test]
    fn reference_dimensions() {
        let arch = Architecture {
            latent_c: 200,
            latent_b: 200,
            width: 512,
        };
        assert_eq!(arch.skip_width(), 715);
        assert_eq!(arch.complete_layers()[SKIP_AFTER], (715, 512));
        let total = arch.network_params();
        let rel = (total as f64 - 3_206_652.0).abs() / 3_206_652.0;
        assert!(rel < 0.10, "{} ({:.3})", total, rel);
    }

    #[test]
    fn init_is_seeded_and_counted() {
        let a = RestorationModel::<f32>::init(small(), &mut stream(1, "init")).unwrap();
        let b = RestorationModel::<f32>::init(small(), &mut stream(1, "init")).unwrap();
        for (x, y) in a.network_layers().zip(b.network_layers()) {
            assert_eq!(a.store.get(x.weight), b.store.get(y.weight));
        }
        assert_eq!(a.param_count(), small().network_params());
        assert!(a.network_layers().all(|l| a.store.get(l.bias).data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn fresh_model_on_zero_input_is_in_range() {
        let mut rng = stream(2, "init");
        let mut m = RestorationModel::<f32>::init(small(), &mut rng).unwrap();
        m.add_latent("a", 0.01, &mut rng).unwrap();
        let p = m.predict(0, &[[0.0; 3]; 4]).unwrap();
        for v in p.o_c.iter().chain(&p.o_b).chain(&p.o_f).chain(&p.o_r) {
            assert!(v.is_finite() && *v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn network_copy_drops_latents() {
        let mut rng = stream(3, "init");
        let mut m = RestorationModel::<f32>::init(small(), &mut rng).unwrap();
        m.add_latent("a", 0.01, &mut rng).unwrap();
        let n = m.network_only();
        assert_eq!(n.num_latents(), 0);
        assert_eq!(n.param_count(), small().network_params());
        assert!(m.add_latent("b", 0.0, &mut rng).is_err());
    }
}
