//! Binary cross-entropy terms for the four occupancies and the inference
//! regularizer.

use mendkit_autodiff::{Real, Tape, Tensor, Var};
use mendkit_geometry::{Aabb, Point};

use crate::error::{MendError, Result};
use crate::model::Prediction;

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub c: Var,
    pub b: Var,
    pub f: Var,
    pub r: Var,
    pub total: Var,
}

/// Scalar values of the four terms and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossValues {
    pub c: f64,
    pub b: f64,
    pub f: f64,
    pub r: f64,
    pub total: f64,
}

impl LossValues {
    pub fn read<T: Real>(tape: &Tape<'_, T>, vars: &LossVars) -> Self {
        let v = |x: Var| tape.value(x).item().as_f64();
        Self {
            c: v(vars.c),
            b: v(vars.b),
            f: v(vars.f),
            r: v(vars.r),
            total: v(vars.total),
        }
    }

    pub fn add(&mut self, other: &LossValues) {
        self.c += other.c;
        self.b += other.b;
        self.f += other.f;
        self.r += other.r;
        self.total += other.total;
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            c: self.c * k,
            b: self.b * k,
            f: self.f * k,
            r: self.r * k,
            total: self.total * k,
        }
    }
}

pub fn label_tensor<T: Real>(labels: impl ExactSizeIterator<Item = u8>) -> Tensor<T> {
    let n = labels.len();
    let data = labels.map(|v| T::of(v as f64)).collect();
    Tensor::new(vec![n, 1], data).expect("column")
}

/// Mean BCE of each occupancy against its binary label; the fractured and
/// restoration labels are `o_C·o_B` and `o_C·(1 − o_B)`.
pub fn loss_terms<T: Real>(tape: &mut Tape<'_, T>, pred: &Prediction, o_c: &[u8], o_b: &[u8]) -> Result<LossVars> {
    let n = tape.value(pred.o_c).len();
    if o_c.len() != n || o_b.len() != n {
        return Err(MendError::Parameter(format!(
            "{} predictions but {} / {} labels",
            n,
            o_c.len(),
            o_b.len()
        )));
    }
    let pairs = || o_c.iter().zip(o_b);
    let c = tape.bce(pred.o_c, label_tensor(o_c.iter().copied()))?;
    let b = tape.bce(pred.o_b, label_tensor(o_b.iter().copied()))?;
    let f = tape.bce(pred.o_f, label_tensor(pairs().map(|(&c, &b)| c & b)))?;
    let r = tape.bce(pred.o_r, label_tensor(pairs().map(|(&c, &b)| c & (1 - b))))?;
    let cb = tape.add(c, b)?;
    let fr = tape.add(f, r)?;
    let total = tape.add(cb, fr)?;
    Ok(LossVars { c, b, f, r, total })
}

/// Weights of the inference regularizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegWeights {
    pub nonempty: f64,
    pub min_restoration: f64,
    pub proximity: f64,
}

/// `nonempty · max(0, m₀ − mean(o_R)) + proximity · mean(o_R · d)`, where
/// `d` holds each point's distance to the inflated box around the observed
/// fracture.
pub fn regularizer<T: Real>(tape: &mut Tape<'_, T>, o_r: Var, box_distance: &[f64], w: RegWeights) -> Result<Var> {
    let mean_r = tape.mean(o_r)?;
    let shortfall = tape.affine(mean_r, -1.0, w.min_restoration);
    let hinge = tape.relu(shortfall);
    let nonempty = tape.scale(hinge, w.nonempty);
    let d = Tensor::from_f64(tape.value(o_r).shape().to_vec(), box_distance)?;
    let weighted = tape.mul_const(o_r, d)?;
    let far = tape.mean(weighted)?;
    let prox = tape.scale(far, w.proximity);
    Ok(tape.add(nonempty, prox)?)
}

/// Box around the points labeled fractured, inflated by `by`.
pub fn fracture_box(points: &[[f32; 3]], o_f: &[u8], by: f64) -> Option<Aabb> {
    let occupied: Vec<Point> = points
        .iter()
        .zip(o_f)
        .filter(|(_, &l)| l == 1)
        .map(|(p, _)| Point::new(p[0] as f64, p[1] as f64, p[2] as f64))
        .collect();
    Aabb::from_points(&occupied).map(|b| b.inflate(by))
}

pub fn box_distances(points: &[[f32; 3]], bounds: &Aabb) -> Vec<f64> {
    points
        .iter()
        .map(|p| bounds.distance(&Point::new(p[0] as f64, p[1] as f64, p[2] as f64)))
        .collect()
}
