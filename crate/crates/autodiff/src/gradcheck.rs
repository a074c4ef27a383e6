use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so gradients that are zero up to
/// round-off are judged by their absolute error.
const REL_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ParamGradError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_abs_gradient: f64,
    pub checked: usize,
    /// Elements whose ±h evaluations switched a ReLU or clamp branch.
    pub skipped_kinks: usize,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamGradError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_abs_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped_kinks).sum()
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    pub fn worst(&self) -> Option<&ParamGradError> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn evaluate<F>(store: &ParamStore<f64>, loss_fn: &F) -> Result<(f64, Option<u64>)>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    tape.track_kinks();
    let loss = loss_fn(&mut tape)?;
    Ok((tape.value(loss).item(), tape.kink_signature()))
}

/// Compares tape gradients of every parameter in `store` against central
/// finite differences of the scalar built by `loss_fn`.
///
/// `loss_fn` must be deterministic: it is re-run for every perturbed
/// element.
pub fn grad_check<F>(store: &ParamStore<f64>, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };
    let (_, base_signature) = evaluate(store, &loss_fn)?;

    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    for id in store.ids() {
        let n = store.get(id).len();
        let mut entry = ParamGradError {
            name: store.name(id).to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            max_abs_gradient: 0.0,
            checked: 0,
            skipped_kinks: 0,
        };
        for k in 0..n {
            let original = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = original + FD_STEP;
            let (plus, sig_plus) = evaluate(&work, &loss_fn)?;
            work.get_mut(id).data_mut()[k] = original - FD_STEP;
            let (minus, sig_minus) = evaluate(&work, &loss_fn)?;
            work.get_mut(id).data_mut()[k] = original;

            if sig_plus != base_signature || sig_minus != base_signature {
                entry.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let tape_grad = analytic.param(id).map_or(0.0, |g| g.data()[k]);
            let abs = (tape_grad - numeric).abs();
            let rel = abs / tape_grad.abs().max(numeric.abs()).max(REL_FLOOR);
            entry.max_abs_error = entry.max_abs_error.max(abs);
            entry.max_rel_error = entry.max_rel_error.max(rel);
            entry.max_abs_gradient = entry.max_abs_gradient.max(tape_grad.abs());
            entry.checked += 1;
        }
        report.params.push(entry);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tape::OpKind;
    use crate::tensor::Tensor;
    use rand::Rng;

    fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn two_layer(seed: u64) -> (ParamStore<f64>, Tensor<f64>, Tensor<f64>) {
        let mut r = rng::stream(seed, "gradcheck-test");
        let mut store = ParamStore::new();
        let g = store.group("net");
        store.insert("w0", g, random_tensor(&[3, 5], &mut r));
        store.insert("b0", g, random_tensor(&[5], &mut r));
        store.insert("w1", g, random_tensor(&[5, 1], &mut r));
        store.insert("b1", g, random_tensor(&[1], &mut r));
        let x = random_tensor(&[4, 3], &mut r);
        let t = Tensor::new(vec![4, 1], (0..4).map(|i| (i % 2) as f64).collect()).unwrap();
        (store, x, t)
    }

    fn decoder_loss<'p>(tape: &mut Tape<'p, f64>, x: &Tensor<f64>, t: &Tensor<f64>) -> Result<Var> {
        let ids: Vec<_> = tape.params().ids().collect();
        let (w0, b0, w1, b1) = (tape.param(ids[0]), tape.param(ids[1]), tape.param(ids[2]), tape.param(ids[3]));
        let xi = tape.constant(x.clone());
        let h = tape.linear(xi, w0, b0)?;
        let h = tape.relu(h);
        let o = tape.linear(h, w1, b1)?;
        let p = tape.sigmoid(o);
        tape.bce(p, t.clone())
    }

    #[test]
    fn two_layer_decoder_passes() {
        let (store, x, t) = two_layer(3);
        let report = grad_check(&store, |tape| decoder_loss(tape, &x, &t)).unwrap();
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
        assert!(report.checked() > 0);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let (store, _, _) = two_layer(4);
        let report = grad_check(&store, |tape| {
            let ids: Vec<_> = tape.params().ids().collect();
            let w = tape.param(ids[0]);
            let z = tape.scale(w, 0.0);
            let c = tape.affine(z, 1.0, 3.0);
            tape.mean(c)
        })
        .unwrap();
        assert!(report.max_abs_error() < 1e-10);
        assert!(report.params.iter().all(|p| p.max_abs_gradient < 1e-10));
    }

    #[test]
    fn corrupted_rule_is_detected() {
        let (store, x, t) = two_layer(5);
        let report = grad_check(&store, |tape| {
            tape.inject_fault(OpKind::Sigmoid, 1.5);
            decoder_loss(tape, &x, &t)
        })
        .unwrap();
        assert!(report.max_rel_error() > 1e-4);
    }
}
