//! Finite-difference checks of every differentiable tape operation.

use mendkit_autodiff::{grad_check, rng, ParamStore, Result, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], rng: &mut impl Rng, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in `[-hi, -margin] ∪ [margin, hi]`, so ReLU kinks stay out of reach.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng, margin: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(margin..hi);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn ids(tape: &Tape<'_, f64>) -> Vec<mendkit_autodiff::ParamId> {
    tape.params().ids().collect()
}

/// Weighted sum so every output element gets a distinct upstream gradient.
fn weighted_mean(tape: &mut Tape<'_, f64>, v: Var) -> Result<Var> {
    let n = tape.value(v).len();
    let shape = tape.value(v).shape().to_vec();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let p = tape.mul_const(v, w)?;
    tape.mean(p)
}

#[test]
fn linear_gradient_matches_finite_differences() {
    let mut r = rng::stream(11, "linear");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("x", g, random(&[3, 2], &mut r, -1.0, 1.0));
    store.insert("w", g, random(&[2, 2], &mut r, -1.0, 1.0));
    store.insert("b", g, random(&[2], &mut r, -1.0, 1.0));
    let report = grad_check(&store, |t| {
        let i = ids(t);
        let (x, w, b) = (t.param(i[0]), t.param(i[1]), t.param(i[2]));
        let y = t.linear(x, w, b)?;
        t.mean(y)
    })
    .unwrap();
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn relu_gradient_matches_finite_differences() {
    let mut r = rng::stream(12, "relu");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("x", g, away_from_zero(&[4, 5], &mut r, 1e-3, 2.0));
    let report = grad_check(&store, |t| {
        let x = t.param(ids(t)[0]);
        let y = t.relu(x);
        weighted_mean(t, y)
    })
    .unwrap();
    assert_eq!(report.skipped(), 0);
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn sigmoid_gradient_matches_finite_differences() {
    let mut r = rng::stream(13, "sigmoid");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("x", g, random(&[3, 4], &mut r, -6.0, 6.0));
    let report = grad_check(&store, |t| {
        let x = t.param(ids(t)[0]);
        let y = t.sigmoid(x);
        weighted_mean(t, y)
    })
    .unwrap();
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn concat_gradient_reaches_both_operands() {
    let mut r = rng::stream(14, "concat");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("a", g, random(&[3, 2], &mut r, -1.0, 1.0));
    store.insert("b", g, random(&[3, 4], &mut r, -1.0, 1.0));
    let report = grad_check(&store, |t| {
        let i = ids(t);
        let (a, b) = (t.param(i[0]), t.param(i[1]));
        let c = t.concat(a, b)?;
        weighted_mean(t, c)
    })
    .unwrap();
    assert_eq!(report.params.len(), 2);
    assert!(report.params.iter().all(|p| p.max_abs_gradient > 0.0));
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut r = rng::stream(15, "bce");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("p", g, random(&[6], &mut r, 0.05, 0.95));
    let target = random(&[6], &mut r, 0.0, 1.0);
    let report = grad_check(&store, |t| {
        let p = t.param(ids(t)[0]);
        t.bce(p, target.clone())
    })
    .unwrap();
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn broadcast_product_and_affine_gradients() {
    let mut r = rng::stream(16, "misc");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("z", g, random(&[1, 3], &mut r, -1.0, 1.0));
    store.insert("a", g, random(&[4, 3], &mut r, -1.0, 1.0));
    let report = grad_check(&store, |t| {
        let i = ids(t);
        let (z, a) = (t.param(i[0]), t.param(i[1]));
        let zr = t.repeat_rows(z, 4)?;
        let p = t.mul(zr, a)?;
        let q = t.one_minus(p);
        let s = t.add(q, a)?;
        weighted_mean(t, s)
    })
    .unwrap();
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn dropout_gradient_uses_the_same_mask() {
    let mut r = rng::stream(17, "dropout");
    let mut store = ParamStore::new();
    let g = store.group("p");
    store.insert("x", g, random(&[5, 4], &mut r, -1.0, 1.0));
    let report = grad_check(&store, |t| {
        let x = t.param(ids(t)[0]);
        let mut mask_rng = rng::stream(99, "mask");
        let y = t.dropout(x, 0.3, true, &mut mask_rng)?;
        weighted_mean(t, y)
    })
    .unwrap();
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn small_mlp_gradients_hold_for_random_seeds(seed in any::<u64>()) {
        let mut r = rng::stream(seed, "mlp");
        let mut store = ParamStore::new();
        let g = store.group("p");
        store.insert("w0", g, random(&[3, 6], &mut r, -1.0, 1.0));
        store.insert("b0", g, random(&[6], &mut r, -0.5, 0.5));
        store.insert("w1", g, random(&[6, 6], &mut r, -1.0, 1.0));
        store.insert("b1", g, random(&[6], &mut r, -0.5, 0.5));
        store.insert("w2", g, random(&[6, 1], &mut r, -1.0, 1.0));
        store.insert("b2", g, random(&[1], &mut r, -0.5, 0.5));
        let x = random(&[5, 3], &mut r, 0.0, 1.0);
        let target = Tensor::new(vec![5, 1], (0..5).map(|i| (i % 2) as f64).collect()).unwrap();
        let report = grad_check(&store, |t| {
            let i = ids(t);
            let xi = t.constant(x.clone());
            let (w0, b0, w1, b1, w2, b2) = (t.param(i[0]), t.param(i[1]), t.param(i[2]), t.param(i[3]), t.param(i[4]), t.param(i[5]));
            let h = t.linear(xi, w0, b0)?;
            let h = t.relu(h);
            let h = t.linear(h, w1, b1)?;
            let h = t.relu(h);
            let o = t.linear(h, w2, b2)?;
            let p = t.sigmoid(o);
            t.bce(p, target.clone())
        }).unwrap();
        prop_assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let mut r = rng::stream(seed, "det");
        let mut store = ParamStore::<f32>::new();
        let g = store.group("p");
        let w = store.insert("w", g, random(&[3, 8], &mut r, -1.0, 1.0).cast());
        let b = store.insert("b", g, random(&[8], &mut r, -1.0, 1.0).cast());
        let x: Tensor<f32> = random(&[16, 3], &mut r, 0.0, 1.0).cast();
        let run = || {
            let mut t = Tape::new(&store);
            let xi = t.constant(x.clone());
            let (wv, bv) = (t.param(w), t.param(b));
            let h = t.linear(xi, wv, bv).unwrap();
            let mut mask = rng::stream(seed, "mask");
            let h = t.dropout(h, 0.2, true, &mut mask).unwrap();
            t.value(h).clone()
        };
        prop_assert_eq!(run(), run());
    }
}
