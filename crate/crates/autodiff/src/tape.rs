use rand::Rng;

use crate::error::{AutodiffError, Result};
use crate::params::{GroupId, ParamId, ParamStore};
use crate::real::{matmul, Real};
use crate::tensor::Tensor;

/// Probability clamp used by [`Tape::bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    Linear,
    Relu,
    Sigmoid,
    Concat,
    RepeatRows,
    Dropout,
    Mul,
    Affine,
    MulConst,
    Add,
    Mean,
    Bce,
}

enum Op<T> {
    Input,
    Param(ParamId),
    Linear { input: Var, weight: Var, bias: Var },
    Relu(Var),
    Sigmoid(Var),
    Concat(Var, Var),
    RepeatRows(Var),
    Dropout { input: Var, mask: Vec<T> },
    Mul(Var, Var),
    Affine { input: Var, scale: T },
    MulConst { input: Var, constant: Tensor<T> },
    Add(Var, Var),
    Mean(Var),
    Bce { pred: Var, target: Tensor<T> },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::Linear { .. } => OpKind::Linear,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Concat(..) => OpKind::Concat,
            Op::RepeatRows(_) => OpKind::RepeatRows,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Mul(..) => OpKind::Mul,
            Op::Affine { .. } => OpKind::Affine,
            Op::MulConst { .. } => OpKind::MulConst,
            Op::Add(..) => OpKind::Add,
            Op::Mean(_) => OpKind::Mean,
            Op::Bce { .. } => OpKind::Bce,
        }
    }
}

struct Node<T> {
    op: Op<T>,
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor<T>>,
    needs_grad: bool,
}

/// Recording of one forward pass. Operations are appended in execution
/// order; [`Tape::backward`] walks them in exact reverse order.
pub struct Tape<'p, T: Real> {
    params: &'p ParamStore<T>,
    param_vars: Vec<Option<Var>>,
    frozen: Vec<bool>,
    nodes: Vec<Node<T>>,
    kink_signature: Option<u64>,
    fault: Option<(OpKind, T)>,
}

/// Gradients of a scalar with respect to parameters and gradient-requiring
/// inputs.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    params: Vec<(ParamId, Tensor<T>)>,
    inputs: Vec<(Var, Tensor<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn input(&self, var: Var) -> Option<&Tensor<T>> {
        self.inputs.iter().find(|(v, _)| *v == var).map(|(_, g)| g)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(p, g)| (*p, g))
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty() && self.inputs.is_empty()
    }
}

fn shape_str(shape: &[usize]) -> String {
    format!("{:?}", shape)
}

fn mix(h: u64, bit: bool) -> u64 {
    (h ^ bit as u64).wrapping_mul(0x0100_0000_01b3)
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            param_vars: vec![None; params.len()],
            frozen: vec![false; params.len()],
            nodes: Vec::new(),
            kink_signature: None,
            fault: None,
        }
    }

    /// Parameters of a frozen group receive no gradient and their weight
    /// gradients are never computed.
    pub fn freeze_group(&mut self, group: GroupId) {
        for id in self.params.ids_in(group) {
            self.frozen[id.0] = true;
        }
    }

    pub fn freeze_param(&mut self, id: ParamId) {
        self.frozen[id.0] = true;
    }

    /// Records a hash of every ReLU activation pattern and BCE clamp
    /// pattern, so callers can detect when a perturbation crossed a kink.
    pub fn track_kinks(&mut self) {
        self.kink_signature = Some(0xcbf2_9ce4_8422_2325);
    }

    pub fn kink_signature(&self) -> Option<u64> {
        self.kink_signature
    }

    /// Scales the backward rule of one operation kind. Only used to check
    /// that gradient checking detects broken rules.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind, factor: f64) {
        self.fault = Some((kind, T::of(factor)));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op_kind(&self, var: Var) -> OpKind {
        self.nodes[var.0].op.kind()
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        let node = &self.nodes[var.0];
        match (&node.op, &node.value) {
            (_, Some(v)) => v,
            (Op::Param(id), None) => self.params.get(*id),
            _ => unreachable!("non-parameter node without value"),
        }
    }

    fn push(&mut self, op: Op<T>, value: Option<Tensor<T>>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(Op::Input, Some(value), requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.input(value, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let needs = !self.frozen[id.0];
        let v = self.push(Op::Param(id), None, needs);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `input · weight + bias` with `input: [B x I]`, `weight: [I x O]`,
    /// `bias: [O]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        if x.shape().len() != 2 || w.shape().len() != 2 {
            return Err(AutodiffError::dim(
                "linear",
                format!("input {} weight {}", shape_str(x.shape()), shape_str(w.shape())),
            ));
        }
        let (rows, fan_in) = (x.shape()[0], x.shape()[1]);
        let (w_in, fan_out) = (w.shape()[0], w.shape()[1]);
        if fan_in != w_in || b.len() != fan_out {
            return Err(AutodiffError::dim(
                "linear",
                format!(
                    "input {} weight {} bias {}",
                    shape_str(x.shape()),
                    shape_str(w.shape()),
                    shape_str(b.shape())
                ),
            ));
        }
        let mut out = Vec::with_capacity(rows * fan_out);
        for _ in 0..rows {
            out.extend_from_slice(b.data());
        }
        matmul(x.data(), false, w.data(), false, rows, fan_in, fan_out, &mut out, true);
        let out = Tensor::new(vec![rows, fan_out], out)?;
        if !out.is_finite() {
            return Err(AutodiffError::NonFinite { op: "linear" });
        }
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            Op::Linear {
                input,
                weight,
                bias,
            },
            Some(out),
            needs,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data: Vec<T> = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        if let Some(mut h) = self.kink_signature {
            for &v in self.value(input).data() {
                h = mix(h, v > T::zero());
            }
            self.kink_signature = Some(h);
        }
        let needs = self.needs(input);
        self.push(Op::Relu(input), Some(out), needs)
    }

    /// Logistic function, evaluated on the sign-appropriate branch so large
    /// magnitudes saturate without overflow.
    pub fn sigmoid(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data: Vec<T> = x.data().iter().map(|&v| sigmoid(v)).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(Op::Sigmoid(input), Some(out), needs)
    }

    /// Column-wise concatenation of `[B x I]` and `[B x J]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[0] != tb.shape()[0] {
            return Err(AutodiffError::dim(
                "concat",
                format!("{} vs {}", shape_str(ta.shape()), shape_str(tb.shape())),
            ));
        }
        let rows = ta.shape()[0];
        let (ca, cb) = (ta.shape()[1], tb.shape()[1]);
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&ta.data()[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&tb.data()[r * cb..(r + 1) * cb]);
        }
        let out = Tensor::new(vec![rows, ca + cb], out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Concat(a, b), Some(out), needs))
    }

    /// Broadcasts a row vector `[d]` or `[1 x d]` to `[rows x d]`.
    pub fn repeat_rows(&mut self, input: Var, rows: usize) -> Result<Var> {
        let x = self.value(input);
        if x.rows() != 1 {
            return Err(AutodiffError::dim(
                "repeat_rows",
                format!("expected a single row, got {}", shape_str(x.shape())),
            ));
        }
        let d = x.len();
        let mut out = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            out.extend_from_slice(x.data());
        }
        let out = Tensor::new(vec![rows, d], out)?;
        let needs = self.needs(input);
        Ok(self.push(Op::RepeatRows(input), Some(out), needs))
    }

    /// Inverted dropout. Identity in eval mode or at rate 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::Parameter(format!(
                "dropout rate {} outside [0, 1)",
                rate
            )));
        }
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep_scale = T::of(1.0 / (1.0 - rate));
        let x = self.value(input);
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let needs = self.needs(input);
        Ok(self.push(Op::Dropout { input, mask }, Some(out), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::dim(
                "mul",
                format!("{} vs {}", shape_str(ta.shape()), shape_str(tb.shape())),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), Some(out), needs))
    }

    /// `scale * input + shift`, elementwise.
    pub fn affine(&mut self, input: Var, scale: f64, shift: f64) -> Var {
        let (s, c) = (T::of(scale), T::of(shift));
        let x = self.value(input);
        let data = x.data().iter().map(|&v| s * v + c).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(Op::Affine { input, scale: s }, Some(out), needs)
    }

    /// `1 - input`.
    pub fn one_minus(&mut self, input: Var) -> Var {
        self.affine(input, -1.0, 1.0)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        self.affine(input, factor, 0.0)
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, input: Var, constant: Tensor<T>) -> Result<Var> {
        let x = self.value(input);
        if x.len() != constant.len() {
            return Err(AutodiffError::dim(
                "mul_const",
                format!("{} vs {}", shape_str(x.shape()), shape_str(constant.shape())),
            ));
        }
        let data = x.data().iter().zip(constant.data()).map(|(&a, &b)| a * b).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let needs = self.needs(input);
        Ok(self.push(Op::MulConst { input, constant }, Some(out), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::dim(
                "add",
                format!("{} vs {}", shape_str(ta.shape()), shape_str(tb.shape())),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), Some(out), needs))
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.is_empty() {
            return Err(AutodiffError::dim("mean", "empty tensor"));
        }
        let sum = x.data().iter().fold(0.0f64, |acc, v| acc + v.as_f64());
        let out = Tensor::scalar(T::of(sum / x.len() as f64));
        let needs = self.needs(input);
        Ok(self.push(Op::Mean(input), Some(out), needs))
    }

    /// Mean binary cross-entropy with predictions clamped to
    /// `[BCE_EPS, 1 - BCE_EPS]`. The gradient is evaluated at the clamped
    /// probability and is not zeroed inside the clamp region.
    pub fn bce(&mut self, pred: Var, target: Tensor<T>) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || p.is_empty() {
            return Err(AutodiffError::dim(
                "bce",
                format!("prediction {} target {}", shape_str(p.shape()), shape_str(target.shape())),
            ));
        }
        if let Some(bad) = target.data().iter().find(|&&t| !(t >= T::zero() && t <= T::one())) {
            return Err(AutodiffError::Parameter(format!(
                "bce target {} outside [0, 1]",
                bad
            )));
        }
        let mut sum = 0.0f64;
        let mut clamped = Vec::new();
        for (&pv, &tv) in p.data().iter().zip(target.data()) {
            let (pc, was_clamped) = clamp_prob(pv.as_f64());
            if self.kink_signature.is_some() {
                clamped.push(was_clamped);
            }
            let t = tv.as_f64();
            sum -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        }
        if let Some(mut h) = self.kink_signature {
            for c in clamped {
                h = mix(h, c);
            }
            self.kink_signature = Some(h);
        }
        let loss = sum / target.len() as f64;
        if !loss.is_finite() {
            return Err(AutodiffError::NonFinite { op: "bce" });
        }
        let needs = self.needs(pred);
        Ok(self.push(Op::Bce { pred, target }, Some(Tensor::scalar(T::of(loss))), needs))
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::dim(
                "backward",
                format!("loss must be a scalar, got {}", shape_str(lv.shape())),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![T::one()])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Input | Op::Param(_)) {
                continue;
            }
            let Some(mut g) = grads[i].take() else {
                continue;
            };
            if let Some((kind, factor)) = self.fault {
                if kind == node.op.kind() {
                    g.data_mut().iter_mut().for_each(|v| *v = *v * factor);
                }
            }
            self.propagate(i, &g, &mut grads)?;
        }

        let mut out = Gradients {
            params: Vec::new(),
            inputs: Vec::new(),
        };
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Param(id) => {
                    if let Some(g) = grads[i].take() {
                        out.params.push((id, g));
                    }
                }
                Op::Input => {
                    if let Some(g) = grads[i].take() {
                        out.inputs.push((Var(i), g));
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], var: Var, g: Tensor<T>) {
        if !self.needs(var) {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (rows, fan_in) = (x.shape()[0], x.shape()[1]);
                let fan_out = w.shape()[1];
                if self.needs(*input) {
                    let mut dx = vec![T::zero(); rows * fan_in];
                    matmul(g.data(), false, w.data(), true, rows, fan_out, fan_in, &mut dx, false);
                    self.accumulate(grads, *input, Tensor::new(vec![rows, fan_in], dx)?);
                }
                if self.needs(*weight) {
                    let mut dw = vec![T::zero(); fan_in * fan_out];
                    matmul(x.data(), true, g.data(), false, fan_in, rows, fan_out, &mut dw, false);
                    self.accumulate(grads, *weight, Tensor::new(w.shape().to_vec(), dw)?);
                }
                if self.needs(*bias) {
                    let mut db = vec![T::zero(); fan_out];
                    for row in g.data().chunks_exact(fan_out) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc = *acc + v;
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    self.accumulate(grads, *bias, Tensor::new(shape, db)?);
                }
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, *input, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Sigmoid(input) => {
                let x = self.value(*input);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| gv * sigmoid_derivative(v))
                    .collect();
                self.accumulate(grads, *input, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Concat(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let rows = ta.shape()[0];
                let (ca, cb) = (ta.shape()[1], tb.shape()[1]);
                let width = ca + cb;
                if self.needs(*a) {
                    let mut da = Vec::with_capacity(rows * ca);
                    for r in 0..rows {
                        da.extend_from_slice(&g.data()[r * width..r * width + ca]);
                    }
                    self.accumulate(grads, *a, Tensor::new(vec![rows, ca], da)?);
                }
                if self.needs(*b) {
                    let mut db = Vec::with_capacity(rows * cb);
                    for r in 0..rows {
                        db.extend_from_slice(&g.data()[r * width + ca..(r + 1) * width]);
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![rows, cb], db)?);
                }
            }
            Op::RepeatRows(input) => {
                let x = self.value(*input);
                let d = x.len();
                let mut acc = vec![T::zero(); d];
                for row in g.data().chunks_exact(d) {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a = *a + v;
                    }
                }
                self.accumulate(grads, *input, Tensor::new(x.shape().to_vec(), acc)?);
            }
            Op::Dropout { input, mask } => {
                let data = g.data().iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                self.accumulate(grads, *input, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let data = g.data().iter().zip(tb.data()).map(|(&gv, &y)| gv * y).collect();
                    self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), data)?);
                }
                if self.needs(*b) {
                    let data = g.data().iter().zip(ta.data()).map(|(&gv, &x)| gv * x).collect();
                    self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), data)?);
                }
            }
            Op::Affine { input, scale } => {
                let data = g.data().iter().map(|&gv| gv * *scale).collect();
                let shape = self.value(*input).shape().to_vec();
                self.accumulate(grads, *input, Tensor::new(shape, data)?);
            }
            Op::MulConst { input, constant } => {
                let data = g.data().iter().zip(constant.data()).map(|(&gv, &c)| gv * c).collect();
                let shape = self.value(*input).shape().to_vec();
                self.accumulate(grads, *input, Tensor::new(shape, data)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mean(input) => {
                let x = self.value(*input);
                let v = T::of(g.item().as_f64() / x.len() as f64);
                self.accumulate(grads, *input, Tensor::full(x.shape(), v));
            }
            Op::Bce { pred, target } => {
                let p = self.value(*pred);
                let scale = g.item().as_f64() / p.len() as f64;
                let data = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&pv, &tv)| {
                        let (pc, _) = clamp_prob(pv.as_f64());
                        T::of(scale * (pc - tv.as_f64()) / (pc * (1.0 - pc)))
                    })
                    .collect();
                self.accumulate(grads, *pred, Tensor::new(p.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < BCE_EPS {
        (BCE_EPS, true)
    } else if p > 1.0 - BCE_EPS {
        (1.0 - BCE_EPS, true)
    } else {
        (p, false)
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// `σ'(v) = e^{-|v|} / (1 + e^{-|v|})^2`, accurate where `σ(v)` rounds to 1.
fn sigmoid_derivative<T: Real>(v: T) -> T {
    let e = (-v.abs()).exp();
    let d = T::one() + e;
    e / (d * d)
}
