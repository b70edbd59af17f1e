//! Minimal reverse-mode autodiff over dense `f64` tensors.
//!
//! The op set is exactly what the model needs: matrix products, pointwise
//! gate math, concatenation, max-over-rows pooling and a stable log-softmax.
//! Shape mismatches panic with both shapes in the message. A finite-difference
//! gradient checker lives here as well.

use std::cell::RefCell;
use std::rc::Rc;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert!(
            n == data.len(),
            "tensor shape {:?} needs {} values, got {}",
            shape,
            n,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    /// Row count of a 2-d tensor.
    pub fn rows(&self) -> usize {
        assert!(self.shape.len() == 2, "expected matrix, got {:?}", self.shape);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert!(self.shape.len() == 2, "expected matrix, got {:?}", self.shape);
        self.shape[1]
    }

    pub fn at(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

struct ParamData {
    name: String,
    value: Tensor,
    grad: Tensor,
}

/// Named trainable tensor with an accumulated gradient.
///
/// Cloning a `Param` aliases the underlying storage; cross-lingual parameter
/// sharing is expressed by handing the same `Param` to both languages.
#[derive(Clone)]
pub struct Param(Rc<RefCell<ParamData>>);

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape.clone());
        Param(Rc::new(RefCell::new(ParamData {
            name: name.into(),
            value,
            grad,
        })))
    }

    pub fn name(&self) -> String {
        self.0.borrow().name.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().value.shape.clone()
    }

    pub fn value(&self) -> Tensor {
        self.0.borrow().value.clone()
    }

    pub fn grad(&self) -> Tensor {
        self.0.borrow().grad.clone()
    }

    pub fn set_value(&self, t: Tensor) {
        let mut p = self.0.borrow_mut();
        assert!(
            p.value.shape == t.shape,
            "param {} shape {:?} cannot take value of shape {:?}",
            p.name,
            p.value.shape,
            t.shape
        );
        p.value = t;
    }

    pub fn zero_grad(&self) {
        let mut p = self.0.borrow_mut();
        for g in p.grad.data.iter_mut() {
            *g = 0.0;
        }
    }

    /// Squared L2 norm of the accumulated gradient.
    pub fn grad_sq_norm(&self) -> f64 {
        self.0.borrow().grad.data.iter().map(|g| g * g).sum()
    }

    /// value -= lr * scale * grad
    pub fn sgd_step(&self, lr: f64, scale: f64) {
        let mut p = self.0.borrow_mut();
        let ParamData {
            ref mut value,
            ref grad,
            ..
        } = *p;
        for (v, g) in value.data.iter_mut().zip(grad.data.iter()) {
            *v -= lr * scale * g;
        }
    }

    /// True when `other` aliases the same storage.
    pub fn same_storage(&self, other: &Param) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn add_grad(&self, delta: &[f64]) {
        let mut p = self.0.borrow_mut();
        for (g, d) in p.grad.data.iter_mut().zip(delta.iter()) {
            *g += d;
        }
    }

    fn add_grad_row(&self, row: usize, delta: &[f64]) {
        let mut p = self.0.borrow_mut();
        let cols = p.value.cols();
        let off = row * cols;
        for (g, d) in p.grad.data[off..off + cols].iter_mut().zip(delta.iter()) {
            *g += d;
        }
    }

    pub fn nudge(&self, index: usize, delta: f64) {
        self.0.borrow_mut().value.data[index] += delta;
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Leaf(Param),
    LeafRow(Param, usize),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Dot(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    MaxRows(Var, Vec<usize>),
    LogSoftmax(Var),
    Pick(Var, usize),
    SumList(Vec<Var>),
    Scale(Var, f64),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

/// Record of executed ops; backward runs them in exact reverse order and
/// accumulates additively into each leaf's `Param` gradient.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = &self.nodes[v.0].value;
        assert!(t.len() == 1, "expected scalar, got shape {:?}", t.shape);
        t.data[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const)
    }

    pub fn leaf(&mut self, p: &Param) -> Var {
        let value = p.value();
        self.push(value, Op::Leaf(p.clone()))
    }

    /// One row of a matrix param as a vector leaf; backward touches only
    /// that row's gradient (sparse embedding updates depend on this).
    pub fn leaf_row(&mut self, p: &Param, row: usize) -> Var {
        let value = {
            let b = p.0.borrow();
            let cols = b.value.cols();
            assert!(
                row < b.value.rows(),
                "row {} out of range for param {} of shape {:?}",
                row,
                b.name,
                b.value.shape
            );
            Tensor::vector(b.value.data[row * cols..(row + 1) * cols].to_vec())
        };
        self.push(value, Op::LeafRow(p.clone(), row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
        let (k2, n) = (self.nodes[b.0].value.rows(), self.nodes[b.0].value.cols());
        assert!(
            k == k2,
            "matmul shape mismatch: {:?} x {:?}",
            self.nodes[a.0].value.shape,
            self.nodes[b.0].value.shape
        );
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += x * bv[p * n + j];
                }
            }
        }
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    /// Matrix [m×n] times vector [n] -> vector [m].
    pub fn matvec(&mut self, m: Var, v: Var) -> Var {
        let (rows, cols) = (self.nodes[m.0].value.rows(), self.nodes[m.0].value.cols());
        let vt = &self.nodes[v.0].value;
        assert!(
            vt.is_vector() && vt.len() == cols,
            "matvec shape mismatch: {:?} x {:?}",
            self.nodes[m.0].value.shape,
            vt.shape
        );
        let mv = &self.nodes[m.0].value.data;
        let vv = &vt.data;
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let mut acc = 0.0;
            for j in 0..cols {
                acc += mv[i * cols + j] * vv[j];
            }
            out[i] = acc;
        }
        self.push(Tensor::vector(out), Op::MatVec(m, v))
    }

    fn binary_elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> (Tensor, Var, Var) {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(
            ta.shape == tb.shape,
            "elementwise shape mismatch: {:?} vs {:?}",
            ta.shape,
            tb.shape
        );
        let data = ta
            .data
            .iter()
            .zip(tb.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        (Tensor::new(ta.shape.clone(), data), a, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (t, a, b) = self.binary_elementwise(a, b, |x, y| x + y);
        self.push(t, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (t, a, b) = self.binary_elementwise(a, b, |x, y| x * y);
        self.push(t, Op::Mul(a, b))
    }

    /// Inner product of two equal-length vectors -> scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(
            ta.is_vector() && tb.is_vector() && ta.len() == tb.len(),
            "dot shape mismatch: {:?} vs {:?}",
            ta.shape,
            tb.shape
        );
        let s: f64 = ta.data.iter().zip(tb.data.iter()).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(s), Op::Dot(a, b))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let data = t.data.iter().map(|&v| sigmoid(v)).collect();
        let t = Tensor::new(t.shape.clone(), data);
        self.push(t, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let data = t.data.iter().map(|&v| v.tanh()).collect();
        let t = Tensor::new(t.shape.clone(), data);
        self.push(t, Op::Tanh(x))
    }

    /// Concatenate vectors in order; gradient is the corresponding split.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of empty list");
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.nodes[p.0].value;
            assert!(t.is_vector(), "concat expects vectors, got {:?}", t.shape);
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    /// Columnwise max of a [k×d] matrix -> vector [d]; gradient routes to the
    /// argmax row only, ties broken toward the smallest row index.
    pub fn max_over_rows(&mut self, m: Var) -> Var {
        let t = &self.nodes[m.0].value;
        let (rows, cols) = (t.rows(), t.cols());
        assert!(rows >= 1, "max_over_rows of empty tensor");
        let mut out = vec![f64::NEG_INFINITY; cols];
        let mut argmax = vec![0usize; cols];
        for i in 0..rows {
            for j in 0..cols {
                let v = t.data[i * cols + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        self.push(Tensor::vector(out), Op::MaxRows(m, argmax))
    }

    /// Numerically stable log-softmax of a vector.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        assert!(t.is_vector() && !t.is_empty(), "log_softmax expects a non-empty vector");
        let out = log_softmax_values(&t.data);
        self.push(Tensor::vector(out), Op::LogSoftmax(x))
    }

    /// Select one element of a vector as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Var {
        let t = &self.nodes[x.0].value;
        assert!(
            t.is_vector() && index < t.len(),
            "pick index {} out of range for shape {:?}",
            index,
            t.shape
        );
        let v = t.data[index];
        self.push(Tensor::scalar(v), Op::Pick(x, index))
    }

    /// Sum a list of same-shape tensors.
    pub fn sum_list(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum_list of empty list");
        let shape = self.nodes[parts[0].0].value.shape.clone();
        let mut data = vec![0.0; self.nodes[parts[0].0].value.len()];
        for &p in parts {
            let t = &self.nodes[p.0].value;
            assert!(
                t.shape == shape,
                "sum_list shape mismatch: {:?} vs {:?}",
                shape,
                t.shape
            );
            for (d, v) in data.iter_mut().zip(t.data.iter()) {
                *d += v;
            }
        }
        self.push(Tensor::new(shape, data), Op::SumList(parts.to_vec()))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = &self.nodes[x.0].value;
        let data = t.data.iter().map(|&v| v * factor).collect();
        let t = Tensor::new(t.shape.clone(), data);
        self.push(t, Op::Scale(x, factor))
    }

    /// Reinterpret a var under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let t = &self.nodes[x.0].value;
        let n: usize = shape.iter().product();
        assert!(
            n == t.len(),
            "reshape {:?} -> {:?}: element count differs",
            t.shape,
            shape
        );
        let t = Tensor::new(shape, t.data.clone());
        self.push(t, Op::Reshape(x))
    }

    /// Reverse accumulation from a scalar root. Leaf gradients are added into
    /// their `Param`s, so repeated calls without `zero_grad` accumulate.
    pub fn backward(&mut self, root: Var) {
        assert!(
            self.nodes[root.0].value.len() == 1,
            "backward root must be scalar, got shape {:?}",
            self.nodes[root.0].value.shape
        );
        for node in self.nodes.iter_mut() {
            for g in node.grad.iter_mut() {
                *g = 0.0;
            }
        }
        self.nodes[root.0].grad[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let grad = std::mem::take(&mut self.nodes[i].grad);
            if grad.iter().all(|&g| g == 0.0) {
                self.nodes[i].grad = grad;
                continue;
            }
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Leaf(p) => p.add_grad(&grad),
                Op::LeafRow(p, row) => p.add_grad_row(*row, &grad),
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let n = self.nodes[b.0].value.cols();
                    let av = self.nodes[a.0].value.data.clone();
                    let bv = self.nodes[b.0].value.data.clone();
                    // da = g . b^T ; db = a^T . g
                    for i2 in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grad[i2 * n + j] * bv[p * n + j];
                            }
                            self.nodes[a.0].grad[i2 * k + p] += acc;
                        }
                    }
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i2 in 0..m {
                                acc += av[i2 * k + p] * grad[i2 * n + j];
                            }
                            self.nodes[b.0].grad[p * n + j] += acc;
                        }
                    }
                }
                Op::MatVec(m, v) => {
                    let (m, v) = (*m, *v);
                    let (rows, cols) = (self.nodes[m.0].value.rows(), self.nodes[m.0].value.cols());
                    let mv = self.nodes[m.0].value.data.clone();
                    let vv = self.nodes[v.0].value.data.clone();
                    for i2 in 0..rows {
                        let g = grad[i2];
                        if g == 0.0 {
                            continue;
                        }
                        for j in 0..cols {
                            self.nodes[m.0].grad[i2 * cols + j] += g * vv[j];
                            self.nodes[v.0].grad[j] += g * mv[i2 * cols + j];
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[j] += g;
                    }
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[b.0].grad[j] += g;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a.0].value.data.clone();
                    let bv = self.nodes[b.0].value.data.clone();
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[j] += g * bv[j];
                        self.nodes[b.0].grad[j] += g * av[j];
                    }
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = grad[0];
                    let av = self.nodes[a.0].value.data.clone();
                    let bv = self.nodes[b.0].value.data.clone();
                    for j in 0..av.len() {
                        self.nodes[a.0].grad[j] += g * bv[j];
                        self.nodes[b.0].grad[j] += g * av[j];
                    }
                }
                Op::Sigmoid(x) => {
                    let x = *x;
                    let out = self.nodes[i].value.data.clone();
                    for (j, &g) in grad.iter().enumerate() {
                        let s = out[j];
                        self.nodes[x.0].grad[j] += g * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    let x = *x;
                    let out = self.nodes[i].value.data.clone();
                    for (j, &g) in grad.iter().enumerate() {
                        let t = out[j];
                        self.nodes[x.0].grad[j] += g * (1.0 - t * t);
                    }
                }
                Op::Concat(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        for j in 0..n {
                            self.nodes[p.0].grad[j] += grad[off + j];
                        }
                        off += n;
                    }
                }
                Op::MaxRows(m, argmax) => {
                    let m = *m;
                    let argmax = argmax.clone();
                    let cols = self.nodes[m.0].value.cols();
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[m.0].grad[argmax[j] * cols + j] += g;
                    }
                }
                Op::LogSoftmax(x) => {
                    let x = *x;
                    let out = self.nodes[i].value.data.clone();
                    let gsum: f64 = grad.iter().sum();
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[x.0].grad[j] += g - out[j].exp() * gsum;
                    }
                }
                Op::Pick(x, index) => {
                    let (x, index) = (*x, *index);
                    self.nodes[x.0].grad[index] += grad[0];
                }
                Op::SumList(parts) => {
                    let parts = parts.clone();
                    for p in parts {
                        for (j, &g) in grad.iter().enumerate() {
                            self.nodes[p.0].grad[j] += g;
                        }
                    }
                }
                Op::Scale(x, factor) => {
                    let (x, factor) = (*x, *factor);
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[x.0].grad[j] += g * factor;
                    }
                }
                Op::Reshape(x) => {
                    let x = *x;
                    for (j, &g) in grad.iter().enumerate() {
                        self.nodes[x.0].grad[j] += g;
                    }
                }
            }
            self.nodes[i].grad = grad;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable log-softmax on a raw slice (also used by the tape-free decode path).
pub fn log_softmax_values(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + scores
            .iter()
            .map(|&s| (s - max).exp())
            .sum::<f64>()
            .ln();
    scores.iter().map(|&s| s - lse).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
}

/// Central-difference gradient check.
///
/// `loss_fn` must run a full forward+backward pass, accumulating analytic
/// gradients into `params`, and return the scalar loss. Gradients are zeroed
/// before the analytic pass and left zeroed on return.
pub fn gradient_check<F>(loss_fn: F, params: &[Param], eps: f64) -> Result<f64, GradCheckError>
where
    F: Fn() -> f64,
{
    for p in params {
        p.zero_grad();
    }
    let base = loss_fn();
    if !base.is_finite() {
        return Err(GradCheckError::NonFiniteLoss(base));
    }
    let analytic: Vec<Tensor> = params.iter().map(|p| p.grad()).collect();

    let mut max_rel = 0.0f64;
    for (p, an) in params.iter().zip(analytic.iter()) {
        for i in 0..an.len() {
            p.nudge(i, eps);
            let up = loss_fn();
            p.nudge(i, -2.0 * eps);
            let down = loss_fn();
            p.nudge(i, eps);
            if !up.is_finite() || !down.is_finite() {
                return Err(GradCheckError::NonFiniteLoss(if up.is_finite() { down } else { up }));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = an.at(i);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    for p in params {
        p.zero_grad();
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rand_tensor(rng: &mut ChaCha20Rng, shape: Vec<usize>) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(shape, data)
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let m = tape.constant(Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]));
        let out = tape.matmul(eye, m);
        assert_eq!(tape.value(out).data(), &[1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn matmul_hand() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]));
        let b = tape.constant(Tensor::matrix(2, 1, vec![1., 1.]));
        let out = tape.matmul(a, b);
        assert_eq!(tape.value(out).data(), &[3., 7.]);
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn matmul_shape_mismatch_panics() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 3, vec![0.0; 6]));
        let b = tape.constant(Tensor::matrix(2, 2, vec![0.0; 4]));
        tape.matmul(a, b);
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = Param::new("a", rand_tensor(&mut rng, vec![4, 3]));
        let b = Param::new("b", rand_tensor(&mut rng, vec![3, 2]));
        let params = [a.clone(), b.clone()];
        let loss = || {
            let mut tape = Tape::new();
            let av = tape.leaf(&a);
            let bv = tape.leaf(&b);
            let c = tape.matmul(av, bv);
            // sum of all entries as scalar loss
            let flat = tape.reshape(c, vec![8]);
            let ones = tape.constant(Tensor::vector(vec![1.0; 8]));
            let s = tape.dot(flat, ones);
            tape.backward(s);
            tape.scalar_value(s)
        };
        let err = gradient_check(loss, &params, 1e-5).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn sigmoid_tanh_at_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0]));
        let s = tape.sigmoid(x);
        let t = tape.tanh(x);
        assert_eq!(tape.value(s).data(), &[0.5]);
        assert_eq!(tape.value(t).data(), &[0.0]);
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let p = Param::new("p", rand_tensor(&mut rng, vec![10]));
        let q = Param::new("q", rand_tensor(&mut rng, vec![10]));
        let params = [p.clone(), q.clone()];
        let loss = || {
            let mut tape = Tape::new();
            let pv = tape.leaf(&p);
            let qv = tape.leaf(&q);
            let a = tape.add(pv, qv);
            let m = tape.mul(a, pv);
            let s = tape.sigmoid(m);
            let t = tape.tanh(s);
            let ones = tape.constant(Tensor::vector(vec![1.0; 10]));
            let out = tape.dot(t, ones);
            tape.backward(out);
            tape.scalar_value(out)
        };
        let err = gradient_check(loss, &params, 1e-5).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn concat_flattens_and_splits_grad() {
        let a = Param::new("a", Tensor::vector(vec![1.0, 2.0]));
        let b = Param::new("b", Tensor::vector(vec![3.0]));
        let mut tape = Tape::new();
        let av = tape.leaf(&a);
        let bv = tape.leaf(&b);
        let c = tape.concat(&[av, bv]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
        let ones = tape.constant(Tensor::vector(vec![1.0; 3]));
        let s = tape.dot(c, ones);
        tape.backward(s);
        assert_eq!(a.grad().data(), &[1.0, 1.0]);
        assert_eq!(b.grad().data(), &[1.0]);
    }

    #[test]
    fn max_over_rows_values_and_tie_break() {
        let mut tape = Tape::new();
        let m = tape.constant(Tensor::matrix(2, 2, vec![1., 5., 3., 2.]));
        let out = tape.max_over_rows(m);
        assert_eq!(tape.value(out).data(), &[3., 5.]);

        // tie: gradient flows only to row 0
        let p = Param::new("p", Tensor::matrix(2, 1, vec![2.0, 2.0]));
        let mut tape = Tape::new();
        let pv = tape.leaf(&p);
        let mx = tape.max_over_rows(pv);
        let s = tape.pick(mx, 0);
        tape.backward(s);
        assert_eq!(p.grad().data(), &[1.0, 0.0]);
    }

    #[test]
    fn log_softmax_symmetry_and_stability() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.log_softmax(x);
        let ln2 = 2.0f64.ln();
        assert!((tape.value(y).at(0) + ln2).abs() < 1e-15);

        let x = tape.constant(Tensor::vector(vec![1000.0, 0.0]));
        let y = tape.log_softmax(x);
        let v = tape.value(y);
        assert!(v.all_finite());
        assert!(v.at(0).abs() < 1e-9);
    }

    #[test]
    fn log_softmax_normalizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut tape = Tape::new();
            let n = rng.gen_range(1..8);
            let x = tape.constant(rand_tensor(&mut rng, vec![n]));
            let y = tape.log_softmax(x);
            let lse: f64 = tape.value(y).data().iter().map(|v| v.exp()).sum::<f64>().ln();
            assert!(lse.abs() <= 1e-9);
        }
    }

    #[test]
    fn log_softmax_nll_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let p = Param::new("p", rand_tensor(&mut rng, vec![5]));
        let params = [p.clone()];
        let loss = || {
            let mut tape = Tape::new();
            let pv = tape.leaf(&p);
            let ls = tape.log_softmax(pv);
            let picked = tape.pick(ls, 2);
            let nll = tape.scale(picked, -1.0);
            tape.backward(nll);
            tape.scalar_value(nll)
        };
        let err = gradient_check(loss, &params, 1e-5).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn backward_is_additive() {
        let p = Param::new("p", Tensor::vector(vec![0.3, -0.7]));
        let mut tape = Tape::new();
        let pv = tape.leaf(&p);
        let s = tape.dot(pv, pv);
        tape.backward(s);
        let once = p.grad();
        tape.backward(s);
        let twice = p.grad();
        for (a, b) in once.data().iter().zip(twice.data().iter()) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn quadratic_loss_gradient_is_param() {
        let p = Param::new("p", Tensor::vector(vec![1.5, -2.0, 0.25]));
        let params = [p.clone()];
        let loss = || {
            let mut tape = Tape::new();
            let pv = tape.leaf(&p);
            let s = tape.dot(pv, pv);
            let half = tape.scale(s, 0.5);
            tape.backward(half);
            tape.scalar_value(half)
        };
        let err = gradient_check(loss, &params, 1e-5).unwrap();
        assert!(err < 1e-8, "rel err {err}");
        // analytic grad equals p itself
        p.zero_grad();
        loss();
        for (g, v) in p.grad().data().iter().zip(p.value().data().iter()) {
            assert!((g - v).abs() < 1e-12);
        }
    }

    #[test]
    fn unused_param_gets_zero_grad() {
        let used = Param::new("used", Tensor::vector(vec![1.0]));
        let unused = Param::new("unused", Tensor::vector(vec![4.0]));
        used.zero_grad();
        unused.zero_grad();
        let mut tape = Tape::new();
        let u = tape.leaf(&used);
        let s = tape.dot(u, u);
        tape.backward(s);
        assert_eq!(unused.grad().data(), &[0.0]);
        assert_eq!(used.grad().data(), &[2.0]);
    }

    #[test]
    fn randomized_gradient_checks_across_ops() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for trial in 0..100 {
            let rows = rng.gen_range(1..4);
            let cols = rng.gen_range(1..4);
            let m = Param::new("m", rand_tensor(&mut rng, vec![rows, cols]));
            let v = Param::new("v", rand_tensor(&mut rng, vec![cols]));
            let params = [m.clone(), v.clone()];
            let loss = || {
                let mut tape = Tape::new();
                let mv = tape.leaf(&m);
                let vv = tape.leaf(&v);
                let y = tape.matvec(mv, vv);
                let t = tape.tanh(y);
                let ls = tape.log_softmax(t);
                let picked = tape.pick(ls, 0);
                let pooled = tape.max_over_rows(mv);
                let pd = tape.dot(pooled, pooled);
                let total = tape.sum_list(&[picked, pd]);
                tape.backward(total);
                tape.scalar_value(total)
            };
            let err = gradient_check(loss, &params, 1e-5).unwrap();
            assert!(err < 1e-4, "trial {trial}: rel err {err}");
        }
    }
}
