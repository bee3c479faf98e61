//! Tape-based reverse-mode automatic differentiation over dense values.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use super::store::{ParamId, ParamStore};
use super::{NnError, Result};

/// Floating-point element type of tensors; implemented for `f32` and `f64`.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
    + num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn into_f64(self) -> f64 {
        self
    }
}

pub(crate) struct GradStore<T> {
    grads: Vec<Option<Vec<T>>>,
    lens: Vec<usize>,
}

impl<T: Scalar> GradStore<T> {
    fn new(lens: Vec<usize>) -> Self {
        Self { grads: lens.iter().map(|_| None).collect(), lens }
    }

    /// Accumulate into the gradient buffer of `node`.
    pub(crate) fn accumulate(&mut self, node: usize, f: impl FnOnce(&mut [T])) {
        let buf = self.grads[node].get_or_insert_with(|| vec![T::zero(); self.lens[node]]);
        f(buf);
    }
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &mut GradStore<T>)>;

struct Node<T> {
    len: usize,
    backward: Option<BackwardFn<T>>,
}

struct TapeInner<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    bound_params: RefCell<HashMap<usize, usize>>, // param index -> node id
}

/// Records one forward pass; dropped after the gradients are extracted.
#[derive(Clone)]
pub struct Tape<T: Scalar> {
    inner: Rc<TapeInner<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients keyed by parameter, extracted from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_param: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn empty() -> Self {
        Self { by_param: HashMap::new() }
    }

    pub fn for_param(&self, id: ParamId) -> Option<&[T]> {
        self.by_param.get(&id.0).map(|v| v.as_slice())
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        let mut ids: Vec<usize> = self.by_param.keys().copied().collect();
        ids.sort_unstable();
        ids.into_iter().map(ParamId)
    }

    /// Elementwise sum, used to combine per-utterance gradients of a batch.
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (k, v) in &other.by_param {
            match self.by_param.get_mut(k) {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(v.iter()) {
                        *a += *b;
                    }
                }
                None => {
                    self.by_param.insert(*k, v.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in self.by_param.values_mut() {
            for x in v.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for v in self.by_param.values() {
            for &x in v {
                acc += x.into_f64() * x.into_f64();
            }
        }
        acc.sqrt()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(TapeInner {
                nodes: RefCell::new(Vec::new()),
                bound_params: RefCell::new(HashMap::new()),
            }),
        }
    }

    fn push_node(&self, len: usize, backward: Option<BackwardFn<T>>) -> usize {
        let mut nodes = self.inner.nodes.borrow_mut();
        nodes.push(Node { len, backward });
        nodes.len() - 1
    }

    pub(crate) fn make(
        &self,
        values: Vec<T>,
        shape: Vec<usize>,
        backward: Option<BackwardFn<T>>,
    ) -> Tensor<T> {
        let node = self.push_node(values.len(), backward);
        Tensor { tape: self.clone(), node, values: Arc::new(values), shape }
    }

    /// A tensor that does not propagate gradients.
    pub fn constant(&self, values: Vec<T>, shape: Vec<usize>) -> Tensor<T> {
        assert_eq!(values.len(), shape.iter().product::<usize>(), "constant shape");
        self.make(values, shape, None)
    }

    pub fn constant_from_f64(&self, values: &[f64], shape: Vec<usize>) -> Tensor<T> {
        self.constant(values.iter().map(|&v| T::from_f64(v)).collect(), shape)
    }

    pub fn scalar(&self, value: T) -> Tensor<T> {
        self.constant(vec![value], vec![1])
    }

    /// Bind a parameter as a leaf; repeated binds return the same node so a
    /// parameter used in several places accumulates one gradient.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Tensor<T> {
        if let Some(&node) = self.inner.bound_params.borrow().get(&id.0) {
            let entry = store.entry(id);
            return Tensor {
                tape: self.clone(),
                node,
                values: entry.values.clone(),
                shape: entry.shape.clone(),
            };
        }
        let entry = store.entry(id);
        let node = self.push_node(entry.values.len(), None);
        self.inner.bound_params.borrow_mut().insert(id.0, node);
        Tensor { tape: self.clone(), node, values: entry.values.clone(), shape: entry.shape.clone() }
    }

    /// Reverse pass from a scalar loss; returns per-parameter gradients.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<Gradients<T>> {
        if loss.values.len() != 1 {
            return Err(NnError::NonScalarLoss(loss.shape.clone()));
        }
        if !loss.values[0].is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        let nodes = self.inner.nodes.borrow();
        let lens: Vec<usize> = nodes.iter().map(|n| n.len).collect();
        let mut store = GradStore::new(lens);
        store.accumulate(loss.node, |g| g[0] = T::one());

        let param_nodes: HashMap<usize, usize> = self
            .inner
            .bound_params
            .borrow()
            .iter()
            .map(|(&param, &node)| (node, param))
            .collect();

        let mut by_param = HashMap::new();
        for id in (0..=loss.node).rev() {
            let Some(g) = store.grads[id].take() else { continue };
            if let Some(bk) = &nodes[id].backward {
                bk(&g, &mut store);
            } else if let Some(&param) = param_nodes.get(&id) {
                by_param.insert(param, g);
            }
        }
        Ok(Gradients { by_param })
    }
}

/// Dense value with tape linkage; cloning is cheap (shared buffer).
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    tape: Tape<T>,
    node: usize,
    values: Arc<Vec<T>>,
    shape: Vec<usize>,
}

fn unary<T: Scalar>(
    x: &Tensor<T>,
    shape: Vec<usize>,
    forward: impl Fn(&[T]) -> Vec<T>,
    backward: impl Fn(&[T], &[T], &[T], &mut [T]) + 'static, // (out_grad, x_vals, out_vals, x_grad)
) -> Tensor<T> {
    let out_vals = forward(&x.values);
    let x_vals = x.values.clone();
    let x_node = x.node;
    let out_arc = Arc::new(out_vals);
    let captured_out = out_arc.clone();
    let node = x.tape.push_node(
        out_arc.len(),
        Some(Box::new(move |g, store| {
            store.accumulate(x_node, |gx| backward(g, &x_vals, &captured_out, gx));
        })),
    );
    Tensor { tape: x.tape.clone(), node, values: out_arc, shape }
}

impl<T: Scalar> Tensor<T> {
    pub(crate) fn node_id(&self) -> usize {
        self.node
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn item(&self) -> T {
        assert_eq!(self.values.len(), 1, "item() on non-scalar tensor");
        self.values[0]
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.into_f64()).collect()
    }

    /// Rows of a 2-D tensor.
    pub fn n_rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "n_rows on non-matrix");
        self.shape[0]
    }

    pub fn n_cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "n_cols on non-matrix");
        self.shape[1]
    }

    /// A constant copy detached from the tape.
    pub fn detach(&self) -> Tensor<T> {
        self.tape.constant(self.values.as_ref().clone(), self.shape.clone())
    }

    fn assert_same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(NnError::ShapeMismatch {
                op,
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.assert_same_shape(other, "add")?;
        let vals: Vec<T> =
            self.values.iter().zip(other.values.iter()).map(|(&a, &b)| a + b).collect();
        let (a_node, b_node) = (self.node, other.node);
        let node = self.tape.push_node(
            vals.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(a_node, |ga| {
                    for (ga_i, &g_i) in ga.iter_mut().zip(g.iter()) {
                        *ga_i += g_i;
                    }
                });
                store.accumulate(b_node, |gb| {
                    for (gb_i, &g_i) in gb.iter_mut().zip(g.iter()) {
                        *gb_i += g_i;
                    }
                });
            })),
        );
        Ok(Tensor {
            tape: self.tape.clone(),
            node,
            values: Arc::new(vals),
            shape: self.shape.clone(),
        })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.add(&other.scale(-T::one()))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.assert_same_shape(other, "mul")?;
        let vals: Vec<T> =
            self.values.iter().zip(other.values.iter()).map(|(&a, &b)| a * b).collect();
        let (a_node, b_node) = (self.node, other.node);
        let (a_vals, b_vals) = (self.values.clone(), other.values.clone());
        let node = self.tape.push_node(
            vals.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(a_node, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * b_vals[i];
                    }
                });
                store.accumulate(b_node, |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * a_vals[i];
                    }
                });
            })),
        );
        Ok(Tensor {
            tape: self.tape.clone(),
            node,
            values: Arc::new(vals),
            shape: self.shape.clone(),
        })
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        unary(
            self,
            self.shape.clone(),
            |x| x.iter().map(|&v| v * c).collect(),
            move |g, _, _, gx| {
                for (gx_i, &g_i) in gx.iter_mut().zip(g.iter()) {
                    *gx_i += g_i * c;
                }
            },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        unary(
            self,
            self.shape.clone(),
            |x| {
                x.iter()
                    .map(|&v| {
                        let one = T::one();
                        one / (one + (-v).exp())
                    })
                    .collect()
            },
            |g, _, out, gx| {
                for i in 0..g.len() {
                    gx[i] += g[i] * out[i] * (T::one() - out[i]);
                }
            },
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        unary(
            self,
            self.shape.clone(),
            |x| x.iter().map(|&v| v.tanh()).collect(),
            |g, _, out, gx| {
                for i in 0..g.len() {
                    gx[i] += g[i] * (T::one() - out[i] * out[i]);
                }
            },
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            self,
            self.shape.clone(),
            |x| x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
            |g, x, _, gx| {
                for i in 0..g.len() {
                    if x[i] > T::zero() {
                        gx[i] += g[i];
                    }
                }
            },
        )
    }

    pub fn sum(&self) -> Tensor<T> {
        unary(
            self,
            vec![1],
            |x| vec![x.iter().copied().sum()],
            |g, _, _, gx| {
                for gx_i in gx.iter_mut() {
                    *gx_i += g[0];
                }
            },
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = T::from_f64(self.numel() as f64);
        self.sum().scale(T::one() / n)
    }

    /// Row-wise softmax of a matrix (or of a single vector).
    pub fn softmax_rows(&self) -> Tensor<T> {
        let cols = *self.shape.last().expect("softmax on empty shape");
        let fwd = move |x: &[T]| {
            let mut out = Vec::with_capacity(x.len());
            for row in x.chunks(cols) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
                let sum: T = exps.iter().copied().sum();
                out.extend(exps.into_iter().map(|e| e / sum));
            }
            out
        };
        unary(self, self.shape.clone(), fwd, move |g, _, out, gx| {
            for (r, (g_row, o_row)) in g.chunks(cols).zip(out.chunks(cols)).enumerate() {
                let dot: T = g_row.iter().zip(o_row.iter()).map(|(&a, &b)| a * b).sum();
                let base = r * cols;
                for j in 0..cols {
                    gx[base + j] += o_row[j] * (g_row[j] - dot);
                }
            }
        })
    }

    /// Row-wise log-softmax, the numerically safe input to CTC.
    pub fn log_softmax_rows(&self) -> Tensor<T> {
        let cols = *self.shape.last().expect("log_softmax on empty shape");
        let fwd = move |x: &[T]| {
            let mut out = Vec::with_capacity(x.len());
            for row in x.chunks(cols) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
                out.extend(row.iter().map(|&v| v - log_sum));
            }
            out
        };
        unary(self, self.shape.clone(), fwd, move |g, _, out, gx| {
            for (r, (g_row, o_row)) in g.chunks(cols).zip(out.chunks(cols)).enumerate() {
                let g_sum: T = g_row.iter().copied().sum();
                let base = r * cols;
                for j in 0..cols {
                    gx[base + j] += g_row[j] - o_row[j].exp() * g_sum;
                }
            }
        })
    }

    /// `y = x W^T (+ b)`, `x: [m, k]` or `[k]`, `w: [n, k]`, `b: [n]`.
    pub fn linear(&self, w: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let (rows, k) = match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => {
                return Err(NnError::ShapeMismatch {
                    op: "linear",
                    detail: format!("input must be 1-D or 2-D, got {:?}", self.shape),
                })
            }
        };
        if w.shape.len() != 2 || w.shape[1] != k {
            return Err(NnError::ShapeMismatch {
                op: "linear",
                detail: format!("x {:?} vs w {:?}", self.shape, w.shape),
            });
        }
        let n = w.shape[0];
        if let Some(b) = bias {
            if b.shape != [n] {
                return Err(NnError::ShapeMismatch {
                    op: "linear",
                    detail: format!("bias {:?} vs out dim {n}", b.shape),
                });
            }
        }

        let x_vals = self.values.clone();
        let w_vals = w.values.clone();
        let mut out = vec![T::zero(); rows * n];
        for r in 0..rows {
            let x_row = &x_vals[r * k..(r + 1) * k];
            for o in 0..n {
                let w_row = &w_vals[o * k..(o + 1) * k];
                let mut acc = if let Some(b) = bias { b.values[o] } else { T::zero() };
                for i in 0..k {
                    acc += x_row[i] * w_row[i];
                }
                out[r * n + o] = acc;
            }
        }

        let out_shape = if self.shape.len() == 1 { vec![n] } else { vec![rows, n] };
        let (x_node, w_node) = (self.node, w.node);
        let bias_node = bias.map(|b| b.node);
        let node = self.tape.push_node(
            out.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for r in 0..rows {
                        for o in 0..n {
                            let g_ro = g[r * n + o];
                            if g_ro == T::zero() {
                                continue;
                            }
                            let w_row = &w_vals[o * k..(o + 1) * k];
                            let gx_row = &mut gx[r * k..(r + 1) * k];
                            for i in 0..k {
                                gx_row[i] += g_ro * w_row[i];
                            }
                        }
                    }
                });
                store.accumulate(w_node, |gw| {
                    for r in 0..rows {
                        let x_row = &x_vals[r * k..(r + 1) * k];
                        for o in 0..n {
                            let g_ro = g[r * n + o];
                            if g_ro == T::zero() {
                                continue;
                            }
                            let gw_row = &mut gw[o * k..(o + 1) * k];
                            for i in 0..k {
                                gw_row[i] += g_ro * x_row[i];
                            }
                        }
                    }
                });
                if let Some(b_node) = bias_node {
                    store.accumulate(b_node, |gb| {
                        for r in 0..rows {
                            for o in 0..n {
                                gb[o] += g[r * n + o];
                            }
                        }
                    });
                }
            })),
        );
        Ok(Tensor { tape: self.tape.clone(), node, values: Arc::new(out), shape: out_shape })
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&self, i: usize) -> Tensor<T> {
        assert_eq!(self.shape.len(), 2, "row() on non-matrix");
        let cols = self.shape[1];
        assert!(i < self.shape[0], "row {i} out of {}", self.shape[0]);
        let vals = self.values[i * cols..(i + 1) * cols].to_vec();
        let x_node = self.node;
        let node = self.tape.push_node(
            cols,
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for (j, &g_j) in g.iter().enumerate() {
                        gx[i * cols + j] += g_j;
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(vals), shape: vec![cols] }
    }

    /// Rows `[a, b)` of a matrix.
    pub fn rows_range(&self, a: usize, b: usize) -> Tensor<T> {
        assert_eq!(self.shape.len(), 2, "rows_range on non-matrix");
        let cols = self.shape[1];
        assert!(a <= b && b <= self.shape[0]);
        let vals = self.values[a * cols..b * cols].to_vec();
        let x_node = self.node;
        let node = self.tape.push_node(
            vals.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for (j, &g_j) in g.iter().enumerate() {
                        gx[a * cols + j] += g_j;
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(vals), shape: vec![b - a, cols] }
    }

    /// Contiguous slice `[a, b)` of a vector.
    pub fn slice(&self, a: usize, b: usize) -> Tensor<T> {
        assert_eq!(self.shape.len(), 1, "slice on non-vector");
        assert!(a <= b && b <= self.shape[0]);
        let vals = self.values[a..b].to_vec();
        let x_node = self.node;
        let node = self.tape.push_node(
            b - a,
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for (j, &g_j) in g.iter().enumerate() {
                        gx[a + j] += g_j;
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(vals), shape: vec![b - a] }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Tensor<T> {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.numel(),
            "reshape {:?} -> {shape:?}",
            self.shape
        );
        let x_node = self.node;
        let vals = self.values.as_ref().clone();
        let node = self.tape.push_node(
            vals.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for (gx_i, &g_i) in gx.iter_mut().zip(g.iter()) {
                        *gx_i += g_i;
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(vals), shape }
    }

    /// `alpha^T X` for a weight vector `alpha: [m]` and matrix `x: [m, n]`.
    pub fn vecmat(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape.len() != 1 || x.shape.len() != 2 || x.shape[0] != self.shape[0] {
            return Err(NnError::ShapeMismatch {
                op: "vecmat",
                detail: format!("{:?} vs {:?}", self.shape, x.shape),
            });
        }
        let (m, n) = (x.shape[0], x.shape[1]);
        let a_vals = self.values.clone();
        let x_vals = x.values.clone();
        let mut out = vec![T::zero(); n];
        for i in 0..m {
            let a_i = a_vals[i];
            let x_row = &x_vals[i * n..(i + 1) * n];
            for j in 0..n {
                out[j] += a_i * x_row[j];
            }
        }
        let (a_node, x_node) = (self.node, x.node);
        let node = self.tape.push_node(
            n,
            Some(Box::new(move |g, store| {
                store.accumulate(a_node, |ga| {
                    for i in 0..m {
                        let x_row = &x_vals[i * n..(i + 1) * n];
                        let mut acc = T::zero();
                        for j in 0..n {
                            acc += g[j] * x_row[j];
                        }
                        ga[i] += acc;
                    }
                });
                store.accumulate(x_node, |gx| {
                    for i in 0..m {
                        let a_i = a_vals[i];
                        if a_i == T::zero() {
                            continue;
                        }
                        let gx_row = &mut gx[i * n..(i + 1) * n];
                        for j in 0..n {
                            gx_row[j] += a_i * g[j];
                        }
                    }
                });
            })),
        );
        Ok(Tensor { tape: self.tape.clone(), node, values: Arc::new(out), shape: vec![n] })
    }

    /// Max over non-overlapping time windows of `factor` rows; a trailing
    /// remainder forms a smaller final window (ceil semantics).
    pub fn maxpool_time(&self, factor: usize) -> Tensor<T> {
        assert!(factor >= 1);
        assert_eq!(self.shape.len(), 2, "maxpool_time on non-matrix");
        let (t, d) = (self.shape[0], self.shape[1]);
        let out_t = t.div_ceil(factor);
        let mut out = vec![T::neg_infinity(); out_t * d];
        let mut argmax = vec![0usize; out_t * d];
        for ot in 0..out_t {
            for it in ot * factor..((ot + 1) * factor).min(t) {
                for j in 0..d {
                    let v = self.values[it * d + j];
                    if v > out[ot * d + j] {
                        out[ot * d + j] = v;
                        argmax[ot * d + j] = it * d + j;
                    }
                }
            }
        }
        let x_node = self.node;
        let node = self.tape.push_node(
            out.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for (o, &src) in argmax.iter().enumerate() {
                        gx[src] += g[o];
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(out), shape: vec![out_t, d] }
    }

    /// Stack every `k` consecutive rows into one row, repeating the final
    /// row to fill the last group.
    pub fn stack_frames(&self, k: usize) -> Tensor<T> {
        assert!(k >= 1);
        assert_eq!(self.shape.len(), 2, "stack_frames on non-matrix");
        let (t, d) = (self.shape[0], self.shape[1]);
        assert!(t > 0, "stack_frames on empty matrix");
        let out_t = t.div_ceil(k);
        let mut out = Vec::with_capacity(out_t * k * d);
        for ot in 0..out_t {
            for i in 0..k {
                let src = (ot * k + i).min(t - 1);
                out.extend_from_slice(&self.values[src * d..(src + 1) * d]);
            }
        }
        let x_node = self.node;
        let node = self.tape.push_node(
            out.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for ot in 0..out_t {
                        for i in 0..k {
                            let src = (ot * k + i).min(t - 1);
                            let g_off = (ot * k + i) * d;
                            for j in 0..d {
                                gx[src * d + j] += g[g_off + j];
                            }
                        }
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(out), shape: vec![out_t, k * d] }
    }

    /// Add a vector to every row of a matrix.
    pub fn add_row_broadcast(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape.len() != 2 || v.shape.len() != 1 || self.shape[1] != v.shape[0] {
            return Err(NnError::ShapeMismatch {
                op: "add_row_broadcast",
                detail: format!("{:?} vs {:?}", self.shape, v.shape),
            });
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut vals = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                vals.push(self.values[r * cols + c] + v.values[c]);
            }
        }
        let (m_node, v_node) = (self.node, v.node);
        let node = self.tape.push_node(
            vals.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(m_node, |gm| {
                    for (gm_i, &g_i) in gm.iter_mut().zip(g.iter()) {
                        *gm_i += g_i;
                    }
                });
                store.accumulate(v_node, |gv| {
                    for r in 0..rows {
                        for c in 0..cols {
                            gv[c] += g[r * cols + c];
                        }
                    }
                });
            })),
        );
        Ok(Tensor {
            tape: self.tape.clone(),
            node,
            values: Arc::new(vals),
            shape: vec![rows, cols],
        })
    }

    /// Reverse the row order of a matrix.
    pub fn reverse_rows(&self) -> Tensor<T> {
        assert_eq!(self.shape.len(), 2, "reverse_rows on non-matrix");
        let (t, d) = (self.shape[0], self.shape[1]);
        let mut vals = Vec::with_capacity(t * d);
        for r in (0..t).rev() {
            vals.extend_from_slice(&self.values[r * d..(r + 1) * d]);
        }
        let x_node = self.node;
        let node = self.tape.push_node(
            vals.len(),
            Some(Box::new(move |g, store| {
                store.accumulate(x_node, |gx| {
                    for r in 0..t {
                        let src = &g[(t - 1 - r) * d..(t - r) * d];
                        let dst = &mut gx[r * d..(r + 1) * d];
                        for (d_i, &s_i) in dst.iter_mut().zip(src.iter()) {
                            *d_i += s_i;
                        }
                    }
                });
            })),
        );
        Tensor { tape: self.tape.clone(), node, values: Arc::new(vals), shape: vec![t, d] }
    }
}

/// Concatenate vectors into one vector.
pub fn concat_vecs<T: Scalar>(tape: &Tape<T>, parts: &[&Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty());
    let mut vals = Vec::new();
    let mut offsets = Vec::with_capacity(parts.len());
    let mut nodes = Vec::with_capacity(parts.len());
    for p in parts {
        assert_eq!(p.shape.len(), 1, "concat_vecs expects vectors");
        offsets.push((vals.len(), p.numel()));
        nodes.push(p.node);
        vals.extend_from_slice(&p.values);
    }
    let total = vals.len();
    let node = tape.push_node(
        total,
        Some(Box::new(move |g, store| {
            for (&node, &(off, len)) in nodes.iter().zip(offsets.iter()) {
                store.accumulate(node, |gx| {
                    for i in 0..len {
                        gx[i] += g[off + i];
                    }
                });
            }
        })),
    );
    Tensor { tape: tape.clone(), node, values: Arc::new(vals), shape: vec![total] }
}

/// Concatenate matrices with equal row counts along the column axis.
pub fn concat_cols<T: Scalar>(tape: &Tape<T>, parts: &[&Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty());
    let rows = parts[0].shape[0];
    for p in parts {
        assert_eq!(p.shape.len(), 2, "concat_cols expects matrices");
        assert_eq!(p.shape[0], rows, "concat_cols row mismatch");
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.shape[1]).collect();
    let total_w: usize = widths.iter().sum();
    let mut vals = Vec::with_capacity(rows * total_w);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(widths.iter()) {
            vals.extend_from_slice(&p.values[r * w..(r + 1) * w]);
        }
    }
    let nodes: Vec<usize> = parts.iter().map(|p| p.node).collect();
    let node = tape.push_node(
        vals.len(),
        Some(Box::new(move |g, store| {
            let mut col_off = 0;
            for (&node, &w) in nodes.iter().zip(widths.iter()) {
                store.accumulate(node, |gx| {
                    for r in 0..rows {
                        for j in 0..w {
                            gx[r * w + j] += g[r * total_w + col_off + j];
                        }
                    }
                });
                col_off += w;
            }
        })),
    );
    Tensor { tape: tape.clone(), node, values: Arc::new(vals), shape: vec![rows, total_w] }
}

/// Stack vectors of equal length into a matrix (one per row).
pub fn stack_rows<T: Scalar>(tape: &Tape<T>, parts: &[Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty());
    let d = parts[0].numel();
    let mut vals = Vec::with_capacity(parts.len() * d);
    let mut nodes = Vec::with_capacity(parts.len());
    for p in parts {
        assert_eq!(p.shape.len(), 1, "stack_rows expects vectors");
        assert_eq!(p.numel(), d, "stack_rows length mismatch");
        nodes.push(p.node);
        vals.extend_from_slice(&p.values);
    }
    let node = tape.push_node(
        vals.len(),
        Some(Box::new(move |g, store| {
            for (r, &node) in nodes.iter().enumerate() {
                store.accumulate(node, |gx| {
                    for j in 0..d {
                        gx[j] += g[r * d + j];
                    }
                });
            }
        })),
    );
    Tensor { tape: tape.clone(), node, values: Arc::new(vals), shape: vec![parts.len(), d] }
}

/// Create a tensor from a custom op with an explicit backward closure.
pub(crate) fn push_custom<T: Scalar>(
    tape: &Tape<T>,
    values: Vec<T>,
    shape: Vec<usize>,
    backward: BackwardFn<T>,
) -> Tensor<T> {
    tape.make(values, shape, Some(backward))
}
