//! Layers shared by the synthesis and recognition models. Layer structs hold
//! parameter handles; the values live in a [`ParamStore`] and are bound onto
//! a [`Tape`] per forward pass.

use rand_chacha::ChaCha8Rng;

use super::init::glorot_uniform;
use super::store::{ParamId, ParamStore};
use super::tensor::{concat_cols, push_custom, Scalar, Tape, Tensor};
use super::{NnError, Result};

pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            vec![out_dim, in_dim],
            glorot_uniform(rng, in_dim, out_dim, out_dim * in_dim),
        );
        let b = bias.then(|| store.add(format!("{name}.b"), vec![out_dim], vec![T::zero(); out_dim]));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let w = tape.param(store, self.w);
        let b = self.b.map(|b| tape.param(store, b));
        x.linear(&w, b.as_ref())
    }
}

/// Padding policy for "same"-length 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PadMode {
    Zero,
    /// Constant values outside the signal: `left` before index 0, `right`
    /// after the last position.
    Const { left: f64, right: f64 },
}

impl PadMode {
    fn left<T: Scalar>(self) -> T {
        match self {
            PadMode::Zero => T::zero(),
            PadMode::Const { left, .. } => T::from_f64(left),
        }
    }

    fn right<T: Scalar>(self) -> T {
        match self {
            PadMode::Zero => T::zero(),
            PadMode::Const { right, .. } => T::from_f64(right),
        }
    }
}

/// Same-length 1-D convolution over the time axis of a `[T, C_in]` input.
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        width: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(width % 2 == 1, "conv1d width must be odd for same padding");
        let fan_in = in_channels * width;
        let w = store.add(
            format!("{name}.w"),
            vec![out_channels, width, in_channels],
            glorot_uniform(rng, fan_in, out_channels, out_channels * width * in_channels),
        );
        let b = store.add(format!("{name}.b"), vec![out_channels], vec![T::zero(); out_channels]);
        Self { w, b, in_channels, out_channels, width }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        pad: PadMode,
    ) -> Result<Tensor<T>> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        conv1d_same(tape, x, &w, &b, pad)
    }
}

/// `x: [T, C_in]`, `w: [C_out, K, C_in]`, `b: [C_out]` -> `[T, C_out]`.
pub fn conv1d_same<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    pad: PadMode,
) -> Result<Tensor<T>> {
    if x.shape().len() != 2 || w.shape().len() != 3 || x.shape()[1] != w.shape()[2] {
        return Err(NnError::ShapeMismatch {
            op: "conv1d",
            detail: format!("x {:?} vs w {:?}", x.shape(), w.shape()),
        });
    }
    let (t_len, c_in) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[0], w.shape()[1]);
    assert!(k % 2 == 1, "conv1d width must be odd");
    let half = k / 2;
    let (left_pad, right_pad) = (pad.left::<T>(), pad.right::<T>());

    let x_vals = x.values().to_vec();
    let w_vals = w.values().to_vec();
    let sample = |t: isize, c: usize| -> T {
        if t < 0 {
            left_pad
        } else if t as usize >= t_len {
            right_pad
        } else {
            x_vals[t as usize * c_in + c]
        }
    };

    let mut out = vec![T::zero(); t_len * c_out];
    for t in 0..t_len {
        for co in 0..c_out {
            let mut acc = b.values()[co];
            for dk in 0..k {
                let src = t as isize + dk as isize - half as isize;
                for ci in 0..c_in {
                    acc += sample(src, ci) * w_vals[(co * k + dk) * c_in + ci];
                }
            }
            out[t * c_out + co] = acc;
        }
    }

    let (x_node, w_node, b_node) = (x.node_id(), w.node_id(), b.node_id());
    let backward = Box::new(move |g: &[T], store: &mut super::tensor::GradStore<T>| {
        store.accumulate(x_node, |gx| {
            for t in 0..t_len {
                for co in 0..c_out {
                    let g_tc = g[t * c_out + co];
                    if g_tc == T::zero() {
                        continue;
                    }
                    for dk in 0..k {
                        let src = t as isize + dk as isize - half as isize;
                        if src < 0 || src as usize >= t_len {
                            continue;
                        }
                        for ci in 0..c_in {
                            gx[src as usize * c_in + ci] += g_tc * w_vals[(co * k + dk) * c_in + ci];
                        }
                    }
                }
            }
        });
        store.accumulate(w_node, |gw| {
            for t in 0..t_len {
                for co in 0..c_out {
                    let g_tc = g[t * c_out + co];
                    if g_tc == T::zero() {
                        continue;
                    }
                    for dk in 0..k {
                        let src = t as isize + dk as isize - half as isize;
                        for ci in 0..c_in {
                            let v = if src < 0 {
                                left_pad
                            } else if src as usize >= t_len {
                                right_pad
                            } else {
                                x_vals[src as usize * c_in + ci]
                            };
                            gw[(co * k + dk) * c_in + ci] += g_tc * v;
                        }
                    }
                }
            }
        });
        store.accumulate(b_node, |gb| {
            for t in 0..t_len {
                for co in 0..c_out {
                    gb[co] += g[t * c_out + co];
                }
            }
        });
    });
    Ok(push_custom(tape, out, vec![t_len, c_out], backward))
}

/// Square-kernel strided 2-D convolution with "same" padding, channels-last
/// `[H, W, C]` layout.
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = store.add(
            format!("{name}.w"),
            vec![out_channels, kernel, kernel, in_channels],
            glorot_uniform(rng, fan_in, out_channels, out_channels * kernel * kernel * in_channels),
        );
        let b = store.add(format!("{name}.b"), vec![out_channels], vec![T::zero(); out_channels]);
        Self { w, b, in_channels, out_channels, kernel, stride }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if x.shape().len() != 3 || x.shape()[2] != self.in_channels {
            return Err(NnError::ShapeMismatch {
                op: "conv2d",
                detail: format!("x {:?} vs in_channels {}", x.shape(), self.in_channels),
            });
        }
        let (h, wdt, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, k, s) = (self.out_channels, self.kernel, self.stride);
        let out_h = h.div_ceil(s);
        let out_w = wdt.div_ceil(s);
        let pad_h = ((out_h - 1) * s + k).saturating_sub(h) / 2;
        let pad_w = ((out_w - 1) * s + k).saturating_sub(wdt) / 2;

        let wt = tape.param(store, self.w);
        let bt = tape.param(store, self.b);
        let x_vals = x.values().to_vec();
        let w_vals = wt.values().to_vec();

        let mut out = vec![T::zero(); out_h * out_w * c_out];
        for oy in 0..out_h {
            for ox in 0..out_w {
                for co in 0..c_out {
                    let mut acc = bt.values()[co];
                    for ky in 0..k {
                        let sy = (oy * s + ky) as isize - pad_h as isize;
                        if sy < 0 || sy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let sx = (ox * s + kx) as isize - pad_w as isize;
                            if sx < 0 || sx as usize >= wdt {
                                continue;
                            }
                            let x_off = (sy as usize * wdt + sx as usize) * c_in;
                            let w_off = ((co * k + ky) * k + kx) * c_in;
                            for ci in 0..c_in {
                                acc += x_vals[x_off + ci] * w_vals[w_off + ci];
                            }
                        }
                    }
                    out[(oy * out_w + ox) * c_out + co] = acc;
                }
            }
        }

        let (x_node, w_node, b_node) = (x.node_id(), wt.node_id(), bt.node_id());
        let backward = Box::new(move |g: &[T], gs: &mut super::tensor::GradStore<T>| {
            gs.accumulate(x_node, |gx| {
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        for co in 0..c_out {
                            let g_o = g[(oy * out_w + ox) * c_out + co];
                            if g_o == T::zero() {
                                continue;
                            }
                            for ky in 0..k {
                                let sy = (oy * s + ky) as isize - pad_h as isize;
                                if sy < 0 || sy as usize >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let sx = (ox * s + kx) as isize - pad_w as isize;
                                    if sx < 0 || sx as usize >= wdt {
                                        continue;
                                    }
                                    let x_off = (sy as usize * wdt + sx as usize) * c_in;
                                    let w_off = ((co * k + ky) * k + kx) * c_in;
                                    for ci in 0..c_in {
                                        gx[x_off + ci] += g_o * w_vals[w_off + ci];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            gs.accumulate(w_node, |gw| {
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        for co in 0..c_out {
                            let g_o = g[(oy * out_w + ox) * c_out + co];
                            if g_o == T::zero() {
                                continue;
                            }
                            for ky in 0..k {
                                let sy = (oy * s + ky) as isize - pad_h as isize;
                                if sy < 0 || sy as usize >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let sx = (ox * s + kx) as isize - pad_w as isize;
                                    if sx < 0 || sx as usize >= wdt {
                                        continue;
                                    }
                                    let x_off = (sy as usize * wdt + sx as usize) * c_in;
                                    let w_off = ((co * k + ky) * k + kx) * c_in;
                                    for ci in 0..c_in {
                                        gw[w_off + ci] += g_o * x_vals[x_off + ci];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            gs.accumulate(b_node, |gb| {
                for o in 0..out_h * out_w {
                    for co in 0..c_out {
                        gb[co] += g[o * c_out + co];
                    }
                }
            });
        });
        Ok(push_custom(tape, out, vec![out_h, out_w, c_out], backward))
    }
}

/// Recurrent hidden and cell state of one LSTM direction.
#[derive(Clone)]
pub struct LstmState<T: Scalar> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

/// Standard LSTM cell, gate order (input, forget, candidate, output) in the
/// stacked `4H` parameter layout.
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let wx = store.add(
            format!("{name}.wx"),
            vec![4 * hidden, input_dim],
            glorot_uniform(rng, input_dim, hidden, 4 * hidden * input_dim),
        );
        let wh = store.add(
            format!("{name}.wh"),
            vec![4 * hidden, hidden],
            glorot_uniform(rng, hidden, hidden, 4 * hidden * hidden),
        );
        // Forget gate biased open at init so state and gradients carry
        // across steps from the start.
        let mut bias = vec![T::zero(); 4 * hidden];
        for v in bias.iter_mut().take(2 * hidden).skip(hidden) {
            *v = T::one();
        }
        let b = store.add(format!("{name}.b"), vec![4 * hidden], bias);
        Self { wx, wh, b, input_dim, hidden }
    }

    pub fn zero_state<T: Scalar>(&self, tape: &Tape<T>) -> LstmState<T> {
        LstmState {
            h: tape.constant(vec![T::zero(); self.hidden], vec![self.hidden]),
            c: tape.constant(vec![T::zero(); self.hidden], vec![self.hidden]),
        }
    }

    /// One step from a precomputed input projection (`x W_x^T + b`).
    fn step_from_pre<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        pre: &Tensor<T>,
        state: &LstmState<T>,
    ) -> Result<LstmState<T>> {
        let wh = tape.param(store, self.wh);
        let gates = pre.add(&state.h.linear(&wh, None)?)?;
        let hh = self.hidden;
        let i = gates.slice(0, hh).sigmoid();
        let f = gates.slice(hh, 2 * hh).sigmoid();
        let g = gates.slice(2 * hh, 3 * hh).tanh();
        let o = gates.slice(3 * hh, 4 * hh).sigmoid();
        let c = f.mul(&state.c)?.add(&i.mul(&g)?)?;
        let h = o.mul(&c.tanh())?;
        Ok(LstmState { h, c })
    }

    pub fn step<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        state: &LstmState<T>,
    ) -> Result<LstmState<T>> {
        let wx = tape.param(store, self.wx);
        let b = tape.param(store, self.b);
        let pre = x.linear(&wx, Some(&b))?;
        self.step_from_pre(tape, store, &pre, state)
    }

    /// Run over a `[T, D]` sequence, returning all hidden states `[T, H]`.
    pub fn run_seq<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        xs: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let wx = tape.param(store, self.wx);
        let b = tape.param(store, self.b);
        let pre = xs.linear(&wx, Some(&b))?; // [T, 4H]
        let mut state = self.zero_state(tape);
        let mut hs = Vec::with_capacity(xs.shape()[0]);
        for t in 0..xs.shape()[0] {
            state = self.step_from_pre(tape, store, &pre.row(t), &state)?;
            hs.push(state.h.clone());
        }
        Ok(super::tensor::stack_rows(tape, &hs))
    }
}

/// Bi-directional LSTM: forward and backward passes concatenated per step.
pub struct Blstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
    pub hidden: usize,
}

impl Blstm {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            fwd: LstmCell::new(store, &format!("{name}.fwd"), input_dim, hidden, rng),
            bwd: LstmCell::new(store, &format!("{name}.bwd"), input_dim, hidden, rng),
            hidden,
        }
    }

    /// `[T, D] -> [T, 2H]`, forward direction in the first `H` columns.
    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        xs: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let f = self.fwd.run_seq(tape, store, xs)?;
        let b = self.bwd.run_seq(tape, store, &xs.reverse_rows())?.reverse_rows();
        Ok(concat_cols(tape, &[&f, &b]))
    }
}

/// Trainable lookup table mapping symbol ids to dense rows.
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let table =
            store.add(format!("{name}.table"), vec![vocab, dim], glorot_uniform(rng, dim, dim, vocab * dim));
        Self { table, vocab, dim }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        ids: &[usize],
    ) -> Result<Tensor<T>> {
        for &id in ids {
            if id >= self.vocab {
                return Err(NnError::LabelOutOfRange { label: id, vocab: self.vocab });
            }
        }
        let table = tape.param(store, self.table);
        let dim = self.dim;
        let mut vals = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            vals.extend_from_slice(&table.values()[id * dim..(id + 1) * dim]);
        }
        let ids_owned = ids.to_vec();
        let table_node = table.node_id();
        let backward = Box::new(move |g: &[T], gs: &mut super::tensor::GradStore<T>| {
            gs.accumulate(table_node, |gt| {
                for (r, &id) in ids_owned.iter().enumerate() {
                    for j in 0..dim {
                        gt[id * dim + j] += g[r * dim + j];
                    }
                }
            });
        });
        Ok(push_custom(tape, vals, vec![ids.len(), dim], backward))
    }
}
