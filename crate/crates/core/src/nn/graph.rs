//! Define-by-run reverse-mode autodiff over [`Tensor`]s.
//!
//! Image-like values are `[channels, time, freq]`; sequence values are
//! `[time, features]` matrices.
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

struct LstmCache {
    /// Per time step: gates `[i, f, g, o]` (4h), cell `c` (h), `tanh(c)` (h).
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Conv2d { x: Var, w: Var, b: Var },
    AvgPool { x: Var, fh: usize, fw: usize },
    Upsample { x: Var, fh: usize, fw: usize },
    ConcatChannels(Vec<Var>),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    Reshape(Var),
    FrameRows(Var),
    SoftmaxRows(Var),
    Lstm { x: Var, w: Var, u: Var, b: Var, reverse: bool, cache: Box<LstmCache> },
    BceWithLogits { logits: Var, target: Tensor, weights: Tensor, pos_weight: f64, norm: f64 },
    SoftmaxXent { logits: Var, target: Tensor },
    Dot(Var, Tensor),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of operations; values are computed eagerly as nodes are added.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node of a graph.
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + Float::exp(-z))
    } else {
        let e = Float::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + Float::ln_1p(Float::exp(-Float::abs(z)))
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    assert_eq!(t.shape.len(), 3, "expected [C, T, F], got {:?}", t.shape);
    (t.shape[0], t.shape[1], t.shape[2])
}

fn dims2(t: &Tensor) -> (usize, usize) {
    assert_eq!(t.shape.len(), 2, "expected a matrix, got {:?}", t.shape);
    (t.shape[0], t.shape[1])
}

/// Column range `j` of a `w`-wide row that reads source column `j + dj - pad`.
fn conv_cols(w: usize, dj: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(dj);
    let hi = (w + pad).saturating_sub(dj).min(w);
    (lo, hi.max(lo))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf (input or parameter).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims2(self.value(a));
        let (k2, n) = dims2(self.value(b));
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![0.0; m * n];
        matmul_acc(&self.value(a).data, &self.value(b).data, &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out), Op::MatMul(a, b))
    }

    /// Adds a length-`n` bias to every row of an `m x n` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (_, n) = dims2(self.value(x));
        assert_eq!(self.value(b).len(), n, "bias length");
        let mut out = self.value(x).clone();
        let bias = &self.nodes[b.0].value.data;
        for row in out.data.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        self.push(out, Op::AddBias(x, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape, self.value(b).shape, "add shapes");
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape, self.value(b).shape, "mul shapes");
        let mut out = self.value(a).clone();
        for (o, v) in out.data.iter_mut().zip(&self.nodes[b.0].value.data) {
            *o *= v;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale_assign(s);
        self.push(out, Op::Scale(x, s))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape.clone(), v.data.iter().map(|&z| f(z)).collect());
        self.push(out, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |z| z.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Float::tanh, Op::Tanh(x))
    }

    /// Stride-1 2-D convolution with zero "same" padding.
    /// `x: [C, H, W]`, `w: [O, C, kh, kw]` (odd kernel sizes), `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (c, h, wd) = dims3(self.value(x));
        let ws = &self.value(w).shape;
        assert_eq!(ws.len(), 4, "conv weight rank");
        let (o, kc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(kc, c, "conv input channels");
        assert!(kh % 2 == 1 && kw % 2 == 1, "conv kernel must be odd");
        let (ph, pw) = (kh / 2, kw / 2);
        let xd = &self.value(x).data;
        let wdat = &self.value(w).data;
        let bdat = &self.value(b).data;
        let plane = h * wd;
        let mut out = vec![0.0; o * plane];
        for oc in 0..o {
            let dst = &mut out[oc * plane..(oc + 1) * plane];
            dst.iter_mut().for_each(|v| *v = bdat[oc]);
            for ic in 0..c {
                let src = &xd[ic * plane..(ic + 1) * plane];
                for di in 0..kh {
                    for dj in 0..kw {
                        let wv = wdat[((oc * c + ic) * kh + di) * kw + dj];
                        if wv == 0.0 {
                            continue;
                        }
                        let (j0, j1) = conv_cols(wd, dj, pw);
                        for i in 0..h {
                            let si = i + di;
                            if si < ph || si - ph >= h {
                                continue;
                            }
                            let srow = &src[(si - ph) * wd..(si - ph + 1) * wd];
                            let drow = &mut dst[i * wd..(i + 1) * wd];
                            for j in j0..j1 {
                                drow[j] += wv * srow[j + dj - pw];
                            }
                        }
                    }
                }
            }
        }
        self.push(Tensor::new(vec![o, h, wd], out), Op::Conv2d { x, w, b })
    }

    /// Average pooling over `fh x fw` blocks; trailing partial blocks are
    /// averaged over the cells they contain.
    pub fn avg_pool(&mut self, x: Var, fh: usize, fw: usize) -> Var {
        let (c, h, w) = dims3(self.value(x));
        let (oh, ow) = (h.div_ceil(fh), w.div_ceil(fw));
        let xd = &self.value(x).data;
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    out[(ch * oh + i / fh) * ow + j / fw] += xd[(ch * h + i) * w + j];
                }
            }
            for oi in 0..oh {
                let rh = (h - oi * fh).min(fh);
                for oj in 0..ow {
                    let rw = (w - oj * fw).min(fw);
                    out[(ch * oh + oi) * ow + oj] /= (rh * rw) as f64;
                }
            }
        }
        self.push(Tensor::new(vec![c, oh, ow], out), Op::AvgPool { x, fh, fw })
    }

    /// Nearest-neighbour upsampling by `fh x fw`, cropped to `h x w`.
    pub fn upsample(&mut self, x: Var, fh: usize, fw: usize, h: usize, w: usize) -> Var {
        let (c, ih, iw) = dims3(self.value(x));
        assert!(h <= ih * fh && w <= iw * fw, "upsample target too large");
        let xd = &self.value(x).data;
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    out[(ch * h + i) * w + j] = xd[(ch * ih + i / fh) * iw + j / fw];
                }
            }
        }
        self.push(Tensor::new(vec![c, h, w], out), Op::Upsample { x, fh, fw })
    }

    /// Concatenation along the leading axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Var {
        let tail = self.value(xs[0]).shape[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &v in xs {
            let t = self.value(v);
            assert_eq!(t.shape[1..], tail[..], "concat trailing dims");
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        self.push(Tensor::new(shape, data), Op::ConcatChannels(xs.to_vec()))
    }

    /// Concatenation of matrices along columns.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        let rows = self.value(xs[0]).rows();
        let widths: Vec<usize> = xs
            .iter()
            .map(|&v| {
                let (r, c) = dims2(self.value(v));
                assert_eq!(r, rows, "concat_cols rows");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (&v, &wd) in xs.iter().zip(&widths) {
            let src = &self.value(v).data;
            for r in 0..rows {
                data[r * total + off..r * total + off + wd].copy_from_slice(&src[r * wd..(r + 1) * wd]);
            }
            off += wd;
        }
        self.push(Tensor::new(vec![rows, total], data), Op::ConcatCols(xs.to_vec()))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (m, n) = dims2(self.value(x));
        let src = &self.value(x).data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push(Tensor::new(vec![n, m], out), Op::Transpose(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x);
        assert_eq!(shape.iter().product::<usize>(), t.len(), "reshape size");
        let out = Tensor::new(shape.to_vec(), t.data.clone());
        self.push(out, Op::Reshape(x))
    }

    /// `[C, T, F] -> [T, C * F]` with column index `c * F + f`.
    pub fn frame_rows(&mut self, x: Var) -> Var {
        let (c, t, f) = dims3(self.value(x));
        let src = &self.value(x).data;
        let mut out = vec![0.0; t * c * f];
        for ch in 0..c {
            for k in 0..t {
                out[k * c * f + ch * f..k * c * f + (ch + 1) * f]
                    .copy_from_slice(&src[(ch * t + k) * f..(ch * t + k + 1) * f]);
            }
        }
        self.push(Tensor::new(vec![t, c * f], out), Op::FrameRows(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (_, n) = dims2(self.value(x));
        let mut out = self.value(x).clone();
        for row in out.data.chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Single-direction LSTM over the rows of `x: [T, in]`.
    /// `w: [in, 4h]`, `u: [h, 4h]`, `b: [4h]`, gate order `i, f, g, o`.
    /// Output `[T, h]` is indexed by original time even when `reverse`.
    pub fn lstm(&mut self, x: Var, w: Var, u: Var, b: Var, reverse: bool) -> Var {
        let (t_len, n_in) = dims2(self.value(x));
        let (wi, g4) = dims2(self.value(w));
        assert_eq!(wi, n_in, "lstm input width");
        let h = g4 / 4;
        assert_eq!(dims2(self.value(u)), (h, g4), "lstm recurrent shape");
        let xd = &self.value(x).data;
        let wd = &self.value(w).data;
        let ud = &self.value(u).data;
        let bd = &self.value(b).data;
        let mut out = vec![0.0; t_len * h];
        let mut gates = vec![0.0; t_len * g4];
        let mut cells = vec![0.0; t_len * h];
        let mut tanh_cells = vec![0.0; t_len * h];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut z = vec![0.0; g4];
        for s in 0..t_len {
            let t = if reverse { t_len - 1 - s } else { s };
            z.copy_from_slice(bd);
            matmul_acc(&xd[t * n_in..(t + 1) * n_in], wd, &mut z, 1, n_in, g4);
            matmul_acc(&h_prev, ud, &mut z, 1, h, g4);
            let gt = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let g = Float::tanh(z[2 * h + j]);
                let o = sigmoid(z[3 * h + j]);
                let c = f * c_prev[j] + i * g;
                let tc = Float::tanh(c);
                gt[j] = i;
                gt[h + j] = f;
                gt[2 * h + j] = g;
                gt[3 * h + j] = o;
                cells[t * h + j] = c;
                tanh_cells[t * h + j] = tc;
                out[t * h + j] = o * tc;
            }
            h_prev.copy_from_slice(&out[t * h..(t + 1) * h]);
            c_prev.copy_from_slice(&cells[t * h..(t + 1) * h]);
        }
        let cache = Box::new(LstmCache {
            gates,
            cells,
            tanh_cells,
        });
        self.push(
            Tensor::new(vec![t_len, h], out),
            Op::Lstm {
                x,
                w,
                u,
                b,
                reverse,
                cache,
            },
        )
    }

    /// Weighted binary cross-entropy on logits, normalised by the weight sum.
    /// `weights` broadcasts like `target` (same shape); `pos_weight` scales
    /// the positive term.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor, weights: &Tensor, pos_weight: f64) -> Var {
        let z = self.value(logits);
        assert_eq!(z.shape, target.shape, "bce target shape");
        assert_eq!(z.len(), weights.len(), "bce weight shape");
        let norm: f64 = weights.data.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let mut loss = 0.0;
        for ((&zi, &yi), &wi) in z.data.iter().zip(&target.data).zip(&weights.data) {
            loss += wi * (pos_weight * yi * softplus(-zi) + (1.0 - yi) * softplus(zi));
        }
        let op = Op::BceWithLogits {
            logits,
            target: target.clone(),
            weights: weights.clone(),
            pos_weight,
            norm,
        };
        self.push(Tensor::scalar(loss / norm), op)
    }

    /// Mean over rows of `-sum_k y_k ln softmax(z)_k`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &Tensor) -> Var {
        let z = self.value(logits);
        assert_eq!(z.shape, target.shape, "xent target shape");
        let (m, n) = dims2(z);
        let mut loss = 0.0;
        for (zr, yr) in z.data.chunks(n).zip(target.data.chunks(n)) {
            let mx = zr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + Float::ln(zr.iter().map(|v| Float::exp(v - mx)).sum::<f64>());
            loss += zr.iter().zip(yr).map(|(zi, yi)| yi * (lse - zi)).sum::<f64>();
        }
        let op = Op::SoftmaxXent {
            logits,
            target: target.clone(),
        };
        self.push(Tensor::scalar(loss / m.max(1) as f64), op)
    }

    /// `sum_i x_i r_i` for a constant `r`.
    pub fn dot(&mut self, x: Var, r: &Tensor) -> Var {
        let t = self.value(x);
        assert_eq!(t.len(), r.len(), "dot length");
        let v = t.data.iter().zip(&r.data).map(|(a, b)| a * b).sum();
        self.push(Tensor::scalar(v), Op::Dot(x, r.clone()))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape.clone(), vec![1.0]));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads(grads)
    }

    fn backprop(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, d: Tensor| match &mut grads[v.0] {
            Some(t) => t.add_assign(&d),
            slot @ None => *slot = Some(d),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = dims2(av);
                let n = bv.cols();
                let mut da = vec![0.0; m * k];
                matmul_bt_acc(&g.data, &bv.data, &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                matmul_at_acc(&av.data, &g.data, &mut db, m, k, n);
                acc(*a, Tensor::new(av.shape.clone(), da));
                acc(*b, Tensor::new(bv.shape.clone(), db));
            }
            Op::AddBias(x, b) => {
                let n = out.cols();
                let mut db = vec![0.0; n];
                for row in g.data.chunks(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*x, g.clone());
                acc(*b, Tensor::new(self.value(*b).shape.clone(), db));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
                let db = g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect();
                acc(*a, Tensor::new(av.shape.clone(), da));
                acc(*b, Tensor::new(bv.shape.clone(), db));
            }
            Op::Scale(x, s) => {
                let mut d = g.clone();
                d.scale_assign(*s);
                acc(*x, d);
            }
            Op::Relu(x) => {
                let d = g
                    .data
                    .iter()
                    .zip(&self.value(*x).data)
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(*x, Tensor::new(out.shape.clone(), d));
            }
            Op::Sigmoid(x) => {
                let d = g.data.iter().zip(&out.data).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                acc(*x, Tensor::new(out.shape.clone(), d));
            }
            Op::Tanh(x) => {
                let d = g.data.iter().zip(&out.data).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                acc(*x, Tensor::new(out.shape.clone(), d));
            }
            Op::Conv2d { x, w, b } => {
                let (dx, dw, db) = self.conv2d_backward(*x, *w, g);
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::AvgPool { x, fh, fw } => {
                let (c, h, w) = dims3(self.value(*x));
                let (oh, ow) = (out.shape[1], out.shape[2]);
                let mut d = vec![0.0; c * h * w];
                for ch in 0..c {
                    for i in 0..h {
                        let oi = i / fh;
                        let rh = (h - oi * fh).min(*fh);
                        for j in 0..w {
                            let oj = j / fw;
                            let rw = (w - oj * fw).min(*fw);
                            d[(ch * h + i) * w + j] = g.data[(ch * oh + oi) * ow + oj] / (rh * rw) as f64;
                        }
                    }
                }
                acc(*x, Tensor::new(vec![c, h, w], d));
            }
            Op::Upsample { x, fh, fw } => {
                let (c, ih, iw) = dims3(self.value(*x));
                let (h, w) = (out.shape[1], out.shape[2]);
                let mut d = vec![0.0; c * ih * iw];
                for ch in 0..c {
                    for i in 0..h {
                        for j in 0..w {
                            d[(ch * ih + i / fh) * iw + j / fw] += g.data[(ch * h + i) * w + j];
                        }
                    }
                }
                acc(*x, Tensor::new(vec![c, ih, iw], d));
            }
            Op::ConcatChannels(xs) => {
                let mut off = 0;
                for &v in xs {
                    let t = self.value(v);
                    acc(v, Tensor::new(t.shape.clone(), g.data[off..off + t.len()].to_vec()));
                    off += t.len();
                }
            }
            Op::ConcatCols(xs) => {
                let rows = out.rows();
                let total = out.cols();
                let mut off = 0;
                for &v in xs {
                    let wd = self.value(v).cols();
                    let mut d = Vec::with_capacity(rows * wd);
                    for r in 0..rows {
                        d.extend_from_slice(&g.data[r * total + off..r * total + off + wd]);
                    }
                    acc(v, Tensor::new(vec![rows, wd], d));
                    off += wd;
                }
            }
            Op::Transpose(x) => {
                let (n, m) = dims2(out);
                let mut d = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        d[i * n + j] = g.data[j * m + i];
                    }
                }
                acc(*x, Tensor::new(vec![m, n], d));
            }
            Op::Reshape(x) => {
                acc(*x, Tensor::new(self.value(*x).shape.clone(), g.data.clone()));
            }
            Op::FrameRows(x) => {
                let (c, t, f) = dims3(self.value(*x));
                let mut d = vec![0.0; c * t * f];
                for ch in 0..c {
                    for k in 0..t {
                        d[(ch * t + k) * f..(ch * t + k + 1) * f]
                            .copy_from_slice(&g.data[k * c * f + ch * f..k * c * f + (ch + 1) * f]);
                    }
                }
                acc(*x, Tensor::new(vec![c, t, f], d));
            }
            Op::SoftmaxRows(x) => {
                let n = out.cols();
                let mut d = vec![0.0; out.len()];
                for ((dr, yr), gr) in d.chunks_mut(n).zip(out.data.chunks(n)).zip(g.data.chunks(n)) {
                    let s: f64 = yr.iter().zip(gr).map(|(y, gv)| y * gv).sum();
                    for ((dv, y), gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *dv = y * (gv - s);
                    }
                }
                acc(*x, Tensor::new(out.shape.clone(), d));
            }
            Op::Lstm {
                x,
                w,
                u,
                b,
                reverse,
                cache,
            } => {
                let (dx, dw, du, db) = self.lstm_backward(*x, *w, *u, *reverse, cache, g);
                acc(*x, dx);
                acc(*w, dw);
                acc(*u, du);
                acc(*b, db);
            }
            Op::BceWithLogits {
                logits,
                target,
                weights,
                pos_weight,
                norm,
            } => {
                let s = g.data[0] / norm;
                let z = self.value(*logits);
                let d = z
                    .data
                    .iter()
                    .zip(&target.data)
                    .zip(&weights.data)
                    .map(|((&zi, &yi), &wi)| {
                        let p = sigmoid(zi);
                        // d/dz [pw*y*softplus(-z) + (1-y)*softplus(z)]
                        s * wi * ((1.0 - yi) * p - pos_weight * yi * (1.0 - p))
                    })
                    .collect();
                acc(*logits, Tensor::new(z.shape.clone(), d));
            }
            Op::SoftmaxXent { logits, target } => {
                let z = self.value(*logits);
                let (m, n) = dims2(z);
                let s = g.data[0] / m.max(1) as f64;
                let mut d = z.data.clone();
                for (dr, yr) in d.chunks_mut(n).zip(target.data.chunks(n)) {
                    softmax_in_place(dr);
                    let ysum: f64 = yr.iter().sum();
                    for (dv, y) in dr.iter_mut().zip(yr) {
                        *dv = s * (*dv * ysum - y);
                    }
                }
                acc(*logits, Tensor::new(z.shape.clone(), d));
            }
            Op::Dot(x, r) => {
                let mut d = r.clone();
                d.shape = self.value(*x).shape.clone();
                d.scale_assign(g.data[0]);
                acc(*x, d);
            }
        }
    }

    fn conv2d_backward(&self, x: Var, w: Var, g: &Tensor) -> (Tensor, Tensor, Tensor) {
        let xt = self.value(x);
        let wt = self.value(w);
        let (c, h, wd) = dims3(xt);
        let (o, kh, kw) = (wt.shape[0], wt.shape[2], wt.shape[3]);
        let (ph, pw) = (kh / 2, kw / 2);
        let plane = h * wd;
        let mut dx = vec![0.0; c * plane];
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; o];
        for oc in 0..o {
            let gsrc = &g.data[oc * plane..(oc + 1) * plane];
            db[oc] = gsrc.iter().sum();
            for ic in 0..c {
                let xsrc = &xt.data[ic * plane..(ic + 1) * plane];
                let dxp = &mut dx[ic * plane..(ic + 1) * plane];
                for di in 0..kh {
                    for dj in 0..kw {
                        let wi = ((oc * c + ic) * kh + di) * kw + dj;
                        let wv = wt.data[wi];
                        let (j0, j1) = conv_cols(wd, dj, pw);
                        let mut sum = 0.0;
                        for i in 0..h {
                            let si = i + di;
                            if si < ph || si - ph >= h {
                                continue;
                            }
                            let r = si - ph;
                            let grow = &gsrc[i * wd..(i + 1) * wd];
                            let xrow = &xsrc[r * wd..(r + 1) * wd];
                            for j in j0..j1 {
                                sum += grow[j] * xrow[j + dj - pw];
                            }
                            if wv != 0.0 {
                                let drow = &mut dxp[r * wd..(r + 1) * wd];
                                for j in j0..j1 {
                                    drow[j + dj - pw] += wv * grow[j];
                                }
                            }
                        }
                        dw[wi] += sum;
                    }
                }
            }
        }
        (
            Tensor::new(xt.shape.clone(), dx),
            Tensor::new(wt.shape.clone(), dw),
            Tensor::new(vec![o], db),
        )
    }

    fn lstm_backward(
        &self,
        x: Var,
        w: Var,
        u: Var,
        reverse: bool,
        cache: &LstmCache,
        g: &Tensor,
    ) -> (Tensor, Tensor, Tensor, Tensor) {
        let xt = self.value(x);
        let (t_len, n_in) = dims2(xt);
        let wt = self.value(w);
        let ut = self.value(u);
        let g4 = wt.cols();
        let h = g4 / 4;
        let mut dx = vec![0.0; t_len * n_in];
        let mut dw = vec![0.0; n_in * g4];
        let mut du = vec![0.0; h * g4];
        let mut db = vec![0.0; g4];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; g4];
        let zeros = vec![0.0; h];
        for s in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - s } else { s };
            let prev = if s == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let gt = &cache.gates[t * g4..(t + 1) * g4];
            let c_prev = prev.map_or(&zeros[..], |p| &cache.cells[p * h..(p + 1) * h]);
            for j in 0..h {
                let (i, f, gg, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = cache.tanh_cells[t * h + j];
                let dh = g.data[t * h + j] + dh_next[j];
                let dout = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dout * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            for (d, v) in db.iter_mut().zip(&dz) {
                *d += v;
            }
            let xrow = &xt.data[t * n_in..(t + 1) * n_in];
            matmul_at_acc(xrow, &dz, &mut dw, 1, n_in, g4);
            matmul_bt_acc(&dz, &wt.data, &mut dx[t * n_in..(t + 1) * n_in], 1, g4, n_in);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            if let Some(p) = prev {
                // h_prev is the output at step p
                let h_prev = lstm_output_row(p, h, cache);
                matmul_at_acc(&h_prev, &dz, &mut du, 1, h, g4);
                matmul_bt_acc(&dz, &ut.data, &mut dh_next, 1, g4, h);
            }
        }
        (
            Tensor::new(xt.shape.clone(), dx),
            Tensor::new(wt.shape.clone(), dw),
            Tensor::new(ut.shape.clone(), du),
            Tensor::new(vec![g4], db),
        )
    }

}

fn lstm_output_row(t: usize, h: usize, cache: &LstmCache) -> Vec<f64> {
    let g4 = 4 * h;
    (0..h)
        .map(|j| cache.gates[t * g4 + 3 * h + j] * cache.tanh_cells[t * h + j])
        .collect()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = Float::exp(*v - mx);
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
