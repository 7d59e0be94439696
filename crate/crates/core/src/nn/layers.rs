//! Named parameter storage and the layer building blocks the task models are
//! assembled from.
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Ordered table of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(self.index(name).is_none(), "duplicate parameter {name}");
        self.entries.push((name.to_string(), t));
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index(name).map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Places every parameter on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound<'_> {
        let vars = self.entries.iter().map(|(_, t)| g.leaf(t.clone())).collect();
        Bound { store: self, vars }
    }
}

/// Parameters of a [`ParamStore`] placed on a graph.
pub struct Bound<'a> {
    store: &'a ParamStore,
    pub vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    /// Pairs already-placed variables with the store's names, in store order.
    pub fn from_vars(store: &'a ParamStore, vars: Vec<Var>) -> Self {
        assert_eq!(store.len(), vars.len());
        Self { store, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        let i = self.store.index(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    pub fn has(&self, name: &str) -> bool {
        self.store.index(name).is_some()
    }
}

/// Declares parameters with seeded initialisation.
pub struct Init {
    rng: ChaCha8Rng,
    pub store: ParamStore,
}

fn name2(prefix: &str, leaf: &str) -> String {
    let mut s = String::with_capacity(prefix.len() + leaf.len() + 1);
    s.push_str(prefix);
    s.push('.');
    s.push_str(leaf);
    s
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::new(),
        }
    }

    fn uniform(&mut self, shape: &[usize], limit: f64) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| if limit > 0.0 { self.rng.random_range(-limit..limit) } else { 0.0 })
            .collect();
        Tensor::new(shape.to_vec(), data)
    }

    /// `w: [n_in, n_out]`, `b: [n_out]`.
    pub fn dense(&mut self, name: &str, n_in: usize, n_out: usize) {
        let lim = Float::sqrt(6.0 / (n_in + n_out) as f64);
        let w = self.uniform(&[n_in, n_out], lim);
        self.store.insert(&name2(name, "w"), w);
        self.store.insert(&name2(name, "b"), Tensor::zeros(&[n_out]));
    }

    /// Dense layer with all-zero weights and bias.
    pub fn dense_zero(&mut self, name: &str, n_in: usize, n_out: usize) {
        self.store.insert(&name2(name, "w"), Tensor::zeros(&[n_in, n_out]));
        self.store.insert(&name2(name, "b"), Tensor::zeros(&[n_out]));
    }

    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, kh: usize, kw: usize) {
        let lim = Float::sqrt(6.0 / ((c_in + c_out) * kh * kw) as f64);
        let w = self.uniform(&[c_out, c_in, kh, kw], lim);
        self.store.insert(&name2(name, "w"), w);
        self.store.insert(&name2(name, "b"), Tensor::zeros(&[c_out]));
    }

    pub fn conv_zero(&mut self, name: &str, c_in: usize, c_out: usize, kh: usize, kw: usize) {
        self.store.insert(&name2(name, "w"), Tensor::zeros(&[c_out, c_in, kh, kw]));
        self.store.insert(&name2(name, "b"), Tensor::zeros(&[c_out]));
    }

    /// One LSTM direction: `w: [n_in, 4h]`, `u: [h, 4h]`, `b: [4h]` with
    /// forget-gate bias 1.
    pub fn lstm(&mut self, name: &str, n_in: usize, h: usize) {
        let lim = 1.0 / Float::sqrt(h as f64);
        let w = self.uniform(&[n_in, 4 * h], lim);
        let u = self.uniform(&[h, 4 * h], lim);
        let mut b = Tensor::zeros(&[4 * h]);
        b.data[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        self.store.insert(&name2(name, "w"), w);
        self.store.insert(&name2(name, "u"), u);
        self.store.insert(&name2(name, "b"), b);
    }

    /// Single-head dot-product attention with model width `d`.
    pub fn attention(&mut self, name: &str, d: usize) {
        for p in ["q", "k", "v", "o"] {
            self.dense(&name2(name, p), d, d);
        }
    }
}

pub fn dense(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Var {
    let y = g.matmul(x, p.var(&name2(name, "w")));
    g.add_bias(y, p.var(&name2(name, "b")))
}

pub fn conv(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Var {
    g.conv2d(x, p.var(&name2(name, "w")), p.var(&name2(name, "b")))
}

pub fn conv_relu(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Var {
    let y = conv(g, p, name, x);
    g.relu(y)
}

pub fn lstm(g: &mut Graph, p: &Bound, name: &str, x: Var, reverse: bool) -> Var {
    g.lstm(
        x,
        p.var(&name2(name, "w")),
        p.var(&name2(name, "u")),
        p.var(&name2(name, "b")),
        reverse,
    )
}

/// `softmax(q k^T / sqrt(d)) v`, projected; queries from `x`, keys and values
/// from `memory` (rows are positions).
pub fn cross_attention(g: &mut Graph, p: &Bound, name: &str, x: Var, memory: Var) -> Var {
    let d = g.value(x).cols();
    let q = dense(g, p, &name2(name, "q"), x);
    let k = dense(g, p, &name2(name, "k"), memory);
    let v = dense(g, p, &name2(name, "v"), memory);
    let kt = g.transpose(k);
    let s = g.matmul(q, kt);
    let s = g.scale(s, 1.0 / Float::sqrt(d as f64));
    let a = g.softmax_rows(s);
    let o = g.matmul(a, v);
    dense(g, p, &name2(name, "o"), o)
}

pub fn self_attention(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Var {
    cross_attention(g, p, name, x, x)
}

/// Self-attention across the positions of a `[C, T, F]` map, with a residual
/// connection; positions are the `T * F` cells and `C` is the model width.
pub fn spatial_attention(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Var {
    let shape = g.shape(x).to_vec();
    let (c, cells) = (shape[0], shape[1] * shape[2]);
    let flat = g.reshape(x, &[c, cells]);
    let rows = g.transpose(flat);
    let a = self_attention(g, p, name, rows);
    let a = g.transpose(a);
    let a = g.reshape(a, &shape);
    g.add(x, a)
}

/// `relu(x + conv(relu(conv(x))))`.
pub fn residual_block(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Var {
    let h = conv_relu(g, p, &name2(name, "a"), x);
    let h = conv(g, p, &name2(name, "b"), h);
    let s = g.add(x, h);
    g.relu(s)
}

pub fn init_residual_block(init: &mut Init, name: &str, c: usize) {
    init.conv(&name2(name, "a"), c, c, 3, 3);
    init.conv(&name2(name, "b"), c, c, 3, 3);
}
