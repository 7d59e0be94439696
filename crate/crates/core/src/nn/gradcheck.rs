//! Central finite-difference checks of the analytic gradients, one case per
//! layer type.
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::layers::{self, Init};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv,
    Pooling,
    Reshaping,
    Activations,
    Recurrent,
    Attention,
    SigmoidBce,
    SoftmaxXent,
}

impl LayerKind {
    pub const ALL: [LayerKind; 9] = [
        LayerKind::Dense,
        LayerKind::Conv,
        LayerKind::Pooling,
        LayerKind::Reshaping,
        LayerKind::Activations,
        LayerKind::Recurrent,
        LayerKind::Attention,
        LayerKind::SigmoidBce,
        LayerKind::SoftmaxXent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv => "conv2d",
            LayerKind::Pooling => "pool/upsample",
            LayerKind::Reshaping => "concat/transpose/reshape",
            LayerKind::Activations => "relu/sigmoid/tanh/mul",
            LayerKind::Recurrent => "lstm",
            LayerKind::Attention => "attention",
            LayerKind::SigmoidBce => "sigmoid+bce",
            LayerKind::SoftmaxXent => "softmax+xent",
        }
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Builds a scalar from the leaves (in order) of a fresh graph.
type Builder = fn(&mut Graph, &[Var], &[Tensor]) -> Var;

fn case(kind: LayerKind, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Vec<Tensor>, Builder) {
    let mut r = |s: &[usize]| random(rng, s);
    match kind {
        LayerKind::Dense => (
            vec![r(&[4, 5]), r(&[5, 3]), r(&[3])],
            vec![r(&[4, 3])],
            |g, v, c| {
                let y = g.matmul(v[0], v[1]);
                let y = g.add_bias(y, v[2]);
                g.dot(y, &c[0])
            },
        ),
        LayerKind::Conv => (
            vec![r(&[2, 5, 6]), r(&[3, 2, 3, 5]), r(&[3])],
            vec![r(&[3, 5, 6])],
            |g, v, c| {
                let y = g.conv2d(v[0], v[1], v[2]);
                g.dot(y, &c[0])
            },
        ),
        LayerKind::Pooling => (
            vec![r(&[2, 5, 7])],
            vec![r(&[2, 5, 7])],
            |g, v, c| {
                let p = g.avg_pool(v[0], 2, 3);
                let u = g.upsample(p, 2, 3, 5, 7);
                let y = g.mul(u, v[0]);
                g.dot(y, &c[0])
            },
        ),
        LayerKind::Reshaping => (
            vec![r(&[2, 3, 4]), r(&[1, 3, 4]), r(&[3, 5])],
            vec![r(&[3, 17])],
            |g, v, c| {
                let cat = g.concat_channels(&[v[0], v[1]]);
                let rows = g.frame_rows(cat);
                let t = g.transpose(rows);
                let t = g.reshape(t, &[4, 3, 3]);
                let t = g.reshape(t, &[12, 3]);
                let back = g.transpose(t);
                let y = g.concat_cols(&[back, v[2]]);
                g.dot(y, &c[0])
            },
        ),
        LayerKind::Activations => (
            vec![r(&[3, 4]), r(&[3, 4])],
            vec![r(&[3, 4])],
            |g, v, c| {
                let a = g.relu(v[0]);
                let b = g.sigmoid(v[1]);
                let t = g.tanh(v[0]);
                let m = g.mul(a, b);
                let s = g.add(m, t);
                let s = g.scale(s, 1.7);
                g.dot(s, &c[0])
            },
        ),
        LayerKind::Recurrent => (
            vec![r(&[5, 3]), r(&[3, 8]), r(&[2, 8]), r(&[8]), r(&[3, 8]), r(&[2, 8]), r(&[8])],
            vec![r(&[5, 4])],
            |g, v, c| {
                let f = g.lstm(v[0], v[1], v[2], v[3], false);
                let b = g.lstm(v[0], v[4], v[5], v[6], true);
                let y = g.concat_cols(&[f, b]);
                g.dot(y, &c[0])
            },
        ),
        LayerKind::Attention => {
            let mut init = Init::new(7);
            init.attention("att", 3);
            let params: Vec<Tensor> = init.store.iter().map(|(_, t)| t.clone()).collect();
            let mut leaves = vec![r(&[3, 2, 2]), r(&[4, 3])];
            leaves.extend(params);
            (leaves, vec![r(&[3, 2, 2]), r(&[4, 3])], |g, v, c| {
                let mut init = Init::new(7);
                init.attention("att", 3);
                let bound = layers::Bound::from_vars(&init.store, v[2..].to_vec());
                let s = layers::spatial_attention(g, &bound, "att", v[0]);
                let mem = g.reshape(v[0], &[3, 4]);
                let mem = g.transpose(mem);
                let x = layers::cross_attention(g, &bound, "att", v[1], mem);
                let a = g.dot(s, &c[0]);
                let b = g.dot(x, &c[1]);
                g.add(a, b)
            })
        }
        LayerKind::SigmoidBce => {
            let target = Tensor::new(vec![3, 4], (0..12).map(|i| [0.0, 1.0, 0.5, 0.2][i % 4]).collect());
            let weights = Tensor::new(vec![3, 4], (0..12).map(|i| 0.5 + (i % 3) as f64).collect());
            (vec![r(&[3, 4])], vec![target, weights], |g, v, c| {
                g.bce_with_logits(v[0], &c[0], &c[1], 2.5)
            })
        }
        LayerKind::SoftmaxXent => {
            let mut t = r(&[3, 5]);
            t.data.iter_mut().for_each(|x| *x = x.abs());
            for row in t.data.chunks_mut(5) {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
            (vec![r(&[3, 5])], vec![t, r(&[3, 5])], |g, v, c| {
                let l = g.softmax_cross_entropy(v[0], &c[0]);
                let p = g.softmax_rows(v[0]);
                let d = g.dot(p, &c[1]);
                g.add(l, d)
            })
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    Float::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// Largest relative error `|analytic - numeric| / max(|analytic|, |numeric|, 1e-5)`
/// (vector 2-norms, per leaf) over the leaves of the case.
pub fn check_layer(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (leaves, consts, build) = case(kind, &mut rng);
    let eval = |ls: &[Tensor]| -> (Graph, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = ls.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars, &consts);
        (g, vars, out)
    };
    let (g, vars, out) = eval(&leaves);
    let grads = g.backward(out);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(vars[li]).map_or_else(|| vec![0.0; leaf.len()], |t| t.data.clone());
        let mut numeric = vec![0.0; leaf.len()];
        for j in 0..leaf.len() {
            let mut ls = leaves.clone();
            ls[li].data[j] += h;
            let (gp, _, op) = eval(&ls);
            ls[li].data[j] -= 2.0 * h;
            let (gm, _, om) = eval(&ls);
            numeric[j] = (gp.value(op).data[0] - gm.value(om).data[0]) / (2.0 * h);
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        // the floor keeps exactly-zero gradients (e.g. key biases, which
        // softmax cancels) from dividing rounding noise by rounding noise
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-5);
        worst = worst.max(norm(&diff) / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_matches_finite_differences() {
        for kind in LayerKind::ALL {
            for seed in 0..20 {
                let e = check_layer(kind, seed);
                assert!(e <= 1e-4, "{} seed {seed}: relative error {e}", kind.name());
            }
        }
    }
}
