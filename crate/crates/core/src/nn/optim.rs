use alloc::vec::Vec;

use num_traits::Float;

use super::tensor::Tensor;

/// Update rule applied to a parameter list in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    /// Adam with the usual `(0.9, 0.999, 1e-8)` constants.
    Adam,
}

pub(crate) struct OptState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptState {
    pub(crate) fn new(kind: Optimizer, lr: f64, params: &[&Tensor]) -> Self {
        let zeros = || params.iter().map(|t| Tensor::zeros(&t.shape)).collect();
        Self {
            kind,
            lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub(crate) fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub(crate) fn apply<'a>(&mut self, params: impl Iterator<Item = &'a mut Tensor>, grads: &[Tensor]) {
        self.step += 1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let c1 = 1.0 - Float::powi(b1, self.step);
        let c2 = 1.0 - Float::powi(b2, self.step);
        for (i, (p, g)) in params.zip(grads).enumerate() {
            match self.kind {
                Optimizer::Sgd => {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= self.lr * d;
                    }
                }
                Optimizer::Adam => {
                    let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
                    for (j, (w, d)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        m[j] = b1 * m[j] + (1.0 - b1) * d;
                        v[j] = b2 * v[j] + (1.0 - b2) * d * d;
                        *w -= self.lr * (m[j] / c1) / (Float::sqrt(v[j] / c2) + eps);
                    }
                }
            }
        }
    }
}
