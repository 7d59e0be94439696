use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{self, is_grid_output};
use super::{Model, ModelError, ModelInput, Task};
use crate::nn::{Graph, OptState, Optimizer, Tensor};
use crate::tensor::ActivationTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Loss weight per output channel (beat vs downbeat for the beat model);
    /// empty means uniform.
    pub channel_weights: Vec<f64>,
    /// Extra weight on positive targets in the sigmoid losses.
    pub pos_weight: f64,
    /// Weight of the chord segmentation loss relative to the label loss.
    pub seg_weight: f64,
    /// Learning rate of the last epoch as a fraction of `learning_rate`; the
    /// rate follows a half cosine between the two. 1 keeps it constant.
    pub final_lr_ratio: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            learning_rate: 0.01,
            optimizer: Optimizer::Sgd,
            channel_weights: Vec::new(),
            pos_weight: 1.0,
            seg_weight: 0.5,
            final_lr_ratio: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Recipe that overfits small synthetic sets of `task` reliably: Adam
    /// with cosine decay, single-example steps and up-weighted positives (for
    /// chords this weights the boundary head). Onsets are the sparsest piano
    /// channel and get the largest weight.
    pub fn for_task(task: Task) -> Self {
        let channel_weights = match task {
            Task::Music => vec![1.0, 6.0, 3.0],
            _ => Vec::new(),
        };
        Self {
            epochs: 100,
            batch_size: 1,
            learning_rate: 0.01,
            optimizer: Optimizer::Adam,
            channel_weights,
            pos_weight: 5.0,
            final_lr_ratio: 0.1,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid train config: {0}")]
    Config(&'static str),
    #[error("target {index} has shape {found:?}, model output is {expected:?}")]
    TargetShape {
        index: usize,
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("target {index} has values outside [0, 1]")]
    TargetRange { index: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One training pair: feature and target activations shaped like the model output.
pub type Example = (ModelInput, ActivationTensor);

/// Loss and parameter gradients (in parameter-store order) for one example.
pub type SampleGrad = (f64, Vec<Tensor>);

fn validate(model: &Model, data: &[Example], tc: &TrainConfig) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if tc.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be positive"));
    }
    if !(tc.learning_rate >= 0.0) || !tc.learning_rate.is_finite() {
        return Err(TrainError::Config("learning_rate must be finite and non-negative"));
    }
    if !tc.channel_weights.is_empty() && tc.channel_weights.len() != model.config.out_channels {
        return Err(TrainError::Config("channel_weights needs one entry per output channel"));
    }
    if !(tc.final_lr_ratio >= 0.0 && tc.final_lr_ratio <= 1.0) {
        return Err(TrainError::Config("final_lr_ratio must lie in [0, 1]"));
    }
    if tc.channel_weights.iter().any(|w| !(*w >= 0.0)) || !(tc.pos_weight > 0.0) || !(tc.seg_weight >= 0.0) {
        return Err(TrainError::Config("loss weights must be non-negative"));
    }
    let cfg = &model.config;
    for (index, (input, target)) in data.iter().enumerate() {
        let bins = if is_grid_output(cfg.task) { cfg.pitch_bins } else { 1 };
        let expected = [input.frames(), bins, cfg.out_channels];
        if target.shape() != expected {
            return Err(TrainError::TargetShape {
                index,
                expected,
                found: target.shape(),
            });
        }
        if target.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(TrainError::TargetRange { index });
        }
    }
    Ok(())
}

/// Chord boundary targets: 1 where the argmax label changes from the previous frame.
fn boundaries(target: &Tensor) -> Tensor {
    let n = target.cols();
    let arg = |row: &[f64]| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    };
    let labels: Vec<usize> = target.data.chunks(n).map(arg).collect();
    let data = (0..labels.len())
        .map(|k| if k > 0 && labels[k] != labels[k - 1] { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(vec![labels.len(), 1], data)
}

/// Forward and backward pass for one example.
pub fn sample_gradients(model: &Model, input: &ModelInput, target: &ActivationTensor, tc: &TrainConfig) -> Result<SampleGrad, TrainError> {
    let cfg = &model.config;
    let x = model.input_tensor(input)?;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let xv = g.leaf(x);
    let heads = arch::build_graph(cfg, &mut g, &p, xv);
    let y = arch::from_activation(cfg, target);
    let loss = if cfg.task == Task::Chord {
        let ce = g.softmax_cross_entropy(heads.logits, &y);
        let seg = heads.seg_logits.expect("chord model has a segmentation head");
        let bt = boundaries(&y);
        let ones = Tensor::new(bt.shape.clone(), vec![1.0; bt.len()]);
        let bce = g.bce_with_logits(seg, &bt, &ones, tc.pos_weight);
        let bce = g.scale(bce, tc.seg_weight);
        g.add(ce, bce)
    } else {
        let c = cfg.out_channels;
        let w = |ch: usize| tc.channel_weights.get(ch).copied().unwrap_or(1.0);
        let weights = if is_grid_output(cfg.task) {
            let plane = y.len() / c;
            Tensor::new(y.shape.clone(), (0..y.len()).map(|i| w(i / plane)).collect())
        } else {
            Tensor::new(y.shape.clone(), (0..y.len()).map(|i| w(i % c)).collect())
        };
        g.bce_with_logits(heads.logits, &y, &weights, tc.pos_weight)
    };
    let value = g.value(loss).data[0];
    let mut grads = g.backward(loss);
    let per_param = p
        .vars
        .iter()
        .zip(model.params.iter())
        .map(|(&v, (_, t))| grads.take(v).unwrap_or_else(|| Tensor::zeros(&t.shape)))
        .collect();
    Ok((value, per_param))
}

fn scheduled_lr(tc: &TrainConfig, epoch: usize) -> f64 {
    if tc.epochs < 2 || tc.final_lr_ratio == 1.0 {
        return tc.learning_rate;
    }
    let x = epoch as f64 / (tc.epochs - 1) as f64;
    let w = 0.5 * (1.0 + num_traits::Float::cos(core::f64::consts::PI * x));
    tc.learning_rate * (tc.final_lr_ratio + (1.0 - tc.final_lr_ratio) * w)
}

/// Mini-batch gradient descent; returns the mean training loss of every epoch
/// and appends it to the model's history.
pub fn train(model: &mut Model, data: &[Example], tc: &TrainConfig) -> Result<Vec<f64>, TrainError> {
    train_with(model, data, tc, |m, batch| {
        batch.iter().map(|(x, y)| sample_gradients(m, x, y, tc)).collect()
    })
}

/// [`train`] with a caller-supplied batch evaluator, e.g. one that spreads the
/// examples of a batch over threads. The evaluator must return one
/// [`sample_gradients`] result per example, in order.
pub fn train_with<F>(model: &mut Model, data: &[Example], tc: &TrainConfig, mut eval_batch: F) -> Result<Vec<f64>, TrainError>
where
    F: FnMut(&Model, &[&Example]) -> Vec<Result<SampleGrad, TrainError>>,
{
    validate(model, data, tc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let shapes: Vec<&Tensor> = model.params.iter().map(|(_, t)| t).collect();
    let mut opt = OptState::new(tc.optimizer, tc.learning_rate, &shapes);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        opt.set_learning_rate(scheduled_lr(tc, epoch));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(tc.batch_size).enumerate() {
            let examples: Vec<&Example> = idx.iter().map(|&i| &data[i]).collect();
            let results = eval_batch(model, &examples);
            let mut sum: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                match &mut sum {
                    Some(s) => s.iter_mut().zip(&grads).for_each(|(a, b)| a.add_assign(b)),
                    None => sum = Some(grads),
                }
            }
            let mut grads = sum.unwrap_or_default();
            let finite = batch_loss.is_finite() && grads.iter().all(Tensor::is_finite);
            if !finite {
                log::error!("non-finite loss {batch_loss} at epoch {epoch}, batch {batch}");
                return Err(TrainError::NonFinite { epoch, batch });
            }
            let scale = 1.0 / idx.len() as f64;
            grads.iter_mut().for_each(|t| t.scale_assign(scale));
            opt.apply(model.params.tensors_mut(), &grads);
            total += batch_loss;
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    model.meta.epochs += tc.epochs as u32;
    model.meta.loss_history.extend_from_slice(&history);
    Ok(history)
}
