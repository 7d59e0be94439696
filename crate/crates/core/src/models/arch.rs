use alloc::format;
use alloc::string::String;
use alloc::vec;

use super::{ModelConfig, Task};
use crate::nn::layers::{
    conv, conv_relu, cross_attention, dense, init_residual_block, lstm, residual_block, self_attention,
    spatial_attention,
};
use crate::nn::{Bound, Graph, Init, ParamStore, Tensor, Var};
use crate::tensor::ActivationTensor;

/// Pooling of the two U-net levels, `(time, freq)`.
const UNET_POOL: [(usize, usize); 2] = [(2, 2), (4, 8)];
/// Frequency pooling between drum convolutions.
const DRUM_POOL: usize = 2;
/// Frequency pooling between vocal segmentation convolutions.
const SEG_POOL: usize = 4;

pub(crate) struct Heads {
    pub logits: Var,
    /// Chord segmentation logits, `[T, 1]`.
    pub seg_logits: Option<Var>,
}

fn pooled(n: usize, f: usize, times: usize) -> usize {
    (0..times).fold(n, |n, _| n.div_ceil(f))
}

pub(crate) fn init_params(cfg: &ModelConfig) -> ParamStore {
    let mut init = Init::new(cfg.seed);
    let (c, h) = (cfg.width, cfg.hidden);
    let out = cfg.out_channels;
    match cfg.task {
        Task::Music | Task::MultiInstrument => {
            init.conv("enc1", cfg.in_channels, c, 3, 3);
            for i in 0..cfg.depth {
                init_residual_block(&mut init, &res_name(i), c);
            }
            init.conv("enc2", c, 2 * c, 3, 3);
            init.attention("att", 2 * c);
            init.conv("dec2", 4 * c, 2 * c, 3, 3);
            init.conv("dec1", 3 * c, c, 3, 3);
            init.conv("head", c, out, 1, 1);
        }
        Task::Drum => {
            init.conv("conv1", cfg.in_channels, c, 3, 3);
            init.conv("conv2", c, c, 3, 3);
            init.conv("conv3", c, 2 * c, 3, 3);
            init.conv("conv4", 2 * c, 2 * c, 3, 3);
            init.conv("conv5", 2 * c, 2 * c, 3, 3);
            let f = pooled(cfg.input_bins, DRUM_POOL, 3);
            init.dense("fc1", 2 * c * f, h);
            init.attention("att", h);
            init.dense("fc2", h, h);
            init.dense("head", h, out);
        }
        Task::VocalPitch => {
            init.conv("conv1", cfg.in_channels, c, 3, 3);
            for i in 0..cfg.depth {
                init_residual_block(&mut init, &res_name(i), c);
            }
            init.conv("conv2", c, c, 3, 3);
            init.conv("head", c, out, 1, 1);
        }
        Task::VocalSeg => {
            init.conv("conv1", cfg.in_channels, c, 3, 3);
            for i in 0..cfg.depth {
                init_residual_block(&mut init, &res_name(i), c);
            }
            init.conv("conv2", c, c, 3, 3);
            let f = pooled(cfg.input_bins, SEG_POOL, 2);
            init.dense("fc1", c * f, h);
            init.dense("head", h, out);
        }
        Task::Chord => {
            init.dense("enc", cfg.input_bins, c);
            init.attention("enc_att", c);
            init.dense("seg", c, 1);
            init.dense("dec_in", c + 1, c);
            init.attention("dec_att", c);
            init.dense("head", c, out);
        }
        Task::Beat => {
            init.lstm("l1f", cfg.input_bins, h);
            init.lstm("l1b", cfg.input_bins, h);
            init.lstm("l2f", 2 * h, h);
            init.lstm("l2b", 2 * h, h);
            if cfg.attention {
                init.attention("att", 2 * h);
            }
            init.dense("head", 2 * h, out);
        }
    }
    init.store
}

fn res_name(i: usize) -> String {
    format!("res{i}")
}

pub(crate) fn build_graph(cfg: &ModelConfig, g: &mut Graph, p: &Bound, x: Var) -> Heads {
    let plain = |logits| Heads {
        logits,
        seg_logits: None,
    };
    match cfg.task {
        Task::Music | Task::MultiInstrument => {
            let (t, f) = (g.shape(x)[1], g.shape(x)[2]);
            let mut e1 = conv_relu(g, p, "enc1", x);
            for i in 0..cfg.depth {
                e1 = residual_block(g, p, &res_name(i), e1);
            }
            let [(t1, f1), (t2, f2)] = UNET_POOL;
            let p1 = g.avg_pool(e1, t1, f1);
            let e2 = conv_relu(g, p, "enc2", p1);
            let (h2, w2) = (g.shape(e2)[1], g.shape(e2)[2]);
            let p2 = g.avg_pool(e2, t2, f2);
            let b = spatial_attention(g, p, "att", p2);
            let u2 = g.upsample(b, t2, f2, h2, w2);
            let cat2 = g.concat_channels(&[u2, e2]);
            let d2 = conv_relu(g, p, "dec2", cat2);
            let u1 = g.upsample(d2, t1, f1, t, f);
            let cat1 = g.concat_channels(&[u1, e1]);
            let d1 = conv_relu(g, p, "dec1", cat1);
            plain(conv(g, p, "head", d1))
        }
        Task::Drum => {
            let mut y = conv_relu(g, p, "conv1", x);
            y = conv_relu(g, p, "conv2", y);
            y = g.avg_pool(y, 1, DRUM_POOL);
            y = conv_relu(g, p, "conv3", y);
            y = g.avg_pool(y, 1, DRUM_POOL);
            y = conv_relu(g, p, "conv4", y);
            y = g.avg_pool(y, 1, DRUM_POOL);
            y = conv_relu(g, p, "conv5", y);
            let rows = g.frame_rows(y);
            let h = dense(g, p, "fc1", rows);
            let h = g.relu(h);
            let a = self_attention(g, p, "att", h);
            let h = g.add(h, a);
            let h = dense(g, p, "fc2", h);
            let h = g.relu(h);
            plain(dense(g, p, "head", h))
        }
        Task::VocalPitch => {
            let mut y = conv_relu(g, p, "conv1", x);
            for i in 0..cfg.depth {
                y = residual_block(g, p, &res_name(i), y);
            }
            y = conv_relu(g, p, "conv2", y);
            plain(conv(g, p, "head", y))
        }
        Task::VocalSeg => {
            let mut y = conv_relu(g, p, "conv1", x);
            for i in 0..cfg.depth {
                y = residual_block(g, p, &res_name(i), y);
            }
            y = g.avg_pool(y, 1, SEG_POOL);
            y = conv_relu(g, p, "conv2", y);
            y = g.avg_pool(y, 1, SEG_POOL);
            let rows = g.frame_rows(y);
            let h = dense(g, p, "fc1", rows);
            let h = g.relu(h);
            plain(dense(g, p, "head", h))
        }
        Task::Chord => {
            let e = dense(g, p, "enc", x);
            let e = g.relu(e);
            let a = self_attention(g, p, "enc_att", e);
            let enc = g.add(e, a);
            let seg_logits = dense(g, p, "seg", enc);
            let seg = g.sigmoid(seg_logits);
            let d_in = g.concat_cols(&[enc, seg]);
            let d = dense(g, p, "dec_in", d_in);
            let d = g.relu(d);
            let a = cross_attention(g, p, "dec_att", d, enc);
            let d = g.add(d, a);
            Heads {
                logits: dense(g, p, "head", d),
                seg_logits: Some(seg_logits),
            }
        }
        Task::Beat => {
            let f1 = lstm(g, p, "l1f", x, false);
            let b1 = lstm(g, p, "l1b", x, true);
            let h1 = g.concat_cols(&[f1, b1]);
            let f2 = lstm(g, p, "l2f", h1, false);
            let b2 = lstm(g, p, "l2b", h1, true);
            let mut h2 = g.concat_cols(&[f2, b2]);
            if cfg.attention {
                let a = self_attention(g, p, "att", h2);
                h2 = g.add(h2, a);
            }
            plain(dense(g, p, "head", h2))
        }
    }
}

/// True when the head emits a `[C, T, F]` map rather than `[T, C]` rows.
pub(crate) fn is_grid_output(task: Task) -> bool {
    matches!(task, Task::Music | Task::MultiInstrument | Task::VocalPitch)
}

/// Head-layout tensor to `[frames, bins, channels]`.
pub(crate) fn to_activation(cfg: &ModelConfig, t: &Tensor) -> ActivationTensor {
    if is_grid_output(cfg.task) {
        let (c, frames, bins) = (t.shape[0], t.shape[1], t.shape[2]);
        let mut data = vec![0.0; c * frames * bins];
        for ch in 0..c {
            for k in 0..frames {
                for b in 0..bins {
                    data[(k * bins + b) * c + ch] = t.data[(ch * frames + k) * bins + b];
                }
            }
        }
        ActivationTensor::from_vec(frames, bins, c, data).expect("head shape")
    } else {
        let (frames, c) = (t.shape[0], t.shape[1]);
        ActivationTensor::from_vec(frames, 1, c, t.data.clone()).expect("head shape")
    }
}

/// Inverse of [`to_activation`] for targets.
pub(crate) fn from_activation(cfg: &ModelConfig, a: &ActivationTensor) -> Tensor {
    let [frames, bins, c] = a.shape();
    if is_grid_output(cfg.task) {
        let mut data = vec![0.0; c * frames * bins];
        for k in 0..frames {
            for b in 0..bins {
                for ch in 0..c {
                    data[(ch * frames + k) * bins + b] = a.get(k, b, ch);
                }
            }
        }
        Tensor::new(vec![c, frames, bins], data)
    } else {
        Tensor::new(vec![frames, bins * c], a.data().to_vec())
    }
}
