//! Pipeline configuration. Every key is optional; `configs/default.toml`
//! lists them all with their defaults.
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tunescribe_core::decode::DecodeParams;
use tunescribe_core::features::{ChromaParams, FeatureParams};
use tunescribe_core::frontend::FrontEnd;
use tunescribe_core::models::{ModelConfig, Task, TrainConfig};
use tunescribe_core::nn::Optimizer;
use tunescribe_core::synth::SynthParams;
use tunescribe_core::synthetic::SyntheticParams;

use crate::error::{Error, Result};
use crate::fsio;

/// Environment variable naming the default checkpoint directory.
pub const CHECKPOINT_DIR_ENV: &str = "TUNESCRIBE_CHECKPOINT_DIR";
pub const DEFAULT_CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub window_s: f64,
    pub gamma_gc: f64,
    pub gamma_gcos: f64,
    pub quefrency_cutoff_s: f64,
    pub frequency_cutoff_hz: f64,
    /// Window of the 10 ms drum spectrogram.
    pub drum_window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChromaSection {
    pub window_hops: f64,
    pub bins_per_semitone: usize,
    pub partials: usize,
    pub partial_decay: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub bass_split: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub act_threshold: f64,
    pub onset_threshold: f64,
    pub min_note_s: f64,
    pub merge_gap_s: f64,
}

/// Overrides of the toy architecture for models trained from scratch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub hidden: Option<usize>,
    pub attention: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// "adam" or "sgd".
    pub optimizer: String,
    pub pos_weight: f64,
    pub seg_weight: f64,
    pub final_lr_ratio: f64,
    pub seed: u64,
    /// Per-task loss weight of each output channel, keyed by task name.
    pub channel_weights: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub clip_s: f64,
    pub max_notes: usize,
    pub low_pitch: u8,
    pub high_pitch: u8,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Falls back to the environment variable, then `checkpoints`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Where transcriptions go when --output is not given; else next to the input.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub spectral: SpectralSection,
    pub chroma: ChromaSection,
    pub decode: DecodeSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub synthetic: SyntheticSection,
    pub paths: PathsSection,
}

impl Default for SpectralSection {
    fn default() -> Self {
        let f = FeatureParams::default();
        Self {
            window_s: f.window_s,
            gamma_gc: f.gamma_gc,
            gamma_gcos: f.gamma_gcos,
            quefrency_cutoff_s: f.quefrency_cutoff_s,
            frequency_cutoff_hz: f.frequency_cutoff_hz,
            drum_window_s: FrontEnd::default().drum_window_s,
        }
    }
}

impl Default for ChromaSection {
    fn default() -> Self {
        let c = ChromaParams::default();
        Self {
            window_hops: c.window_hops,
            bins_per_semitone: c.bins_per_semitone,
            partials: c.partials,
            partial_decay: c.partial_decay,
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
            bass_split: c.bass_split,
        }
    }
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = DecodeParams::default();
        Self {
            act_threshold: d.act_threshold,
            onset_threshold: d.onset_threshold,
            min_note_s: d.min_note_s,
            merge_gap_s: d.merge_gap_s,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::for_task(Task::Music);
        let channel_weights = Task::ALL
            .iter()
            .map(|&task| (task, TrainConfig::for_task(task).channel_weights))
            .filter(|(_, w)| !w.is_empty())
            .map(|(task, w)| (task.name().to_string(), w))
            .collect();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: optimizer_name(t.optimizer).to_string(),
            pos_weight: t.pos_weight,
            seg_weight: t.seg_weight,
            final_lr_ratio: t.final_lr_ratio,
            seed: t.seed,
            channel_weights,
        }
    }
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticParams::default();
        Self {
            clip_s: s.clip_s,
            max_notes: s.max_notes,
            low_pitch: s.low_pitch,
            high_pitch: s.high_pitch,
            sample_rate: s.synth.sample_rate,
        }
    }
}

fn optimizer_name(o: Optimizer) -> &'static str {
    match o {
        Optimizer::Adam => "adam",
        Optimizer::Sgd => "sgd",
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsio::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::input(path, e))?;
        Self::parse(text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    /// `path` when given, else the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Input(format!("config: {what}")));
        self.decode_params().validate().map_err(|e| Error::Input(format!("config: {e}")))?;
        if !(self.spectral.window_s > 0.0 && self.spectral.drum_window_s > 0.0) {
            return bad("window lengths must be positive");
        }
        if !(self.chroma.window_hops > 0.0) || self.chroma.bins_per_semitone == 0 || self.chroma.partials == 0 {
            return bad("chroma window, bins and partials must be positive");
        }
        if self.train.batch_size == 0 || !(self.train.learning_rate > 0.0) {
            return bad("batch_size and learning_rate must be positive");
        }
        if !matches!(self.train.optimizer.as_str(), "adam" | "sgd") {
            return bad("optimizer must be \"adam\" or \"sgd\"");
        }
        for (task, w) in &self.train.channel_weights {
            let Some(t) = Task::ALL.iter().find(|t| t.name() == task) else {
                return bad(&format!("channel_weights: unknown task {task:?}"));
            };
            if w.len() != t.out_channels() {
                return bad(&format!("channel_weights.{task} needs {} entries", t.out_channels()));
            }
        }
        let s = &self.synthetic;
        if !(s.clip_s > 0.0) || s.max_notes == 0 || s.low_pitch > s.high_pitch || s.sample_rate == 0 {
            return bad("synthetic section out of range");
        }
        Ok(())
    }

    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            act_threshold: self.decode.act_threshold,
            onset_threshold: self.decode.onset_threshold,
            min_note_s: self.decode.min_note_s,
            merge_gap_s: self.decode.merge_gap_s,
        }
    }

    pub fn front_end(&self) -> FrontEnd {
        let s = &self.spectral;
        let c = &self.chroma;
        FrontEnd {
            spectral: FeatureParams {
                window_s: s.window_s,
                gamma_gc: s.gamma_gc,
                gamma_gcos: s.gamma_gcos,
                quefrency_cutoff_s: s.quefrency_cutoff_s,
                frequency_cutoff_hz: s.frequency_cutoff_hz,
                ..FeatureParams::default()
            },
            drum_window_s: s.drum_window_s,
            chroma: ChromaParams {
                window_hops: c.window_hops,
                bins_per_semitone: c.bins_per_semitone,
                partials: c.partials,
                partial_decay: c.partial_decay,
                max_iterations: c.max_iterations,
                tolerance: c.tolerance,
                bass_split: c.bass_split,
                ..ChromaParams::default()
            },
        }
    }

    pub fn model_config(&self, task: Task, seed: u64) -> ModelConfig {
        let base = ModelConfig::toy(task);
        let m = &self.model;
        ModelConfig {
            width: m.width.unwrap_or(base.width),
            depth: m.depth.unwrap_or(base.depth),
            hidden: m.hidden.unwrap_or(base.hidden),
            attention: m.attention.unwrap_or(base.attention),
            ..base
        }
        .with_seed(seed)
    }

    pub fn train_config(&self, task: Task) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: if t.optimizer == "sgd" { Optimizer::Sgd } else { Optimizer::Adam },
            channel_weights: t.channel_weights.get(task.name()).cloned().unwrap_or_default(),
            pos_weight: t.pos_weight,
            seg_weight: t.seg_weight,
            final_lr_ratio: t.final_lr_ratio,
            seed: t.seed,
        }
    }

    pub fn synthetic_params(&self, seed: u64) -> SyntheticParams {
        let s = &self.synthetic;
        SyntheticParams {
            clip_s: s.clip_s,
            max_notes: s.max_notes,
            low_pitch: s.low_pitch,
            high_pitch: s.high_pitch,
            synth: SynthParams {
                sample_rate: s.sample_rate,
                seed,
                ..SynthParams::default()
            },
            front_end: self.front_end(),
        }
    }

    /// Config value, then the environment variable, then `checkpoints`.
    pub fn checkpoint_dir(&self) -> PathBuf {
        self.paths
            .checkpoint_dir
            .clone()
            .or_else(|| std::env::var_os(CHECKPOINT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CHECKPOINT_DIR))
    }
}
