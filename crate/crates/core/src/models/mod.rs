//! Toy-scale networks for the six transcription tasks.
//!
//! Every model maps one feature to per-frame activations with the same frame
//! count as its input. Parameter shapes follow from [`ModelConfig`] alone, so a
//! checkpoint only needs the config and the tensor values.
mod arch;
mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{sample_gradients, train, train_with, Example, SampleGrad, TrainConfig, TrainError};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{
    BinAxis, ChannelKind, ChromaFeature, SpectralFeature, SymbolicFeature, CHROMA_BINS, SYMBOLIC_DIM,
};
use crate::midi::{DrumClass, Instrument};
use crate::nn::{Graph, ParamStore, Tensor};
use crate::pitch::{PitchAxis, PIANO_BINS, PIANO_KEYS};
use crate::time::{TimeGrid, BEAT_HOP_S, CHORD_HOP_S, DRUM_HOP_S, MUSIC_HOP_S};
use crate::tensor::ActivationTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Music,
    MultiInstrument,
    Drum,
    VocalPitch,
    VocalSeg,
    Chord,
    Beat,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Music,
        Task::MultiInstrument,
        Task::Drum,
        Task::VocalPitch,
        Task::VocalSeg,
        Task::Chord,
        Task::Beat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Music => "music",
            Task::MultiInstrument => "multi_instrument",
            Task::Drum => "drum",
            Task::VocalPitch => "vocal_pitch",
            Task::VocalSeg => "vocal_seg",
            Task::Chord => "chord",
            Task::Beat => "beat",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Task::ALL.iter().position(|&t| t == self).unwrap() as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Task::ALL.get(c as usize).copied()
    }

    /// Output channel count fixed by the task.
    pub fn out_channels(self) -> usize {
        match self {
            Task::Music => 3,
            Task::MultiInstrument => Instrument::ENSEMBLE.len(),
            Task::Drum => DrumClass::ALL.len(),
            Task::VocalPitch => 1,
            Task::VocalSeg => 2,
            Task::Chord => 25,
            Task::Beat => 2,
        }
    }

    /// Whether the output is a softmax over channels (otherwise sigmoid).
    pub fn is_softmax(self) -> bool {
        self == Task::Chord
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input {axis} mismatch: model expects {expected}, got {found}")]
    Shape {
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("a {task} model cannot take {found} input")]
    InputKind { task: Task, found: &'static str },
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub task: Task,
    /// Base number of convolution channels (attention width for chord).
    pub width: usize,
    /// Residual blocks after the first convolution.
    pub depth: usize,
    /// Dense / recurrent width.
    pub hidden: usize,
    pub in_channels: usize,
    /// Bins per input frame (feature width for chord and beat).
    pub input_bins: usize,
    /// Bins per output frame for the time-pitch models.
    pub pitch_bins: usize,
    pub out_channels: usize,
    /// Optional attention layer (beat model only; the other models always
    /// have theirs).
    pub attention: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults for a task.
    pub fn toy(task: Task) -> Self {
        let base = ModelConfig {
            task,
            width: 4,
            depth: 1,
            hidden: 16,
            in_channels: 3,
            input_bins: PIANO_BINS,
            pitch_bins: PIANO_BINS,
            out_channels: task.out_channels(),
            attention: false,
            seed: 0,
        };
        match task {
            Task::Music | Task::MultiInstrument | Task::VocalPitch | Task::VocalSeg => base,
            Task::Drum => ModelConfig {
                width: 4,
                hidden: 16,
                in_channels: 2,
                input_bins: PIANO_KEYS,
                pitch_bins: PIANO_KEYS,
                ..base
            },
            Task::Chord => ModelConfig {
                width: 16,
                hidden: 16,
                in_channels: 1,
                input_bins: CHROMA_BINS,
                pitch_bins: 1,
                ..base
            },
            Task::Beat => ModelConfig {
                hidden: 25,
                in_channels: 1,
                input_bins: SYMBOLIC_DIM,
                pitch_bins: 1,
                ..base
            },
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ModelConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let t = self.task;
        if self.out_channels != t.out_channels() {
            return Err(ModelError::Config(format!(
                "{t} needs out_channels = {}, got {}",
                t.out_channels(),
                self.out_channels
            )));
        }
        for (name, v) in [
            ("width", self.width),
            ("hidden", self.hidden),
            ("in_channels", self.in_channels),
            ("input_bins", self.input_bins),
            ("pitch_bins", self.pitch_bins),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        let grid_out = matches!(t, Task::Music | Task::MultiInstrument | Task::VocalPitch);
        if grid_out && self.pitch_bins != self.input_bins {
            return Err(ModelError::Config(format!(
                "{t} maps input bins to pitch bins one to one ({} vs {})",
                self.input_bins, self.pitch_bins
            )));
        }
        if matches!(t, Task::Chord | Task::Beat) && self.in_channels != 1 {
            return Err(ModelError::Config(format!("{t} takes a single-channel matrix input")));
        }
        Ok(())
    }
}

/// Feature handed to [`Model::forward`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Spectral(SpectralFeature),
    Chroma(ChromaFeature),
    Symbolic(SymbolicFeature),
}

impl ModelInput {
    pub fn frames(&self) -> usize {
        match self {
            ModelInput::Spectral(f) => f.frames(),
            ModelInput::Chroma(f) => f.frames(),
            ModelInput::Symbolic(f) => f.frames(),
        }
    }

    /// Seeded uniform-random input of the shape a model with `config`
    /// expects, for shape checks and checkpoint probes.
    pub fn probe(config: &ModelConfig, frames: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.0..1.0)).collect() };
        match config.task {
            Task::Chord => ModelInput::Chroma(ChromaFeature {
                data: draw(frames * CHROMA_BINS),
                grid: TimeGrid::new(CHORD_HOP_S, frames),
                unconverged_frames: 0,
            }),
            Task::Beat => {
                let roll = draw(frames * 128).into_iter().map(|v| if v > 0.9 { 1.0 } else { 0.0 }).collect();
                ModelInput::Symbolic(SymbolicFeature {
                    pianoroll: roll,
                    spectral_flux: draw(frames),
                    ioi: draw(frames),
                    grid: TimeGrid::new(BEAT_HOP_S, frames),
                })
            }
            task => {
                let (hop, axis, channels) = if task == Task::Drum {
                    (
                        DRUM_HOP_S,
                        PitchAxis::PIANO_SEMITONE,
                        vec![ChannelKind::Spectrogram, ChannelKind::BeatPhase],
                    )
                } else {
                    (
                        MUSIC_HOP_S,
                        PitchAxis::PIANO_QUARTER,
                        vec![ChannelKind::Spectrogram, ChannelKind::GeneralizedCepstrum, ChannelKind::Gcos],
                    )
                };
                let mut channels = channels;
                channels.resize(config.in_channels, ChannelKind::Spectrogram);
                ModelInput::Spectral(SpectralFeature {
                    data: draw(frames * config.input_bins * config.in_channels),
                    bins: config.input_bins,
                    channels,
                    grid: TimeGrid::new(hop, frames),
                    axis: BinAxis::Pitch(axis),
                    sample_rate: crate::features::DEFAULT_SAMPLE_RATE,
                })
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ModelInput::Spectral(_) => "spectral",
            ModelInput::Chroma(_) => "chroma",
            ModelInput::Symbolic(_) => "symbolic",
        }
    }
}

impl From<SpectralFeature> for ModelInput {
    fn from(f: SpectralFeature) -> Self {
        ModelInput::Spectral(f)
    }
}

impl From<ChromaFeature> for ModelInput {
    fn from(f: ChromaFeature) -> Self {
        ModelInput::Chroma(f)
    }
}

impl From<SymbolicFeature> for ModelInput {
    fn from(f: SymbolicFeature) -> Self {
        ModelInput::Symbolic(f)
    }
}

/// Training bookkeeping carried in checkpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub epochs: u32,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub meta: TrainingMeta,
}

pub fn build_model(config: ModelConfig) -> Result<Model, ModelError> {
    config.validate()?;
    Ok(Model {
        config,
        params: arch::init_params(&config),
        meta: TrainingMeta::default(),
    })
}

pub fn count_params(model: &Model) -> usize {
    model.params.count()
}

impl Model {
    /// Sets the output layer to zero so every sigmoid output is exactly 0.5
    /// (and every softmax row uniform).
    pub fn zero_head(&mut self) {
        for (name, t) in self.params_mut() {
            if name.starts_with("head.") {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = (String, &mut Tensor)> {
        let names: Vec<String> = self.params.iter().map(|(n, _)| String::from(n)).collect();
        names.into_iter().zip(self.params.tensors_mut())
    }

    /// Network input as a graph tensor: `[C, T, F]` for spectral inputs,
    /// `[T, D]` for chroma and symbolic inputs.
    pub(crate) fn input_tensor(&self, input: &ModelInput) -> Result<Tensor, ModelError> {
        let cfg = &self.config;
        let mismatch = || ModelError::InputKind {
            task: cfg.task,
            found: input.kind(),
        };
        let check = |axis, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(ModelError::Shape { axis, expected, found })
            }
        };
        match (cfg.task, input) {
            (Task::Chord, ModelInput::Chroma(f)) => {
                check("bins", cfg.input_bins, CHROMA_BINS)?;
                check("frames", f.frames(), f.data.len() / CHROMA_BINS)?;
                Ok(Tensor::new(vec![f.frames(), CHROMA_BINS], f.data.clone()))
            }
            (Task::Beat, ModelInput::Symbolic(f)) => {
                check("bins", cfg.input_bins, SYMBOLIC_DIM)?;
                Ok(Tensor::new(vec![f.frames(), SYMBOLIC_DIM], f.to_matrix()))
            }
            (Task::Chord | Task::Beat, _) => Err(mismatch()),
            (_, ModelInput::Spectral(f)) => {
                check("bins", cfg.input_bins, f.bins)?;
                check("channels", cfg.in_channels, f.n_channels())?;
                let (t, b, c) = (f.frames(), f.bins, f.n_channels());
                let mut data = vec![0.0; t * b * c];
                for k in 0..t {
                    for j in 0..b {
                        for ch in 0..c {
                            data[(ch * t + k) * b + j] = f.get(k, j, ch);
                        }
                    }
                }
                Ok(Tensor::new(vec![c, t, b], data))
            }
            _ => Err(mismatch()),
        }
    }

    /// Activations for one input: sigmoid heads in `[0, 1]`, chord rows
    /// softmax-normalised. Shapes are `[frames, pitch_bins, channels]` for
    /// music, multi-instrument and vocal pitch, `[frames, 1, channels]`
    /// otherwise.
    pub fn forward(&self, input: &ModelInput) -> Result<ActivationTensor, ModelError> {
        let x = self.input_tensor(input)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xv = g.leaf(x);
        let heads = arch::build_graph(&self.config, &mut g, &p, xv);
        let out = if self.config.task.is_softmax() {
            g.softmax_rows(heads.logits)
        } else {
            g.sigmoid(heads.logits)
        };
        Ok(arch::to_activation(&self.config, g.value(out)))
    }
}

#[cfg(test)]
mod tests;
