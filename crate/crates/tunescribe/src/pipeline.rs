//! Transcribe, train, evaluate and sonify, as driven by the command line.
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use tunescribe_core::decode::{
    decode_beats, decode_chords, decode_drums, decode_multi_instrument, decode_piano_notes, decode_vocal, DecodeParams,
};
use tunescribe_core::eval::{
    beat_f_measure, chord_accuracy, note_f1, stream_note_f1, MetricReport, BEAT_TOLERANCE_S, NOTE_ONSET_TOLERANCE_S,
};
use tunescribe_core::frontend::{audio_input, beat_input};
use tunescribe_core::midi::{read_midi, write_midi};
use tunescribe_core::models::{build_model, load_checkpoint, save_checkpoint, train, Model, ModelInput, Task, TrainError};
use tunescribe_core::synth::{sonify, SynthParams};
use tunescribe_core::synthetic::Corpus;
use tunescribe_core::time::CHORD_HOP_S;
use tunescribe_core::{BeatAnnotation, ChordSegment, Instrument, MidiDocument, TimeGrid};

use crate::audio::{read_wav, write_wav};
use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::{fsio, sidecar};

pub const CHECKPOINT_EXT: &str = "tsck";

/// The five command-line tasks. `music` covers both the piano and the
/// multi-instrument model; the checkpoint decides which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CliTask {
    Music,
    Drum,
    Vocal,
    Chord,
    Beat,
}

impl CliTask {
    pub const ALL: [CliTask; 5] = [CliTask::Music, CliTask::Drum, CliTask::Vocal, CliTask::Chord, CliTask::Beat];

    pub fn name(self) -> &'static str {
        match self {
            CliTask::Music => "music",
            CliTask::Drum => "drum",
            CliTask::Vocal => "vocal",
            CliTask::Chord => "chord",
            CliTask::Beat => "beat",
        }
    }

    /// Corpora this task trains and evaluates on.
    pub fn corpora(self) -> &'static [Corpus] {
        match self {
            CliTask::Music => &[Corpus::Music, Corpus::MultiInstrument],
            CliTask::Drum => &[Corpus::Drum],
            CliTask::Vocal => &[Corpus::Vocal],
            CliTask::Chord => &[Corpus::Chord],
            CliTask::Beat => &[Corpus::Beat],
        }
    }

    pub fn input_extensions(self) -> &'static [&'static str] {
        match self {
            CliTask::Beat => &["mid", "midi"],
            _ => &["wav"],
        }
    }

    pub fn output_suffix(self) -> &'static str {
        match self {
            CliTask::Chord => ".chords.txt",
            CliTask::Beat => ".beats.txt",
            _ => ".mid",
        }
    }
}

pub fn checkpoint_file(dir: &Path, task: Task) -> PathBuf {
    dir.join(format!("{}.{CHECKPOINT_EXT}", task.name()))
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    if !path.is_file() {
        return Err(Error::input(path, "missing checkpoint"));
    }
    load_checkpoint(&fsio::read(path)?).map_err(|e| Error::data(path, e))
}

pub fn write_checkpoint(path: &Path, model: &Model) -> Result<()> {
    fsio::write_atomic(path, &save_checkpoint(model))
}

/// The model(s) behind one task. Vocal transcription pairs a pitch model with
/// a segmentation model.
#[derive(Debug, Clone)]
pub struct Models {
    pub main: Model,
    pub seg: Option<Model>,
}

impl Models {
    /// Loads from `path`, a checkpoint file or a directory of
    /// `<task>.tsck` files (vocal needs the directory form).
    pub fn load(task: CliTask, path: &Path) -> Result<Self> {
        let expect = |m: Model, allowed: &[Task], path: &Path| {
            if allowed.contains(&m.config.task) {
                Ok(m)
            } else {
                Err(Error::data(path, format!("holds a {} model, not {}", m.config.task.name(), task.name())))
            }
        };
        if task == CliTask::Vocal {
            if !path.is_dir() {
                return Err(Error::input(path, "vocal needs a checkpoint directory with vocal_pitch and vocal_seg"));
            }
            let p = checkpoint_file(path, Task::VocalPitch);
            let s = checkpoint_file(path, Task::VocalSeg);
            return Ok(Self {
                main: expect(read_checkpoint(&p)?, &[Task::VocalPitch], &p)?,
                seg: Some(expect(read_checkpoint(&s)?, &[Task::VocalSeg], &s)?),
            });
        }
        let allowed: &[Task] = match task {
            CliTask::Music => &[Task::Music, Task::MultiInstrument],
            CliTask::Drum => &[Task::Drum],
            CliTask::Chord => &[Task::Chord],
            CliTask::Beat => &[Task::Beat],
            CliTask::Vocal => unreachable!(),
        };
        let file = if path.is_dir() {
            allowed
                .iter()
                .map(|&t| checkpoint_file(path, t))
                .find(|p| p.is_file())
                .unwrap_or_else(|| checkpoint_file(path, allowed[0]))
        } else {
            path.to_path_buf()
        };
        Ok(Self {
            main: expect(read_checkpoint(&file)?, allowed, &file)?,
            seg: None,
        })
    }

    pub fn task(&self) -> Task {
        self.main.config.task
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transcription {
    Notes(MidiDocument),
    Chords(Vec<ChordSegment>),
    Beats(BeatAnnotation),
}

impl Transcription {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(match self {
            Transcription::Notes(doc) => write_midi(doc).map_err(|e| Error::Internal(e.to_string()))?,
            Transcription::Chords(c) => sidecar::format_chords(c).into_bytes(),
            Transcription::Beats(b) => sidecar::format_beats(b).into_bytes(),
        })
    }
}

/// Model input for one input file: WAV for the audio tasks, MIDI for beats.
pub fn features_for(task: Task, path: &Path, cfg: &PipelineConfig) -> Result<ModelInput> {
    if task == Task::Beat {
        let doc = read_midi(&fsio::read(path)?).map_err(|e| Error::input(path, e))?;
        return beat_input(&doc).map_err(|e| Error::input(path, e));
    }
    let clip = read_wav(path)?;
    audio_input(task, &clip, &cfg.front_end()).map_err(|e| Error::input(path, e))
}

/// Forward pass and decoding.
pub fn run_models(models: &Models, x: &ModelInput, p: &DecodeParams) -> Result<Transcription> {
    let forward = |m: &Model| m.forward(x).map_err(|e| Error::Data(format!("{} model: {e}", m.config.task.name())));
    let dec = |e: tunescribe_core::decode::DecodeError| Error::Data(format!("decoding: {e}"));
    let out = forward(&models.main)?;
    Ok(match models.task() {
        Task::Music => Transcription::Notes(MidiDocument::single(Instrument::Piano, decode_piano_notes(&out, p).map_err(dec)?)),
        Task::MultiInstrument => Transcription::Notes(MidiDocument::from_streams(decode_multi_instrument(&out, p).map_err(dec)?)),
        Task::Drum => {
            let notes = decode_drums(&out, p).map_err(dec)?.iter().map(|d| d.to_note()).collect();
            Transcription::Notes(MidiDocument::single(Instrument::Drums, notes))
        }
        Task::VocalPitch | Task::VocalSeg => {
            let seg = models.seg.as_ref().ok_or_else(|| Error::Input("vocal needs a segmentation model".into()))?;
            let notes = decode_vocal(&out, &forward(seg)?, p).map_err(dec)?;
            Transcription::Notes(MidiDocument::single(Instrument::Vocal, notes))
        }
        Task::Chord => Transcription::Chords(decode_chords(&out, &TimeGrid::new(CHORD_HOP_S, out.frames())).map_err(dec)?),
        Task::Beat => Transcription::Beats(decode_beats(&out, p).map_err(dec)?),
    })
}

pub fn transcribe_file(input: &Path, output: &Path, models: &Models, cfg: &PipelineConfig) -> Result<()> {
    let x = features_for(models.task(), input, cfg)?;
    let t = run_models(models, &x, &cfg.decode_params())?;
    fsio::write_atomic(output, &t.to_bytes()?)?;
    log::info!("{} -> {}", input.display(), output.display());
    Ok(())
}

/// Input files of `task` named by `inputs`; directories contribute their
/// matching files in name order.
pub fn expand_inputs(task: CliTask, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::input(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.is_file()
                        && f.extension()
                            .and_then(|x| x.to_str())
                            .is_some_and(|x| task.input_extensions().contains(&x.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(Error::input(p, "no such file or directory"));
        }
    }
    if files.is_empty() {
        return Err(Error::Input(format!("no {} input files found", task.input_extensions().join("/"))));
    }
    Ok(files)
}

/// Where each input's result goes. A single input with an `output` that is
/// not a directory writes exactly there; otherwise results land in `output`
/// (or next to the input) named after the input.
pub fn output_paths(task: CliTask, inputs: &[PathBuf], output: Option<&Path>) -> Vec<PathBuf> {
    if let (Some(out), [_]) = (output, inputs) {
        if !out.is_dir() {
            return vec![out.to_path_buf()];
        }
    }
    inputs
        .iter()
        .map(|i| {
            let stem = i.file_stem().unwrap_or_default().to_string_lossy();
            let dir = output.map(Path::to_path_buf).unwrap_or_else(|| i.parent().unwrap_or(Path::new("")).to_path_buf());
            dir.join(format!("{stem}{}", task.output_suffix()))
        })
        .collect()
}

/// Transcribes every input on up to `workers` threads. Files are independent;
/// on failure the error of the first failing input (in input order) is
/// returned after all workers stop.
pub fn transcribe_batch(
    task: CliTask,
    inputs: &[PathBuf],
    output: Option<&Path>,
    models: &Models,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<Vec<PathBuf>> {
    let inputs = expand_inputs(task, inputs)?;
    let outputs = output_paths(task, &inputs, output);
    if let Some(out) = output.filter(|_| inputs.len() > 1) {
        std::fs::create_dir_all(out).map_err(|e| Error::input(out, e))?;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<()>>>> = Mutex::new((0..inputs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, inputs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                let r = transcribe_file(&inputs[i], &outputs[i], models, cfg);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    for r in results.into_inner().unwrap() {
        r.expect("every input ran")?;
    }
    Ok(outputs)
}

fn train_error(dataset: &Path, e: TrainError) -> Error {
    match e {
        TrainError::Config(_) => Error::Input(format!("train config: {e}")),
        TrainError::NonFinite { .. } => Error::Internal(e.to_string()),
        _ => Error::data(dataset, e),
    }
}

/// Trains a fresh model for each model of the dataset's corpus and writes
/// `<task>.tsck` plus a `<task>.loss.txt` record (epoch and mean loss per
/// line) to `out_dir`.
pub fn train_cli(task: CliTask, dataset_dir: &Path, cfg: &PipelineConfig, out_dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let ds = Dataset::open(dataset_dir)?;
    if !task.corpora().contains(&ds.corpus) {
        return Err(Error::data(dataset_dir, format!("{} dataset cannot train {}", ds.corpus, task.name())));
    }
    let mut written = Vec::new();
    for &t in ds.corpus.tasks() {
        let data = ds.examples(t)?;
        let mut model = build_model(cfg.model_config(t, seed)).map_err(|e| Error::Input(format!("model config: {e}")))?;
        let tc = tunescribe_core::models::TrainConfig {
            seed,
            ..cfg.train_config(t)
        };
        log::info!("training {} on {} clips for {} epochs", t.name(), data.len(), tc.epochs);
        let history = train(&mut model, &data, &tc).map_err(|e| train_error(dataset_dir, e))?;
        let ckpt = checkpoint_file(out_dir, t);
        write_checkpoint(&ckpt, &model)?;
        let mut record = String::new();
        for (i, l) in history.iter().enumerate() {
            writeln!(record, "{i}\t{l:.9}").unwrap();
        }
        fsio::write_text(&out_dir.join(format!("{}.loss.txt", t.name())), &record)?;
        if let (Some(first), Some(last)) = (history.first(), history.last()) {
            log::info!("{}: loss {first:.5} -> {last:.5}", t.name());
        }
        written.push(ckpt);
    }
    Ok(written)
}

fn pooled(reports: &[MetricReport]) -> MetricReport {
    let sum = |f: fn(&MetricReport) -> usize| reports.iter().map(f).sum();
    MetricReport::from_counts(sum(|r| r.n_ref), sum(|r| r.n_est), sum(|r| r.n_match))
}

/// Transcribes every clip of a dataset from its stored features and scores
/// the result against the ground truth. Note and beat counts are pooled over
/// clips; chord accuracy is weighted by duration.
pub fn evaluate_cli(task: CliTask, dataset_dir: &Path, models: &Models, cfg: &PipelineConfig) -> Result<String> {
    let ds = Dataset::open(dataset_dir)?;
    let fits = match models.task() {
        Task::MultiInstrument => ds.corpus == Corpus::MultiInstrument,
        Task::Music => ds.corpus == Corpus::Music,
        _ => task.corpora().contains(&ds.corpus),
    };
    if !fits {
        return Err(Error::data(dataset_dir, format!("{} dataset does not match a {} model", ds.corpus, models.task().name())));
    }
    let p = cfg.decode_params();
    let (mut notes, mut beats, mut downbeats) = (Vec::new(), Vec::new(), Vec::new());
    let (mut agree, mut total) = (0.0, 0.0);
    for id in &ds.index.clips {
        let est = run_models(models, &ds.input(id)?, &p)?;
        match est {
            Transcription::Notes(doc) => {
                let truth = ds.truth(id)?;
                notes.push(if models.task() == Task::MultiInstrument {
                    stream_note_f1(&truth.streams, &doc.streams, NOTE_ONSET_TOLERANCE_S)
                } else {
                    note_f1(&truth.all_notes(), &doc.all_notes(), NOTE_ONSET_TOLERANCE_S)
                });
            }
            Transcription::Chords(c) => {
                let truth = ds.chords(id)?;
                let acc = chord_accuracy(&truth, &c).map_err(|e| Error::Data(format!("{id}: {e}")))?;
                let d = truth.last().map_or(0.0, |s| s.end_s);
                agree += acc * d;
                total += d;
            }
            Transcription::Beats(b) => {
                let r = beat_f_measure(&ds.beats(id)?, &b, BEAT_TOLERANCE_S);
                beats.push(r.beats);
                downbeats.push(r.downbeats);
            }
        }
    }
    let mut out = format!("task={}\nclips={}\n", models.task().name(), ds.index.clips.len());
    if !notes.is_empty() {
        writeln!(out, "{}", pooled(&notes)).unwrap();
    }
    if total > 0.0 {
        writeln!(out, "accuracy={:.6}", agree / total).unwrap();
    }
    if !beats.is_empty() {
        for (name, r) in [("beat", pooled(&beats)), ("downbeat", pooled(&downbeats))] {
            for line in r.to_string().lines() {
                writeln!(out, "{name}_{line}").unwrap();
            }
        }
    }
    Ok(out)
}

/// Renders a MIDI file to a WAV file. An empty document gives silence and a
/// warning.
pub fn sonify_file(midi: &Path, out_wav: &Path, sample_rate: u32) -> Result<()> {
    let doc = read_midi(&fsio::read(midi)?).map_err(|e| Error::input(midi, e))?;
    let params = SynthParams {
        sample_rate,
        ..SynthParams::default()
    };
    write_wav(out_wav, &sonify(&doc, 0.0, &params))
}

