//! Synthetic datasets on disk.
//!
//! ```text
//! <dir>/dataset.toml            corpus, seed, clip ids
//! <dir>/<id>.wav                rendered audio (not for beat)
//! <dir>/<id>.mid                ground truth
//! <dir>/<id>.feat               model input
//! <dir>/<id>.<task>.target      target tensor, one per model of the corpus
//! <dir>/<id>.chords.txt         chord corpus only
//! <dir>/<id>.beats.txt          beat corpus only
//! ```
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tunescribe_core::midi::{read_midi, write_midi};
use tunescribe_core::models::{ModelInput, Task};
use tunescribe_core::synthetic::{synthesize, Corpus};
use tunescribe_core::{ActivationTensor, BeatAnnotation, ChordSegment, MidiDocument};

use crate::audio::write_wav;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::{fsio, sidecar, tensor_file};

pub const INDEX_FILE: &str = "dataset.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub corpus: String,
    pub seed: u64,
    pub clips: Vec<String>,
}

/// A dataset directory with a parsed index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub corpus: Corpus,
    pub index: DatasetIndex,
}

fn clip_id(i: usize) -> String {
    format!("clip_{i:04}")
}

/// Writes `n_clips` synthetic clips to `out_dir`. The same arguments always
/// give byte-identical files.
pub fn generate_synthetic_dataset(corpus: Corpus, n_clips: usize, seed: u64, out_dir: &Path, cfg: &PipelineConfig) -> Result<Dataset> {
    if n_clips == 0 {
        return Err(Error::Input("n_clips must be at least 1".into()));
    }
    let params = cfg.synthetic_params(seed);
    let mut ids = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let id = clip_id(i);
        let clip = synthesize(corpus, seed, i as u64, &params).map_err(|e| Error::Internal(format!("{id}: {e}")))?;
        let base = out_dir.join(&id);
        if let Some(audio) = &clip.audio {
            write_wav(&base.with_extension("wav"), audio)?;
        }
        let midi = write_midi(&clip.doc).map_err(|e| Error::Internal(format!("{id}: {e}")))?;
        fsio::write_atomic(&base.with_extension("mid"), &midi)?;
        fsio::write_atomic(&base.with_extension("feat"), &tensor_file::encode_input(&clip.input))?;
        for (task, t) in &clip.targets {
            fsio::write_atomic(&target_path(out_dir, &id, *task), &tensor_file::encode_tensor(t))?;
        }
        match corpus {
            Corpus::Chord => fsio::write_text(&out_dir.join(format!("{id}.chords.txt")), &sidecar::format_chords(&clip.chords))?,
            Corpus::Beat => {
                let beats = clip.beats.as_ref().expect("beat clips carry beats");
                fsio::write_text(&out_dir.join(format!("{id}.beats.txt")), &sidecar::format_beats(beats))?
            }
            _ => {}
        }
        ids.push(id);
    }
    let index = DatasetIndex {
        corpus: corpus.name().to_string(),
        seed,
        clips: ids,
    };
    fsio::write_text(&out_dir.join(INDEX_FILE), &toml::to_string(&index).expect("index serializes"))?;
    log::info!("wrote {n_clips} {corpus} clips to {}", out_dir.display());
    Ok(Dataset {
        dir: out_dir.to_path_buf(),
        corpus,
        index,
    })
}

fn target_path(dir: &Path, id: &str, task: Task) -> PathBuf {
    dir.join(format!("{id}.{}.target", task.name()))
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::input(dir, "dataset directory not found"));
        }
        let path = dir.join(INDEX_FILE);
        if !path.is_file() {
            return Err(Error::data(dir, format!("no {INDEX_FILE}; not a dataset directory")));
        }
        let bytes = fsio::read(&path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::data(&path, e))?;
        let index: DatasetIndex = toml::from_str(&text).map_err(|e| Error::data(&path, e.message()))?;
        let corpus = index.corpus.parse().map_err(|e| Error::data(&path, e))?;
        if index.clips.is_empty() {
            return Err(Error::data(dir, "dataset is empty"));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            corpus,
            index,
        })
    }

    fn file(&self, id: &str, suffix: &str) -> PathBuf {
        self.dir.join(format!("{id}.{suffix}"))
    }

    pub fn input(&self, id: &str) -> Result<ModelInput> {
        tensor_file::read_input(&self.file(id, "feat"))
    }

    pub fn target(&self, id: &str, task: Task) -> Result<ActivationTensor> {
        tensor_file::read_tensor(&target_path(&self.dir, id, task))
    }

    pub fn truth(&self, id: &str) -> Result<MidiDocument> {
        let path = self.file(id, "mid");
        read_midi(&fsio::read(&path)?).map_err(|e| Error::data(&path, e))
    }

    pub fn chords(&self, id: &str) -> Result<Vec<ChordSegment>> {
        let path = self.file(id, "chords.txt");
        let text = String::from_utf8(fsio::read(&path)?).map_err(|e| Error::data(&path, e))?;
        sidecar::parse_chords(&text).map_err(|e| Error::data(&path, e))
    }

    pub fn beats(&self, id: &str) -> Result<BeatAnnotation> {
        let path = self.file(id, "beats.txt");
        let text = String::from_utf8(fsio::read(&path)?).map_err(|e| Error::data(&path, e))?;
        sidecar::parse_beats(&text).map_err(|e| Error::data(&path, e))
    }

    /// `(input, target)` pairs for one model of the corpus.
    pub fn examples(&self, task: Task) -> Result<Vec<(ModelInput, ActivationTensor)>> {
        if !self.corpus.tasks().contains(&task) {
            return Err(Error::data(&self.dir, format!("a {} dataset has no {} targets", self.corpus, task.name())));
        }
        self.index
            .clips
            .iter()
            .map(|id| Ok((self.input(id)?, self.target(id, task)?)))
            .collect()
    }
}
