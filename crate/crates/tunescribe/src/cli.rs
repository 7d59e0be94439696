//! Command-line surface: `tunescribe <task> <verb> [OPTIONS] INPUT...` plus
//! a few utilities.
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tunescribe_core::synthetic::Corpus;

use crate::config::PipelineConfig;
use crate::dataset::generate_synthetic_dataset;
use crate::download::{download_dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::pipeline::{evaluate_cli, sonify_file, train_cli, transcribe_batch, CliTask, Models};
use crate::{fixtures, fsio};

#[derive(Debug, Parser)]
#[command(name = "tunescribe", version, about = "Automatic music transcription workbench")]
pub struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Piano or multi-instrument notes from WAV
    Music {
        #[command(subcommand)]
        verb: Verb,
    },
    /// Kick, snare and hi-hat hits from WAV
    Drum {
        #[command(subcommand)]
        verb: Verb,
    },
    /// Sung melody notes from WAV
    Vocal {
        #[command(subcommand)]
        verb: Verb,
    },
    /// Major/minor chord segments from WAV
    Chord {
        #[command(subcommand)]
        verb: Verb,
    },
    /// Beats and downbeats from MIDI
    Beat {
        #[command(subcommand)]
        verb: Verb,
    },
    /// Write a synthetic dataset
    Generate(GenerateArgs),
    /// Render a MIDI file to WAV
    Sonify(SonifyArgs),
    /// Fetch and verify a dataset by manifest
    Download(DownloadArgs),
    /// Print the configuration in effect (defaults unless --config)
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Regenerate the bundled fixtures and toy checkpoints
    #[command(hide = true)]
    Fixtures {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Transcribe input files or directories
    Transcribe(TaskArgs),
    /// Train from a dataset directory
    Train(TaskArgs),
    /// Score a checkpoint on a dataset directory
    Evaluate(TaskArgs),
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Checkpoint file or directory [default: config, then $TUNESCRIBE_CHECKPOINT_DIR, then ./checkpoints]
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    /// Output file or directory
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Activation and onset threshold for decoding
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Seed for initialization and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Files transcribed in parallel
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(required = true, value_name = "INPUT")]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// music, multi_instrument, drum, vocal, chord or beat
    pub corpus: String,
    #[arg(long, default_value_t = 8)]
    pub clips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SonifyArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = tunescribe_core::features::DEFAULT_SAMPLE_RATE)]
    pub sample_rate: u32,
}

#[derive(Debug, Args)]
pub struct DownloadArgs {
    /// Bundled manifest name or path to a manifest .toml
    pub manifest: String,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn config_for(a: &TaskArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(t) = a.threshold {
        cfg.decode.act_threshold = t;
        cfg.decode.onset_threshold = t;
        cfg.validate().map_err(|_| Error::Input(format!("--threshold {t} must lie in (0, 1)")))?;
    }
    Ok(cfg)
}

fn single_input(a: &TaskArgs) -> Result<&PathBuf> {
    match &a.input[..] {
        [one] => Ok(one),
        _ => Err(Error::Input("expected exactly one dataset directory".into())),
    }
}

fn run_task(task: CliTask, verb: Verb, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(|e| Error::Internal(e.to_string()));
    match verb {
        Verb::Transcribe(a) => {
            let cfg = config_for(&a)?;
            let models = Models::load(task, &a.model_path.clone().unwrap_or_else(|| cfg.checkpoint_dir()))?;
            let output = a.output.clone().or_else(|| cfg.paths.output_dir.clone());
            for p in transcribe_batch(task, &a.input, output.as_deref(), &models, &cfg, a.workers)? {
                say(out, &format!("{}\n", p.display()))?;
            }
        }
        Verb::Train(a) => {
            let cfg = config_for(&a)?;
            let dir = a.output.clone().unwrap_or_else(|| cfg.checkpoint_dir());
            let seed = a.seed.unwrap_or(cfg.train.seed);
            for p in train_cli(task, single_input(&a)?, &cfg, &dir, seed)? {
                say(out, &format!("{}\n", p.display()))?;
            }
        }
        Verb::Evaluate(a) => {
            let cfg = config_for(&a)?;
            let models = Models::load(task, &a.model_path.clone().unwrap_or_else(|| cfg.checkpoint_dir()))?;
            let report = evaluate_cli(task, single_input(&a)?, &models, &cfg)?;
            match &a.output {
                Some(p) => fsio::write_text(p, &report)?,
                None => say(out, &report)?,
            }
        }
    }
    Ok(())
}

/// Runs a parsed command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(|e| Error::Internal(e.to_string()));
    match cli.command {
        Command::Music { verb } => run_task(CliTask::Music, verb, out),
        Command::Drum { verb } => run_task(CliTask::Drum, verb, out),
        Command::Vocal { verb } => run_task(CliTask::Vocal, verb, out),
        Command::Chord { verb } => run_task(CliTask::Chord, verb, out),
        Command::Beat { verb } => run_task(CliTask::Beat, verb, out),
        Command::Generate(a) => {
            let corpus: Corpus = a.corpus.parse().map_err(|e| Error::Input(format!("{e}")))?;
            let cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
            let ds = generate_synthetic_dataset(corpus, a.clips, a.seed, &a.output, &cfg)?;
            say(out, &format!("{}\n", ds.dir.display()))
        }
        Command::Sonify(a) => {
            sonify_file(&a.input, &a.output, a.sample_rate)?;
            say(out, &format!("{}\n", a.output.display()))
        }
        Command::Download(a) => {
            let m = DatasetManifest::resolve(&a.manifest)?;
            let r = download_dataset(&m, &a.output)?;
            say(
                out,
                &format!("{}: {} files, {} bytes fetched, {} already verified\n", m.name, r.files.len(), r.bytes_fetched, r.skipped),
            )
        }
        Command::Config { config } => say(out, &PipelineConfig::load_or_default(config.as_deref())?.to_toml()),
        Command::Fixtures { inputs, checkpoints, epochs } => {
            for p in fixtures::write_inputs(&inputs)? {
                say(out, &format!("{}\n", p.display()))?;
            }
            if let Some(dir) = checkpoints {
                for p in fixtures::write_checkpoints(&dir, epochs)? {
                    say(out, &format!("{}\n", p.display()))?;
                }
            }
            Ok(())
        }
    }
}
