use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tunescribe::config::{PipelineConfig, CHECKPOINT_DIR_ENV};
use tunescribe::fixtures;
use tunescribe::sidecar::parse_beats;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    crate_dir().join("fixtures").join(name)
}

fn checkpoints() -> PathBuf {
    crate_dir().join("checkpoints")
}

fn run(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunescribe"))
        .args(args)
        .args(extra)
        .env_remove(CHECKPOINT_DIR_ENV)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_fails(o: &Output, code: i32, tag: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{tag}]: ")), "{err}");
}

#[test]
fn missing_input_file_exits_2() {
    let o = run(&["music", "transcribe", "--model-path"], &[&checkpoints(), Path::new("/no/such.wav")]);
    assert_fails(&o, 2, "E_INPUT");
    assert!(stderr(&o).contains("/no/such.wav"));
}

#[test]
fn usage_errors_exit_2() {
    assert_fails(&run(&["music", "transcribe"], &[]), 2, "E_INPUT");
    assert_fails(&run(&["guitar", "transcribe", "x.wav"], &[]), 2, "E_INPUT");
    assert_fails(&run(&["drum", "transcribe", "--threshold", "1.5", "x.wav"], &[]), 2, "E_INPUT");
    let o = run(&["--help"], &[]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn missing_checkpoint_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["chord", "transcribe", "--model-path"], &[dir.path(), &fixture(fixtures::CHORDS_WAV)]);
    assert_fails(&o, 2, "E_INPUT");
    assert!(stderr(&o).contains("chord.tsck"));
}

#[test]
fn wrong_checkpoint_kind_is_a_data_error() {
    let o = run(&["drum", "transcribe", "--model-path"], &[&checkpoints().join("chord.tsck"), &fixture(fixtures::DRUMS_WAV)]);
    assert_fails(&o, 3, "E_DATA");
}

#[test]
fn unknown_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["download", "nonexistent", "-o"], &[dir.path()]);
    assert_fails(&o, 2, "E_MANIFEST");
    assert!(stderr(&o).contains("maestro-midi"));
}

#[test]
fn checkpoint_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("click.beats.txt");
    let o = Command::new(env!("CARGO_BIN_EXE_tunescribe"))
        .args(["beat", "transcribe", "-o"])
        .arg(&out)
        .arg(fixture(fixtures::CLICK_MID))
        .env(CHECKPOINT_DIR_ENV, checkpoints())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let beats = parse_beats(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(beats.beats_s.windows(2).all(|w| w[0] < w[1]));
    assert!(!beats.beats_s.is_empty());
    assert!(beats.downbeats_s.iter().all(|d| beats.beats_s.contains(d)));
}

#[test]
fn batch_output_matches_single_runs_and_is_reproducible() {
    let inputs = tempfile::tempdir().unwrap();
    for name in [fixtures::PIANO_WAV, fixtures::CHORDS_WAV] {
        std::fs::copy(fixture(name), inputs.path().join(name)).unwrap();
    }
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ck = checkpoints().join("music.tsck");
    let o = run(&["music", "transcribe", "--workers", "2", "--model-path"], &[&ck, Path::new("-o"), a.path(), inputs.path()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
    for name in ["piano", "chords"] {
        let single = b.path().join(format!("{name}.mid"));
        let input = inputs.path().join(format!("{name}.wav"));
        let o = run(&["music", "transcribe", "--model-path"], &[&ck, Path::new("-o"), &single, &input]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(std::fs::read(&single).unwrap(), std::fs::read(a.path().join(format!("{name}.mid"))).unwrap());
    }
    let leftovers: Vec<_> = std::fs::read_dir(a.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('.')).collect();
    assert!(leftovers.is_empty());
}

#[test]
fn output_dir_from_config_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    std::fs::create_dir(&out).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.paths.output_dir = Some(out.clone());
    cfg.paths.checkpoint_dir = Some(checkpoints());
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let o = run(&["vocal", "transcribe", "--config"], &[&cfg_path, &fixture(fixtures::VOCAL_WAV)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("vocal.mid").is_file());
}

#[test]
fn config_command_prints_the_defaults() {
    let o = run(&["config"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = PipelineConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn generate_train_evaluate_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = (dir.path().join("data"), dir.path().join("ck"));
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(&cfg_path, "[synthetic]\nclip_s = 1.0\n[train]\nepochs = 1\n").unwrap();
    let o = run(&["generate", "beat", "--clips", "2", "--seed", "3", "--config"], &[&cfg_path, Path::new("-o"), &data]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["beat", "train", "--config"], &[&cfg_path, Path::new("-o"), &ck, &data]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(ck.join("beat.tsck").is_file() && ck.join("beat.loss.txt").is_file());
    let o = run(&["beat", "evaluate", "--model-path"], &[&ck, &data]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("beat_f1=") && report.contains("downbeat_f1="), "{report}");
    let o = run(&["generate", "lute", "-o"], &[&data]);
    assert_fails(&o, 2, "E_INPUT");
}

#[test]
fn sonify_writes_a_wav() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("click.wav");
    let o = run(&["sonify", "--sample-rate", "8000", "-o"], &[&wav, &fixture(fixtures::CLICK_MID)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let clip = tunescribe::audio::read_wav(&wav).unwrap();
    assert_eq!(clip.sample_rate(), 8000);
    assert!(clip.samples().iter().any(|&s| s != 0.0));
}

#[test]
fn bundled_inputs_regenerate_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    for p in fixtures::write_inputs(dir.path()).unwrap() {
        let name = p.file_name().unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(fixture(&name.to_string_lossy())).unwrap(), "{name:?}");
    }
}
