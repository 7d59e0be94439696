use std::path::Path;

use proptest::prelude::*;
use tunescribe::audio::{encode_wav, read_wav, write_wav};
use tunescribe::config::PipelineConfig;
use tunescribe::sidecar::{format_beats, format_chords, parse_beats, parse_chords};
use tunescribe::tensor_file::{decode_input, decode_tensor, encode_input, encode_tensor, read_input, read_tensor};
use tunescribe::Error;
use tunescribe_core::features::AudioClip;
use tunescribe_core::models::{ModelConfig, ModelInput, Task};
use tunescribe_core::synthetic::{synthesize, Corpus, SyntheticParams};
use tunescribe_core::{ActivationTensor, BeatAnnotation, ChordLabel, ChordSegment};

fn repo_root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().parent().unwrap()
}

#[test]
fn shipped_config_is_the_default() {
    let text = std::fs::read_to_string(repo_root().join("configs/default.toml")).unwrap();
    assert_eq!(PipelineConfig::parse(&text).unwrap(), PipelineConfig::default());
}

#[test]
fn config_text_round_trips() {
    let mut cfg = PipelineConfig::default();
    cfg.decode.onset_threshold = 0.4;
    cfg.model.width = Some(6);
    cfg.paths.output_dir = Some("out".into());
    assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
}

#[test]
fn bad_configs_are_input_errors() {
    for text in [
        "[decode]\nact_threshold = 1.5\n",
        "[spectral]\nwindow = 0.1\n",
        "[train]\noptimizer = \"lbfgs\"\n",
        "[train.channel_weights]\nmusic = [1.0, 2.0]\n",
        "[train.channel_weights]\npiano = [1.0, 2.0, 3.0]\n",
        "[synthetic]\nlow_pitch = 90\nhigh_pitch = 80\n",
        "not toml at all",
    ] {
        let e = PipelineConfig::parse(text).unwrap_err();
        assert_eq!(e.code(), "E_INPUT", "{text}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn config_feeds_model_and_training() {
    let mut cfg = PipelineConfig::default();
    cfg.model.depth = Some(1);
    cfg.train.epochs = 3;
    let m = cfg.model_config(Task::Drum, 9);
    assert_eq!((m.depth, m.seed), (1, 9));
    assert_eq!(m.width, ModelConfig::toy(Task::Drum).width);
    assert_eq!(cfg.train_config(Task::Music).channel_weights.len(), 3);
    assert!(cfg.train_config(Task::Drum).channel_weights.is_empty());
    assert_eq!(cfg.train_config(Task::Beat).epochs, 3);
}

fn short() -> SyntheticParams {
    SyntheticParams {
        clip_s: 1.0,
        ..SyntheticParams::default()
    }
}

#[test]
fn every_input_kind_round_trips() {
    for corpus in [Corpus::Music, Corpus::Drum, Corpus::Chord, Corpus::Beat] {
        let clip = synthesize(corpus, 3, 0, &short()).unwrap();
        let bytes = encode_input(&clip.input);
        assert_eq!(decode_input(&bytes).unwrap(), clip.input, "{corpus}");
        for (_, t) in &clip.targets {
            assert_eq!(&decode_tensor(&encode_tensor(t)).unwrap(), t);
        }
    }
}

#[test]
fn damaged_tensor_files_are_rejected() {
    let clip = synthesize(Corpus::Chord, 1, 0, &short()).unwrap();
    let bytes = encode_input(&clip.input);
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(decode_input(&bytes[..cut]).is_err(), "cut {cut}");
    }
    for at in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
        let mut b = bytes.clone();
        b[at] ^= 0x40;
        assert!(decode_input(&b).is_err(), "flip at {at}");
    }
    // a well-formed file of the wrong kind
    assert!(decode_tensor(&bytes).is_err());
    assert!(decode_input(&encode_tensor(&ActivationTensor::zeros(2, 1, 1))).is_err());
}

#[test]
fn unreadable_tensor_file_is_a_data_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("clip_0000.feat");
    std::fs::write(&p, b"TSTF garbage that is long enough").unwrap();
    let e = read_input(&p).unwrap_err();
    assert!(matches!(e, Error::Data(_)));
    assert!(e.to_string().contains("clip_0000.feat"), "{e}");
    let e = read_tensor(&dir.path().join("absent.target")).unwrap_err();
    assert_eq!(e.code(), "E_INPUT");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensors_round_trip_bit_exact(f in 0usize..6, b in 1usize..5, c in 1usize..4, seed in any::<u64>()) {
        let data: Vec<f64> = (0..f * b * c).map(|i| f64::from_bits(seed.rotate_left(i as u32) >> 2)).collect();
        let t = ActivationTensor::from_vec(f, b, c, data).unwrap();
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert!(back.data().iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn chord_sidecar_round_trips(labels in proptest::collection::vec(0usize..25, 0..12)) {
        let segs: Vec<ChordSegment> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ChordSegment { start_s: i as f64 * 0.23, end_s: (i + 1) as f64 * 0.23, label: ChordLabel::from_index(l).unwrap() })
            .collect();
        let back = parse_chords(&format_chords(&segs)).unwrap();
        prop_assert_eq!(back.len(), segs.len());
        for (a, b) in back.iter().zip(&segs) {
            prop_assert_eq!(a.label, b.label);
            prop_assert!((a.start_s - b.start_s).abs() < 1e-3 && (a.end_s - b.end_s).abs() < 1e-3);
        }
    }

    #[test]
    fn beat_sidecar_round_trips(n in 0usize..30, every in 1usize..6) {
        let beats: Vec<f64> = (0..n).map(|i| 0.25 + i as f64 * 0.5).collect();
        let ann = BeatAnnotation { downbeats_s: beats.iter().step_by(every).copied().collect(), beats_s: beats };
        prop_assert_eq!(parse_beats(&format_beats(&ann)).unwrap(), ann);
    }
}

#[test]
fn malformed_sidecars_are_rejected() {
    assert!(parse_chords("0.0\t1.0\n").is_err());
    assert!(parse_chords("0.0\t1.0\tC:aug\n").is_err());
    assert!(parse_beats("1.0\t2\n").is_err());
    assert!(parse_beats("1.0\t0\n0.5\t0\n").is_err());
}

#[test]
fn wav_round_trip_keeps_float32_precision() {
    let samples: Vec<f64> = (0..4410).map(|i| (i as f64 * 0.05).sin() * 0.7).collect();
    let clip = AudioClip::new(samples.clone(), 22_050).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    write_wav(&p, &clip).unwrap();
    let back = read_wav(&p).unwrap();
    assert_eq!(back.sample_rate(), 22_050);
    assert_eq!(back.samples().len(), samples.len());
    assert!(back.samples().iter().zip(&samples).all(|(a, b)| (a - b).abs() < 1e-6));
    assert_eq!(std::fs::read(&p).unwrap(), encode_wav(&clip));
}

#[test]
fn stereo_pcm_is_mixed_to_mono() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 8000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for _ in 0..100 {
        w.write_sample(16384i16).unwrap();
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let clip = read_wav(&p).unwrap();
    assert_eq!(clip.samples().len(), 100);
    assert!(clip.samples().iter().all(|&s| (s - 0.25).abs() < 1e-9));
}

#[test]
fn non_wav_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.wav");
    std::fs::write(&p, b"RIFF????").unwrap();
    let e = read_wav(&p).unwrap_err();
    assert_eq!(e.code(), "E_INPUT");
    assert!(e.one_line().starts_with("error[E_INPUT]: ") && !e.one_line().contains('\n'));
}

#[test]
fn probe_inputs_survive_the_container() {
    for task in Task::ALL {
        let x = ModelInput::probe(&ModelConfig::toy(task), 5, 1);
        assert_eq!(decode_input(&encode_input(&x)).unwrap(), x, "{task}");
    }
}
