use super::*;
use crate::nn::{Init, Optimizer};
use std::vec;

#[test]
fn dense_parameter_counts() {
    let mut a = Init::new(0);
    a.dense("l1", 10, 5);
    assert_eq!(a.store.count(), 55);
    a.dense("l2", 5, 5);
    assert_eq!(a.store.count(), 85);
}

#[test]
fn beat_count_matches_closed_form() {
    let (input, h) = (130usize, 25usize);
    let direction = |n_in: usize| 4 * h * (n_in + h) + 4 * h;
    let expected = 2 * direction(input) + 2 * direction(2 * h) + (2 * h * 2 + 2);
    let model = build_model(ModelConfig::toy(Task::Beat)).unwrap();
    assert_eq!(count_params(&model), expected);
    assert_eq!(expected, 46_502);
}

#[test]
fn toy_models_stay_small() {
    for task in Task::ALL {
        let m = build_model(ModelConfig::toy(task)).unwrap();
        assert!(count_params(&m) <= 200_000, "{task}: {}", count_params(&m));
    }
}

#[test]
fn same_seed_same_parameters() {
    for task in Task::ALL {
        let a = build_model(ModelConfig::toy(task).with_seed(3)).unwrap();
        let b = build_model(ModelConfig::toy(task).with_seed(3)).unwrap();
        assert_eq!(a, b);
        let c = build_model(ModelConfig::toy(task).with_seed(4)).unwrap();
        assert_ne!(a.params, c.params);
    }
}

#[test]
fn wrong_out_channels_is_a_config_error() {
    let mut cfg = ModelConfig::toy(Task::Music);
    cfg.out_channels = 4;
    assert!(matches!(build_model(cfg), Err(ModelError::Config(_))));
}

#[test]
fn output_shapes_and_ranges() {
    for task in Task::ALL {
        let cfg = ModelConfig::toy(task);
        let m = build_model(cfg).unwrap();
        let x = ModelInput::probe(&cfg, 9, 1);
        let y = m.forward(&x).unwrap();
        let bins = if arch::is_grid_output(task) { cfg.pitch_bins } else { 1 };
        assert_eq!(y.shape(), [9, bins, task.out_channels()], "{task}");
        assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)), "{task}");
    }
}

#[test]
fn chord_rows_are_distributions() {
    let cfg = ModelConfig::toy(Task::Chord);
    let m = build_model(cfg).unwrap();
    let y = m.forward(&ModelInput::probe(&cfg, 12, 5)).unwrap();
    for k in 0..12 {
        let s: f64 = (0..25).map(|c| y.get(k, 0, c)).sum();
        assert!((s - 1.0).abs() <= 1e-5);
    }
}

#[test]
fn zero_head_gives_one_half() {
    for task in [Task::Music, Task::Drum, Task::VocalSeg, Task::Beat] {
        let cfg = ModelConfig::toy(task);
        let mut m = build_model(cfg).unwrap();
        m.zero_head();
        let y = m.forward(&ModelInput::probe(&cfg, 6, 2)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5), "{task}");
    }
}

#[test]
fn identical_inputs_identical_outputs() {
    let cfg = ModelConfig::toy(Task::Drum);
    let m = build_model(cfg).unwrap();
    let x = ModelInput::probe(&cfg, 7, 8);
    assert_eq!(m.forward(&x).unwrap(), m.forward(&x.clone()).unwrap());
}

#[test]
fn wrong_input_is_rejected() {
    let m = build_model(ModelConfig::toy(Task::Music)).unwrap();
    let chroma = ModelInput::probe(&ModelConfig::toy(Task::Chord), 4, 0);
    assert!(matches!(m.forward(&chroma), Err(ModelError::InputKind { .. })));
    let drum = ModelInput::probe(&ModelConfig::toy(Task::Drum), 4, 0);
    assert!(matches!(m.forward(&drum), Err(ModelError::Shape { axis: "bins", .. })));
}

fn half_target(cfg: &ModelConfig, frames: usize) -> ActivationTensor {
    let bins = if arch::is_grid_output(cfg.task) { cfg.pitch_bins } else { 1 };
    ActivationTensor::filled(frames, bins, cfg.out_channels, 0.5)
}

#[test]
fn initial_loss_is_ln2_for_half_targets() {
    for task in [Task::Music, Task::Beat] {
        let cfg = ModelConfig::toy(task);
        let mut m = build_model(cfg).unwrap();
        m.zero_head();
        let data = vec![(ModelInput::probe(&cfg, 5, 0), half_target(&cfg, 5))];
        let tc = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &data, &tc).unwrap();
        assert!((h[0] - core::f64::consts::LN_2).abs() <= 1e-6, "{task}: {}", h[0]);
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = ModelConfig::toy(Task::VocalSeg);
    let mut m = build_model(cfg).unwrap();
    let before = m.params.clone();
    let mut target = half_target(&cfg, 6);
    target.set(2, 0, 1, 1.0);
    let data = vec![(ModelInput::probe(&cfg, 6, 0), target)];
    for opt in [Optimizer::Sgd, Optimizer::Adam] {
        let tc = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            optimizer: opt,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &data, &tc).unwrap();
        assert_eq!(m.params, before);
        assert!(h.iter().all(|&l| l == h[0]));
    }
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let cfg = ModelConfig::toy(Task::Chord);
    let mut rows = vec![0.0; 10 * 25];
    for k in 0..10 {
        rows[k * 25 + if k < 5 { 0 } else { 21 }] = 1.0;
    }
    let target = ActivationTensor::from_vec(10, 1, 25, rows).unwrap();
    let data = vec![(ModelInput::probe(&cfg, 10, 3), target)];
    let tc = TrainConfig {
        epochs: 30,
        learning_rate: 0.01,
        optimizer: Optimizer::Adam,
        ..TrainConfig::default()
    };
    let mut a = build_model(cfg).unwrap();
    let ha = train(&mut a, &data, &tc).unwrap();
    assert!(ha[29] < 0.5 * ha[0], "{ha:?}");
    let mut b = build_model(cfg).unwrap();
    let hb = train(&mut b, &data, &tc).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.meta.loss_history, ha);
}

#[test]
fn nan_input_aborts_with_location() {
    let cfg = ModelConfig::toy(Task::Beat);
    let mut m = build_model(cfg).unwrap();
    let mut x = ModelInput::probe(&cfg, 4, 0);
    if let ModelInput::Symbolic(f) = &mut x {
        f.ioi[2] = f64::NAN;
    }
    let data = vec![(x, half_target(&cfg, 4))];
    let err = train(&mut m, &data, &TrainConfig::default()).unwrap_err();
    assert_eq!(err, TrainError::NonFinite { epoch: 0, batch: 0 });
}

#[test]
fn bad_targets_are_rejected() {
    let cfg = ModelConfig::toy(Task::Beat);
    let mut m = build_model(cfg).unwrap();
    let data = vec![(ModelInput::probe(&cfg, 4, 0), half_target(&cfg, 5))];
    assert!(matches!(train(&mut m, &data, &TrainConfig::default()), Err(TrainError::TargetShape { .. })));
    let data = vec![(ModelInput::probe(&cfg, 4, 0), ActivationTensor::filled(4, 1, 2, 1.5))];
    assert!(matches!(train(&mut m, &data, &TrainConfig::default()), Err(TrainError::TargetRange { .. })));
    assert_eq!(train(&mut m, &[], &TrainConfig::default()), Err(TrainError::EmptyDataset));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for task in Task::ALL {
        let cfg = ModelConfig::toy(task).with_seed(11);
        let mut m = build_model(cfg).unwrap();
        m.meta.epochs = 2;
        m.meta.loss_history = vec![0.9, 0.4];
        let probe = ModelInput::probe(&cfg, 8, 99);
        let before = m.forward(&probe).unwrap();
        let bytes = save_checkpoint(&m);
        let back = load_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        let after = back.forward(&probe).unwrap();
        assert!(before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let m = build_model(ModelConfig::toy(Task::Beat)).unwrap();
    let bytes = save_checkpoint(&m);
    assert!(load_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    assert!(load_checkpoint(&bytes[..3]).is_err());
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    assert_eq!(load_checkpoint(&flipped), Err(CheckpointError::Checksum));
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert_eq!(load_checkpoint(&v2), Err(CheckpointError::Version { found: 2 }));
    assert_eq!(load_checkpoint(b"RIFF0000000000000000"), Err(CheckpointError::BadMagic));
}
