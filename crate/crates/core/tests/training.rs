use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchnet::doodles;
use sketchnet::experiment::encode_all;
use sketchnet::nn::{softmax_cross_entropy, Mode};
use sketchnet::strategies::{synthesize_strategy_dataset, Strategy, StrategyConfig};
use sketchnet::train::{evaluate_loss, train_step, AdamState, StopReason};
use sketchnet::{
    adapt_specialist, prepare, split_dataset, train, ArchitectureSpec, Batch, EncodedSequence, ModelState, Sketch,
    Stroke, TrainConfig,
};

/// Left-to-right strokes are class 0, right-to-left class 1.
fn direction_toy(n: usize, seed: u64) -> Vec<EncodedSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let k = rng.random_range(3..7);
            let mut xy: Vec<(f64, f64)> = (0..k)
                .map(|j| (j as f64 * 40.0 + rng.random_range(0.0..10.0), rng.random_range(0.0..255.0)))
                .collect();
            if label == 1 {
                xy.reverse();
            }
            prepare(&Sketch::new(vec![Stroke::from_xy(&xy).unwrap()], Some(label)).unwrap()).unwrap()
        })
        .collect()
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 8,
        max_epochs: 50,
        patience: 50,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_reaches_full_accuracy() {
    let train_set = direction_toy(64, 1);
    let val = direction_toy(32, 2);
    let initial = ModelState::build(&ArchitectureSpec::micro(2), 5).unwrap();
    let (_, report) = train(&initial, &train_set, &val, &toy_config()).unwrap();
    assert!(report.epochs.len() <= 50);
    assert!(report.epochs.iter().any(|e| e.validation_top1 == 100.0), "{:?}", report.best());
}

#[test]
fn tiny_step_decreases_frozen_batch_loss() {
    let data = direction_toy(16, 4);
    let batch = Batch::from_sequences(&data).unwrap();
    let labels = batch.require_labels().unwrap();
    let mut model = ModelState::build(&ArchitectureSpec::micro(2), 6).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-5,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let before = train_step(&mut model, &batch, &mut adam, &config, &mut rng).unwrap();
    let (logits, _) = model.forward(&batch, Mode::Train, &mut rng).unwrap();
    let after = softmax_cross_entropy(&logits, &labels).unwrap().0;
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn returned_state_is_the_best_epoch() {
    let train_set = direction_toy(48, 7);
    let val = direction_toy(24, 8);
    let initial = ModelState::build(&ArchitectureSpec::micro(2), 9).unwrap();
    let config = TrainConfig {
        max_epochs: 15,
        ..toy_config()
    };
    let (best, report) = train(&initial, &train_set, &val, &config).unwrap();
    let min = report.epochs.iter().map(|e| e.validation_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best().unwrap().validation_loss, min);
    let (loss, _) = evaluate_loss(&best, &val, config.batch_size).unwrap();
    assert!(report.epochs.iter().all(|e| loss <= e.validation_loss + 1e-12));
    assert_eq!(report.to_jsonl().unwrap().lines().count(), report.epochs.len() + 1);
}

#[test]
fn training_is_deterministic() {
    let train_set = direction_toy(32, 10);
    let val = direction_toy(16, 11);
    let spec = ArchitectureSpec {
        dropout_rate: 0.3,
        ..ArchitectureSpec::micro(2)
    };
    let initial = ModelState::build(&spec, 12).unwrap();
    let config = TrainConfig {
        max_epochs: 6,
        length_buckets: true,
        ..toy_config()
    };
    let (a, ra) = train(&initial, &train_set, &val, &config).unwrap();
    let (b, rb) = train(&initial, &train_set, &val, &config).unwrap();
    assert_eq!(a, b);
    assert!(ra.same_trajectory(&rb));
    let (c, _) = train(&initial, &train_set, &val, &TrainConfig { seed: 99, ..config }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn patience_stops_training() {
    // validation labels are the opposite of the training labels
    let train_set = direction_toy(32, 13);
    let mut val = direction_toy(16, 14);
    for s in &mut val {
        s.label = s.label.map(|l| 1 - l);
    }
    let initial = ModelState::build(&ArchitectureSpec::micro(2), 15).unwrap();
    let config = TrainConfig {
        patience: 3,
        ..toy_config()
    };
    let (best, report) = train(&initial, &train_set, &val, &config).unwrap();
    assert_eq!(report.stop_reason, StopReason::Patience);
    let best_epoch = report.best_epoch.unwrap();
    assert_eq!(report.epochs.len(), best_epoch + 3);
    assert_ne!(best, initial);
}

#[test]
fn zero_epochs_is_pure_transfer() {
    let data = direction_toy(8, 16);
    let baseline = ModelState::build(&ArchitectureSpec::micro(2), 17).unwrap();
    let config = TrainConfig {
        max_epochs: 0,
        ..toy_config()
    };
    let (specialist, report) = adapt_specialist(&baseline, &data, &data, &config).unwrap();
    assert_eq!(specialist, baseline);
    assert!(report.epochs.is_empty() && report.best_epoch.is_none());
    assert!(adapt_specialist(&baseline, &[], &data, &config).is_err());
}

#[test]
fn specialist_improves_on_its_strategy_and_leaves_baseline_alone() {
    let classes = doodles::default_class_table();
    let clean = doodles::generate(&classes, 40, 21).unwrap();
    let split = split_dataset(&clean, 0.1, 0.1, 21).unwrap();
    let config = TrainConfig {
        batch_size: 16,
        max_epochs: 8,
        learning_rate: 3e-3,
        seed: 21,
        ..TrainConfig::default()
    };
    let spec = ArchitectureSpec::desk_scale(classes.len());
    let initial = ModelState::build(&spec, 21).unwrap();
    let (baseline, _) = train(
        &initial,
        &encode_all(&split.train).unwrap(),
        &encode_all(&split.validation).unwrap(),
        &config,
    )
    .unwrap();

    let dotted = synthesize_strategy_dataset(&split.train, Strategy::Dotted, &StrategyConfig::default(), &[], 120, 22)
        .unwrap();
    let parts = split_dataset(&dotted, 0.1, 0.1, 22).unwrap();
    let (tr, va) = (encode_all(&parts.train).unwrap(), encode_all(&parts.validation).unwrap());

    let probe: Vec<&EncodedSequence> = va.iter().collect();
    let before = baseline.predict_proba(&probe).unwrap();
    let frozen = baseline.clone_state();
    let (specialist, _) = adapt_specialist(&baseline, &tr, &va, &config).unwrap();
    assert_eq!(baseline.predict_proba(&probe).unwrap(), before);
    assert_eq!(baseline, frozen);

    let base_loss = evaluate_loss(&baseline, &va, 64).unwrap().0;
    let spec_loss = evaluate_loss(&specialist, &va, 64).unwrap().0;
    assert!(spec_loss < base_loss, "{spec_loss} !< {base_loss}");
}

#[test]
fn clone_shares_nothing() {
    let data = direction_toy(8, 30);
    let original = ModelState::build(&ArchitectureSpec::micro(2), 31).unwrap();
    let mut copy = original.clone_state();
    let mut adam = AdamState::new(&copy.params());
    let batch = Batch::from_sequences(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    train_step(&mut copy, &batch, &mut adam, &toy_config(), &mut rng).unwrap();
    assert_ne!(copy, original);
    assert_eq!(original, ModelState::build(&ArchitectureSpec::micro(2), 31).unwrap());
}
