use super::*;
use crate::data::{synth_dataset, SplitTag, SynthConfig};
use crate::model::{ArchConfig, ClassifierSpec, VggConfig};

fn tiny_spec() -> ClassifierSpec {
    ClassifierSpec {
        resolution: 8,
        channels: 3,
        classes: 5,
        arch: ArchConfig::Vgg(VggConfig {
            widths: vec![4],
            convs_per_block: 1,
            hidden: 8,
        }),
    }
}

fn tiny_data(per_class: usize) -> DatasetSplit {
    synth_dataset(&SynthConfig {
        seed: 3,
        per_class,
        resolution: 8,
        noise_std: 0.05,
    })
    .unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 4,
        epochs,
        attack: AttackConfig {
            epsilon: 0.05,
            alpha: 0.02,
            steps: 2,
            random_start: true,
            targeted: false,
        },
        seed: 11,
        ..TrainConfig::default()
    }
}

fn model(seed: u64) -> Model<f32> {
    Model::new(tiny_spec(), seed).unwrap()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = tiny_data(2);
    let c = TrainConfig {
        learning_rate: 0.0,
        ..cfg(2)
    };
    let m = model(0);
    let out = train_clean(m.clone(), &data, &data, &c, &mut NoHooks).unwrap();
    assert_eq!(out.final_model(), &m);
    let log = out.log();
    assert_eq!(log.epochs[0].val_loss, log.epochs[1].val_loss);
}

#[test]
fn ten_samples_in_batches_of_four_take_three_steps() {
    let data = tiny_data(2);
    let out = train_clean(model(0), &data, &data, &cfg(1), &mut NoHooks).unwrap();
    assert_eq!(out.state.optimizer.step, 3);
    assert_eq!(out.log().len(), 1);
}

#[test]
fn log_has_one_record_per_epoch() {
    let data = tiny_data(2);
    let out = train_clean(model(0), &data, &data, &cfg(3), &mut NoHooks).unwrap();
    let epochs: Vec<usize> = out.log().epochs.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, [1, 2, 3]);
    assert!(out.log().epochs.iter().all(|r| r.adv_val_acc.is_none()));
    assert!(out.best_epoch.is_some());
}

#[test]
fn training_is_deterministic() {
    let data = tiny_data(2);
    let a = train_clean(model(4), &data, &data, &cfg(2), &mut NoHooks).unwrap();
    let b = train_clean(model(4), &data, &data, &cfg(2), &mut NoHooks).unwrap();
    assert_eq!(a, b);
    let c = TrainConfig { seed: 12, ..cfg(2) };
    let d = train_clean(model(4), &data, &data, &c, &mut NoHooks).unwrap();
    assert_ne!(a.final_model(), d.final_model());
}

#[test]
fn zero_mix_ratio_matches_clean_training() {
    let data = tiny_data(2);
    let clean = train_clean(model(1), &data, &data, &cfg(2), &mut NoHooks).unwrap();
    let adv_cfg = TrainConfig {
        adversarial: true,
        mix_ratio: 0.0,
        ..cfg(2)
    };
    assert_eq!(adv_cfg.adversarial_count(4), 0);
    let adv = train_adversarial(model(1), &data, &data, &adv_cfg, &mut NoHooks).unwrap();
    assert_eq!(adv.state, clean.state);
    assert!(adv.log().epochs.iter().all(|r| r.adv_val_acc.is_none()));
}

#[test]
fn full_mix_with_zero_budget_matches_clean_training() {
    let data = tiny_data(2);
    let clean = train_clean(model(2), &data, &data, &cfg(1), &mut NoHooks).unwrap();
    let mut adv_cfg = TrainConfig {
        adversarial: true,
        mix_ratio: 1.0,
        ..cfg(1)
    };
    adv_cfg.attack.epsilon = 0.0;
    adv_cfg.attack.random_start = false;
    let adv = train_adversarial(model(2), &data, &data, &adv_cfg, &mut NoHooks).unwrap();
    assert_eq!(adv.final_model(), clean.final_model());
}

#[test]
fn adversarial_mixing_changes_the_trajectory() {
    let data = tiny_data(2);
    let clean = train_clean(model(2), &data, &data, &cfg(1), &mut NoHooks).unwrap();
    let adv_cfg = TrainConfig {
        adversarial: true,
        ..cfg(1)
    };
    assert_eq!(adv_cfg.adversarial_count(4), 2);
    assert_eq!(adv_cfg.adversarial_count(3), 2);
    let adv = train_adversarial(model(2), &data, &data, &adv_cfg, &mut NoHooks).unwrap();
    assert_ne!(adv.final_model(), clean.final_model());
    let acc = adv.log().epochs[0].adv_val_acc.unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let data = tiny_data(2);
    let c = TrainConfig {
        adversarial: true,
        ..cfg(3)
    };
    let full = train_adversarial(model(5), &data, &data, &c, &mut NoHooks).unwrap();
    let mut state = TrainState::new(model(5));
    train_epoch(&mut state, &data, &data, &c, &mut NoHooks).unwrap();
    let snapshot = state.clone();
    let resumed = fit(snapshot, &data, &data, &c, &mut NoHooks).unwrap();
    assert_eq!(resumed, full);
}

#[test]
fn best_checkpoint_tracks_strict_improvements() {
    let data = tiny_data(4);
    let out = train_clean(model(6), &data, &data, &cfg(4), &mut NoHooks).unwrap();
    let best = out.state.best.as_ref().unwrap();
    let accs: Vec<f64> = out.log().epochs.iter().map(|r| r.val_acc).collect();
    let top = accs.iter().cloned().fold(f64::MIN, f64::max);
    let first = accs.iter().position(|&a| a == top).unwrap();
    assert_eq!(best.epoch, first + 1);
    assert_eq!(best.metric, top);
}

#[test]
fn adversarial_best_breaks_ties_by_clean_accuracy() {
    let data = tiny_data(4);
    let c = TrainConfig {
        adversarial: true,
        ..cfg(6)
    };
    let out = train_adversarial(model(6), &data, &data, &c, &mut NoHooks).unwrap();
    let keys: Vec<(f64, f64)> = out.log().epochs.iter().map(|r| (r.adv_val_acc.unwrap(), r.val_acc)).collect();
    let mut want = 0;
    for (i, k) in keys.iter().enumerate() {
        if k.0 > keys[want].0 || (k.0 == keys[want].0 && k.1 > keys[want].1) {
            want = i;
        }
    }
    assert_eq!(out.best_epoch, Some(want + 1));
}

#[test]
fn hooks_see_every_batch_and_epoch() {
    #[derive(Default)]
    struct Counter {
        batches: usize,
        epochs: usize,
        t: f64,
    }
    impl TrainHooks for Counter {
        fn now(&mut self) -> f64 {
            self.t += 1.5;
            self.t
        }
        fn on_batch(&mut self, _: usize, _: usize, loss: f64) {
            assert!(loss.is_finite());
            self.batches += 1;
        }
        fn on_epoch(&mut self, _: &EpochRecord) {
            self.epochs += 1;
        }
    }
    let data = tiny_data(2);
    let mut h = Counter::default();
    let out = train_clean(model(0), &data, &data, &cfg(2), &mut h).unwrap();
    assert_eq!((h.batches, h.epochs), (6, 2));
    assert!(out.log().epochs.iter().all(|r| r.seconds == 1.5));
}

#[test]
fn invalid_configs_are_rejected() {
    let data = tiny_data(1);
    let bad = [
        TrainConfig { mix_ratio: 1.5, ..cfg(1) },
        TrainConfig { mix_ratio: -0.1, ..cfg(1) },
        TrainConfig { epochs: 0, ..cfg(1) },
        TrainConfig { batch_size: 0, ..cfg(1) },
        TrainConfig { learning_rate: f64::NAN, ..cfg(1) },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(TrainError::Config(_))), "{c:?}");
    }
    let adv = TrainConfig {
        adversarial: true,
        ..cfg(1)
    };
    assert!(matches!(
        train_clean(model(0), &data, &data, &adv, &mut NoHooks),
        Err(TrainError::Config(_))
    ));
    assert!(matches!(
        train_adversarial(model(0), &data, &data, &cfg(1), &mut NoHooks),
        Err(TrainError::Config(_))
    ));
    let wrong = synth_dataset(&SynthConfig {
        per_class: 1,
        resolution: 16,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(
        train_clean(model(0), &wrong, &data, &cfg(1), &mut NoHooks),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn nan_parameters_report_divergence() {
    let data = tiny_data(1).with_tag(SplitTag::Train);
    let mut m = model(0);
    for t in m.params_mut().tensors_mut() {
        t.data_mut().fill(f32::NAN);
    }
    let err = train_clean(m, &data, &data, &cfg(1), &mut NoHooks).unwrap_err();
    assert_eq!(err, TrainError::Diverged { epoch: 1, batch: 0 });
}
