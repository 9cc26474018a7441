mod common;

use advmark::checkpoint::{
    blob_path, load_checkpoint, load_train_state, save_checkpoint, save_train_state, Checkpoint, CheckpointManifest,
    BEST_CHECKPOINT, FINAL_CHECKPOINT,
};
use advmark::json::{read_json, sha256_hex};
use advmark_core::model::Model;
use advmark_core::train::{fit, NoHooks, TrainConfig, TrainState};
use common::{tiny_splits, tiny_vgg};

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 1e-2,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn parameters_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(tiny_vgg(), 11).unwrap();
    let path = dir.path().join("m.json");
    save_checkpoint(&path, &Checkpoint::new(model.clone(), 11)).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.model, model);
    for (a, b) in back.model.params().iter().zip(model.params().iter()) {
        let bits = |t: &[f32]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.tensor.data()), bits(b.tensor.data()));
    }
    assert_eq!(back.seed, 11);
    assert!(back.optimizer.is_none());
}

#[test]
fn manifest_ranges_are_contiguous_byte_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(tiny_vgg(), 1).unwrap();
    let path = dir.path().join("m.json");
    save_checkpoint(&path, &Checkpoint::new(model.clone(), 1)).unwrap();
    let manifest: CheckpointManifest = read_json(&path).unwrap();
    let blob = std::fs::read(blob_path(&path)).unwrap();
    assert_eq!(manifest.blob_sha256, sha256_hex(&blob));
    let mut offset = 0;
    for (entry, p) in manifest.tensors.iter().zip(model.params().iter()) {
        assert_eq!(entry.name, p.name);
        assert_eq!(entry.offset, offset);
        assert_eq!(entry.length, 4 * p.tensor.numel());
        offset += entry.length;
    }
    assert_eq!(offset, blob.len());
}

#[test]
fn corrupted_blob_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_checkpoint(&path, &Checkpoint::new(Model::new(tiny_vgg(), 1).unwrap(), 1)).unwrap();
    let mut blob = std::fs::read(blob_path(&path)).unwrap();
    blob[0] ^= 1;
    std::fs::write(blob_path(&path), blob).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let s = tiny_splits(6);
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(tiny_vgg(), cfg(4).streams().init()).unwrap();

    let full = fit(TrainState::new(model.clone()), &s.train, &s.val, &cfg(4), &mut NoHooks).unwrap();

    let half = fit(TrainState::new(model), &s.train, &s.val, &cfg(2), &mut NoHooks).unwrap();
    save_train_state(dir.path(), &half.state, 5, false).unwrap();
    let (loaded, seed) = load_train_state(dir.path()).unwrap();
    assert_eq!(seed, 5);
    assert_eq!(loaded, half.state);
    let resumed = fit(loaded, &s.train, &s.val, &cfg(4), &mut NoHooks).unwrap();

    assert_eq!(resumed.state, full.state);
    assert!(dir.path().join(FINAL_CHECKPOINT).is_file());
    assert!(dir.path().join(BEST_CHECKPOINT).is_file());
}
