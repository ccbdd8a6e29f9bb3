use std::path::Path;

use siglab_core::persist::{load_checkpoint, load_manifest, save_checkpoint, ExperimentManifest};
use siglab_core::trainer::{train, TrainConfig};
use siglab_core::worldgen::{generate_world, WorldConfig};
use siglab_core::{Checkpoint, Error, ErrorKind};

fn small_world() -> WorldConfig {
    WorldConfig {
        n_categories: 2,
        concepts_per_category: 2,
        instances_per_concept: 3,
        feature_dim: 8,
        seed: 2,
        ..WorldConfig::default()
    }
}

fn small_run(k: usize) -> Checkpoint {
    let config = TrainConfig {
        vocab_size: k,
        embed_dim: 6,
        n_filters: 3,
        n_iterations: 15,
        log_interval: 5,
        eval_games: 10,
        ..TrainConfig::default()
    };
    let wc = small_world();
    let world = generate_world::<f64>(&wc).unwrap();
    Checkpoint::from_outcome(&config, &wc, &train(&config, &world).unwrap())
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_run(10);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    save_checkpoint(&a, &ckpt).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(loaded, ckpt);
    save_checkpoint(&b, &loaded).unwrap();
    assert!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap());
    let (s0, r0) = ckpt.agents::<f64>().unwrap();
    let (s1, r1) = loaded.agents::<f64>().unwrap();
    assert_eq!((s0, r0), (s1, r1));
}

#[test]
fn truncated_checkpoint_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    save_checkpoint(&path, &small_run(10)).unwrap();
    let full = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &full[..full.len() / 2]).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, Error::Corrupt(_)), "{err}");
}

#[test]
fn wrong_data_length_is_corrupt() {
    let mut ckpt = small_run(10);
    ckpt.sender[0].data.pop();
    let err = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap_err();
    assert!(matches!(err, Error::Corrupt(_)), "{err}");
}

#[test]
fn unknown_schema_version_is_rejected() {
    let mut ckpt = small_run(10);
    ckpt.schema_version = 99;
    let err = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap_err();
    assert!(matches!(err, Error::SchemaVersion { found: 99, .. }), "{err}");
}

#[test]
fn vocabulary_mismatch_names_the_tensor() {
    let ckpt = small_run(10);
    let config = TrainConfig {
        vocab_size: 100,
        ..ckpt.config.clone()
    };
    let err = ckpt.agents_for::<f64>(&config, ckpt.world.feature_dim).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    match err {
        Error::TensorShape { tensor, expected, found } => {
            assert!(tensor.starts_with("sender.out"), "{tensor}");
            assert_eq!(expected[0], 100);
            assert_eq!(found[0], 10);
        }
        other => panic!("{other}"),
    }
}

fn write(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("m.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_manifest_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_manifest(&write(dir.path(), "")).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
}

#[test]
fn minimal_manifest_takes_documented_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_manifest(&write(dir.path(), r#"{"world": {"seed": 3}, "train": {"seed": 4}}"#)).unwrap();
    let expected = ExperimentManifest {
        world: WorldConfig {
            seed: 3,
            ..WorldConfig::default()
        },
        train: TrainConfig {
            seed: 4,
            ..TrainConfig::default()
        },
        ..ExperimentManifest::default()
    };
    assert_eq!(m, expected);
}

#[test]
fn bad_values_and_typos_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_manifest(&write(dir.path(), r#"{"train": {"tau": -1}}"#)).unwrap_err();
    assert!(matches!(&err, Error::Config { field, .. } if field == "tau"), "{err}");
    let err = load_manifest(&write(dir.path(), r#"{"train": {"learning_rate": 0.1}}"#)).unwrap_err();
    assert!(err.to_string().contains("learning_rate"), "{err}");
}
