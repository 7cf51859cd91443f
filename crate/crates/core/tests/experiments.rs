//! End-to-end runs on tiny synthetic grids. Every test keeps the split small
//! because each image costs a full extractor pass.

use std::path::Path;

use ssdr_core::data::AugmentationPlan;
use ssdr_core::experiments::*;
use ssdr_core::network::{build_classifier, load_weights, ParamStore};
use ssdr_core::seeding;
use ssdr_core::training::{init_params, train, InitMethod, TrainConfig};
use ssdr_core::Error;

fn tiny(kind: ExperimentKind, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.split.seed = 1;
    cfg.split.per_class_train = 3;
    cfg.split.per_class_test = 2;
    cfg.n_values = vec![2];
    cfg.seeds = vec![1];
    cfg.arms = vec![Arm::Transfer];
    cfg.updates = Some(20);
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn bits(p: &ParamStore) -> Vec<(String, Vec<u32>)> {
    p.iter().map(|(n, p)| (n.to_string(), p.value.data().iter().map(|v| v.to_bits()).collect())).collect()
}

#[test]
fn configuration_validation() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Single);
    cfg.n_values = vec![0];
    assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
    let mut cfg = ExperimentConfig::new(ExperimentKind::Table1);
    assert_eq!(cfg.cells().len(), 8 * 2 * 5);
    cfg.seeds = vec![1, 2];
    assert_eq!(cfg.cells().len(), 8 * 2 * 2);
    assert_eq!(ExperimentConfig::new(ExperimentKind::Table3).cells().len(), 5 * 5);
    assert_eq!(ExperimentConfig::new(ExperimentKind::Table4).cells().len(), 4 * 5);
    assert_eq!(ExperimentConfig::new(ExperimentKind::Noise).cells().len(), 8 * 3 * 5);

    // real data without converted weights is refused before any image is read
    let mut cfg = ExperimentConfig::new(ExperimentKind::Single);
    cfg.data = "/nonexistent".into();
    assert!(matches!(Context::new(cfg), Err(Error::MissingWeights(_))));
}

#[test]
fn table4_writes_schema_and_consistent_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(ExperimentKind::Table4, dir.path());
    cfg.n_values = vec![1];
    cfg.augmentation = AugmentationPlan::NONE;
    let records = run_table4(&cfg).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert_eq!(r.accuracy, r.confusion_accuracy());
        let total: u64 = r.confusion.iter().flatten().sum();
        assert_eq!(total, 12);
        assert_eq!(r.train_images, 6);
        assert!(r.final_train_loss.is_finite());
    }
    let (header, rows) = csv_rows(&dir.path().join("table4.csv"));
    assert_eq!(header, ["method", "seed", "accuracy"]);
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["gaussian", "uniform", "xavier", "msra"]);
    for (row, r) in rows.iter().zip(&records) {
        assert_eq!(row[2].parse::<f64>().unwrap(), r.accuracy);
    }
    let (cell_header, cell_rows) = csv_rows(&dir.path().join("table4").join("xavier_s1.csv"));
    assert_eq!(cell_header, ["method", "seed", "accuracy", "wall_clock_s"]);
    assert_eq!(cell_rows.len(), 1);
    assert!(run_table1(&cfg).is_err());
}

#[test]
fn noise_study_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(ExperimentKind::Noise, dir.path());
    cfg.n_values = vec![1];
    cfg.snr_levels = vec![5.0];
    cfg.augmentation = AugmentationPlan::NONE;
    let records = run_noise(&cfg).unwrap();
    assert_eq!(records.len(), 2);
    let (header, rows) = csv_rows(&dir.path().join("noise.csv"));
    assert_eq!(header, ["n", "snr", "seed", "accuracy"]);
    assert_eq!(rows[0][..3], ["1", "none", "1"]);
    assert_eq!(rows[1][..3], ["1", "5", "1"]);
}

#[test]
fn augmentation_original_matches_dataset_size_transfer_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("features");
    let mut t1 = tiny(ExperimentKind::Table1, &dir.path().join("t1"));
    t1.feature_cache = Some(cache.clone());
    let mut t3 = tiny(ExperimentKind::Table3, &dir.path().join("t3"));
    t3.feature_cache = Some(cache.clone());

    let c1 = Context::new(t1.clone()).unwrap();
    let cell1 = t1.cells().remove(0);
    let a = c1.run_cell(&cell1).unwrap();

    // the second context reads every feature back from the persistent cache
    let c3 = Context::new(t3.clone()).unwrap();
    let cell3 = t3.cells().into_iter().find(|c| c.augmentation.is_empty()).unwrap();
    assert_eq!(cell3.id, "original_s1");
    let b = c3.run_cell(&cell3).unwrap();

    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    assert_eq!(a.record.accuracy, b.record.accuracy);
    assert_eq!(a.record.confusion, b.record.confusion);
    assert_eq!(bits(&a.params), bits(&b.params));
}

#[test]
fn training_from_cached_features_equals_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(ExperimentKind::Single, dir.path());
    let ctx = Context::new(cfg).unwrap();
    let images = &ctx.train_pool.images()[..6];
    let labels: Vec<usize> = images.iter().map(|i| i.label).collect();
    let live = ctx.features(images).unwrap();

    let path = dir.path().join("features_train.ssdr");
    save_feature_cache(&path, &live, &labels).unwrap();
    let (cached, cached_labels) = load_feature_cache(&path).unwrap();
    assert_eq!(cached_labels, labels);

    let spec = build_classifier();
    let tc = TrainConfig { max_updates: 15, seed: 3, ..TrainConfig::default() };
    let init = || init_params(&spec, InitMethod::Gaussian, &mut seeding::stream(3, seeding::INIT));
    let (from_live, h1) = train(&spec, init(), &live, &labels, &tc).unwrap();
    let (from_disk, h2) = train(&spec, init(), &cached, &labels, &tc).unwrap();
    assert_eq!(bits(&from_live), bits(&from_disk));
    assert_eq!(h1, h2);
}

#[test]
fn single_run_writes_record_weights_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(ExperimentKind::Single, dir.path());
    let (record, out) = run_single(&cfg).unwrap();
    assert_eq!(record.accuracy, record.confusion_accuracy());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.record).unwrap()).unwrap();
    assert_eq!(json["accuracy"].as_f64().unwrap(), record.accuracy);
    assert_eq!(json["cell"]["id"], "n2_transfer_s1");
    assert!(json["build_id"].is_string());
    let weights = load_weights(&out.weights, &build_classifier()).unwrap();
    assert_eq!(weights.len(), build_classifier().param_table().len());
    let (header, rows) = csv_rows(&out.history);
    assert_eq!(header, ["update", "loss", "lr"]);
    assert_eq!(rows.len(), 20);
}
