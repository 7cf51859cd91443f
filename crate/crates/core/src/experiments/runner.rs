//! Grid execution: data preparation, per-cell training and result files.

use std::borrow::Cow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    add_noise_to_dataset, expand, load_dataset, sample_n_per_class, split, synth_dataset, Dataset,
};
use crate::error::{Error, Result};
use crate::experiments::config::{Arm, Cell, ExperimentConfig, ExperimentKind};
use crate::experiments::features::{FeatureSet, FeatureStore, ImageSamples};
use crate::network::{
    build_classifier, build_feature_extractor, load_weights, save_weights, NetworkSpec, ParamStore,
};
use crate::seeding;
use crate::training::{evaluate, init_params, train, EvalResult, History, InitMethod, Samples, TrainConfig};

/// Window for [`ResultRecord::final_train_loss`].
pub const FINAL_LOSS_WINDOW: usize = 100;

/// `git describe` of the build, when available.
pub fn build_id() -> String {
    let describe = option_env!("SSDR_GIT_DESCRIBE").filter(|s| !s.is_empty());
    format!("ssdr-{}{}", env!("CARGO_PKG_VERSION"), describe.map(|d| format!("+{d}")).unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub cell: Cell,
    pub seed: u64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    /// Mean training loss over the last updates.
    pub final_train_loss: f64,
    pub train_images: usize,
    pub wall_clock_secs: f64,
    pub build_id: String,
}

impl ResultRecord {
    /// `trace / sum` of the confusion matrix.
    pub fn confusion_accuracy(&self) -> f64 {
        let total: u64 = self.confusion.iter().flatten().sum();
        let hits: u64 = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

/// A cell's record plus what it trained.
pub struct CellOutcome {
    pub record: ResultRecord,
    pub params: ParamStore,
    pub history: History,
}

/// Everything shared by the cells of one run.
pub struct Context {
    pub config: ExperimentConfig,
    pub train_pool: Dataset,
    pub test: Dataset,
    classifier: NetworkSpec,
    full: NetworkSpec,
    /// Present when any cell uses the frozen extractor.
    features: Option<FeatureStore>,
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    if cfg.is_synthetic() {
        synth_dataset(cfg.split.per_class_train + cfg.split.per_class_test, cfg.split.seed)
    } else {
        load_dataset(Path::new(&cfg.data))
    }
}

/// Loads the extractor weights, or builds a random extractor for synthetic data.
pub fn extractor_params(cfg: &ExperimentConfig) -> Result<ParamStore> {
    let spec = build_feature_extractor();
    let mut params = match &cfg.weights {
        Some(path) => load_weights(path, &spec)?,
        None if cfg.is_synthetic() => {
            log::info!("no extractor weights: using a random MSRA-initialized extractor");
            init_params(
                &spec,
                InitMethod::Msra,
                &mut seeding::stream(cfg.extractor_seed, seeding::EXTRACTOR_INIT),
            )
        }
        None => {
            return Err(Error::MissingWeights(
                "the transfer mode needs converted extractor weights (--weights FILE)".into(),
            ))
        }
    };
    params.set_trainable(false);
    Ok(params)
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        // fail on missing weights before touching the data
        let extractor = if config.arms.contains(&Arm::Transfer) {
            Some(extractor_params(&config)?)
        } else {
            None
        };
        let dataset = load_data(&config)?;
        let (train_pool, test) = split(&dataset, &config.split)?;
        let features = extractor
            .map(|p| {
                FeatureStore::new(
                    build_feature_extractor(),
                    p,
                    config.feature_cache.clone(),
                    config.feature_memory_mb << 20,
                )
            })
            .transpose()?;
        Ok(Self {
            full: build_feature_extractor().concat(&build_classifier())?,
            classifier: build_classifier(),
            config,
            train_pool,
            test,
            features,
        })
    }

    fn store(&self) -> Result<&FeatureStore> {
        self.features
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("transfer cell in a run without the transfer mode".into()))
    }

    /// The training images of a cell after sampling, augmentation and noise.
    pub fn train_set(&self, cell: &Cell) -> Result<Dataset> {
        let sampled = sample_n_per_class(&self.train_pool, cell.n, cell.seed)?;
        let expanded = expand(&sampled, cell.augmentation)?;
        match cell.noise {
            Some(n) if n.apply_to_train => add_noise_to_dataset(&expanded, n.snr_db, cell.seed, seeding::NOISE_TRAIN),
            _ => Ok(expanded),
        }
    }

    pub fn test_set(&self, cell: &Cell) -> Result<Cow<'_, Dataset>> {
        match cell.noise {
            Some(n) if n.apply_to_test => {
                add_noise_to_dataset(&self.test, n.snr_db, cell.seed, seeding::NOISE_TEST).map(Cow::Owned)
            }
            _ => Ok(Cow::Borrowed(&self.test)),
        }
    }

    /// Scores trained weights (classifier for transfer, full network for
    /// scratch) on the clean test split.
    pub fn evaluate_model(&self, arm: Arm, params: &ParamStore) -> Result<EvalResult> {
        let labels = self.test.labels();
        match arm {
            Arm::Transfer => evaluate(&self.classifier, params, &self.store()?.features(self.test.images())?, &labels),
            Arm::Scratch => evaluate(&self.full, params, &ImageSamples(self.test.images()), &labels),
        }
    }

    /// Extractor features of arbitrary images.
    pub fn features(&self, images: &[crate::data::LabeledImage]) -> Result<FeatureSet> {
        self.store()?.features(images)
    }

    pub fn classifier_spec(&self) -> &NetworkSpec {
        &self.classifier
    }

    pub fn full_spec(&self) -> &NetworkSpec {
        &self.full
    }

    pub fn run_cell(&self, cell: &Cell) -> Result<CellOutcome> {
        let start = Instant::now();
        let train_set = self.train_set(cell)?;
        let test_set = self.test_set(cell)?;
        let labels = train_set.labels();
        let tc = TrainConfig {
            max_updates: self.config.updates_for(cell.arm),
            seed: cell.seed,
            transfer: cell.arm == Arm::Transfer,
            init: cell.init,
            schedule: self.config.schedule,
            ..TrainConfig::default()
        };
        let (spec, inputs, test_inputs): (&NetworkSpec, Box<dyn Samples + '_>, Box<dyn Samples + '_>) = match cell.arm {
            Arm::Transfer => {
                let store = self.store()?;
                (
                    &self.classifier,
                    Box::new(store.features(train_set.images())?),
                    Box::new(store.features(test_set.images())?),
                )
            }
            Arm::Scratch => (
                &self.full,
                Box::new(ImageSamples(train_set.images())),
                Box::new(ImageSamples(test_set.images())),
            ),
        };
        let init = init_params(spec, cell.init, &mut seeding::stream(cell.seed, seeding::INIT));
        let (params, history) = train(spec, init, inputs.as_ref(), &labels, &tc)?;
        let eval = evaluate(spec, &params, test_inputs.as_ref(), &test_set.labels())?;
        let record = ResultRecord {
            config: self.config.clone(),
            cell: cell.clone(),
            seed: cell.seed,
            accuracy: eval.accuracy,
            confusion: eval.confusion,
            final_train_loss: history.final_loss(FINAL_LOSS_WINDOW),
            train_images: train_set.len(),
            wall_clock_secs: start.elapsed().as_secs_f64(),
            build_id: build_id(),
        };
        log::info!(
            "{} {}: accuracy {:.4} (loss {:.4}, {:.1}s)",
            self.config.kind,
            cell.id,
            record.accuracy,
            record.final_train_loss,
            record.wall_clock_secs
        );
        Ok(CellOutcome { record, params, history })
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn csv_row(kind: ExperimentKind, r: &ResultRecord) -> Vec<String> {
    let mut row = r.cell.key_fields(kind);
    row.push(r.accuracy.to_string());
    row
}

/// `out/<kind>/<cell-id>.csv`: the merged columns plus wall-clock seconds.
fn write_cell_csv(dir: &Path, kind: ExperimentKind, r: &ResultRecord) -> Result<()> {
    let path = dir.join(format!("{}.csv", r.cell.id));
    let mut w = csv::Writer::from_path(&path)?;
    let mut header: Vec<&str> = kind.columns().to_vec();
    header.push("wall_clock_s");
    w.write_record(&header)?;
    let mut row = csv_row(kind, r);
    row.push(format!("{:.3}", r.wall_clock_secs));
    w.write_record(&row)?;
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Writes the merged `out/<kind>.csv` in grid order.
pub fn write_results_csv(path: &Path, kind: ExperimentKind, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(kind.columns())?;
    for r in records {
        w.write_record(csv_row(kind, r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs every cell of `cfg` on the work-stealing pool and writes the
/// per-cell and merged CSVs (plus `<cell-id>.ssdr` weights when
/// `save_cell_weights` is set). Records come back in grid order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = cfg.kind;
    let cells = cfg.cells();
    let cell_dir = cfg.out_dir.join(kind.name());
    create_dir(&cell_dir)?;
    let records = with_threads(cfg.threads, || -> Result<Vec<ResultRecord>> {
        let ctx = Context::new(cfg.clone())?;
        cells
            .par_iter()
            .map(|cell| {
                let outcome = ctx.run_cell(cell)?;
                write_cell_csv(&cell_dir, kind, &outcome.record)?;
                if cfg.save_cell_weights {
                    save_weights(&outcome.params, &cell_dir.join(format!("{}.ssdr", cell.id)))?;
                }
                Ok(outcome.record)
            })
            .collect()
    })??;
    write_results_csv(&cfg.out_dir.join(format!("{kind}.csv")), kind, &records)?;
    Ok(records)
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.kind == kind {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("expected a {kind} configuration, got {}", cfg.kind)))
    }
}

/// Dataset-size study: transfer versus scratch over `n`.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    expect_kind(cfg, ExperimentKind::Table1)?;
    run_experiment(cfg)
}

/// Augmentation study: five conditions at fixed `n`.
pub fn run_table3(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    expect_kind(cfg, ExperimentKind::Table3)?;
    run_experiment(cfg)
}

/// Initialization study: four methods with combined augmentation.
pub fn run_table4(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    expect_kind(cfg, ExperimentKind::Table4)?;
    run_experiment(cfg)
}

/// Noise study: `n` × SNR level, with a noise-free baseline.
pub fn run_noise(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    expect_kind(cfg, ExperimentKind::Noise)?;
    run_experiment(cfg)
}

/// Paths written by [`run_single`].
#[derive(Clone, Debug)]
pub struct SingleOutputs {
    pub record: PathBuf,
    pub weights: PathBuf,
    pub history: PathBuf,
}

/// One train-and-evaluate run with the first `n`, mode and seed of `cfg`.
/// Writes `single.json`, the trained weights as `single.ssdr`, and the loss
/// history as `single_history.csv` under the output directory.
pub fn run_single(cfg: &ExperimentConfig) -> Result<(ResultRecord, SingleOutputs)> {
    expect_kind(cfg, ExperimentKind::Single)?;
    let mut one = cfg.clone();
    one.n_values.truncate(1);
    one.arms.truncate(1);
    one.seeds.truncate(1);
    create_dir(&one.out_dir)?;
    let cell = one
        .cells()
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty configuration".into()))?;
    let outcome = with_threads(one.threads, || Context::new(one.clone())?.run_cell(&cell))??;
    let outputs = SingleOutputs {
        record: one.out_dir.join("single.json"),
        weights: one.out_dir.join("single.ssdr"),
        history: one.out_dir.join("single_history.csv"),
    };
    let json = serde_json::to_string_pretty(&outcome.record)?;
    std::fs::write(&outputs.record, json).map_err(|e| Error::io(&outputs.record, e))?;
    save_weights(&outcome.params, &outputs.weights)?;
    outcome.history.write_csv(&outputs.history)?;
    Ok((outcome.record, outputs))
}
