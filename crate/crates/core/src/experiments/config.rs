//! Experiment configuration and the grid cells it expands into.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{AugmentationPlan, NoiseSpec, SplitSpec};
use crate::error::{Error, Result};
use crate::training::{InitMethod, LrSchedule};

/// Data-scale grid of the dataset-size study.
pub const DEFAULT_N_VALUES: [usize; 8] = [10, 30, 50, 70, 90, 110, 130, 150];
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_SNR_LEVELS: [f64; 2] = [30.0, 5.0];
pub const DEFAULT_TRANSFER_UPDATES: usize = 6000;
pub const DEFAULT_SCRATCH_UPDATES: usize = 3000;
pub const DEFAULT_FEATURE_MEMORY_MB: usize = 1536;
/// `data` value selecting the procedural dataset.
pub const SYNTHETIC: &str = "synthetic";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Table1,
    Table3,
    Table4,
    Noise,
    Single,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Table1 => "table1",
            Self::Table3 => "table3",
            Self::Table4 => "table4",
            Self::Noise => "noise",
            Self::Single => "single",
        }
    }

    /// Columns of the merged results CSV.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Table1 | Self::Single => &["n", "mode", "seed", "accuracy"],
            Self::Table3 => &["condition", "seed", "accuracy"],
            Self::Table4 => &["method", "seed", "accuracy"],
            Self::Noise => &["n", "snr", "seed", "accuracy"],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Transfer (frozen extractor, cached features) or training the full network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Transfer,
    Scratch,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Transfer => "transfer",
            Self::Scratch => "scratch",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transfer" => Ok(Self::Transfer),
            "scratch" => Ok(Self::Scratch),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected transfer or scratch)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Dataset root, or `synthetic`.
    pub data: String,
    /// Converted extractor weights. Without them the transfer arm only runs
    /// on synthetic data, over a randomly initialized extractor.
    pub weights: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub n_values: Vec<usize>,
    pub arms: Vec<Arm>,
    pub augmentation: AugmentationPlan,
    pub init: InitMethod,
    pub schedule: LrSchedule,
    /// Noise applied to every cell of non-noise experiments.
    pub noise: Option<NoiseSpec>,
    /// Noise-study levels, run alongside a noise-free baseline.
    pub snr_levels: Vec<f64>,
    pub noise_train: bool,
    pub noise_test: bool,
    /// Fixed train/test partition; its seed also drives the synthetic generator.
    pub split: SplitSpec,
    /// Overrides both per-arm update budgets.
    pub updates: Option<usize>,
    pub transfer_updates: usize,
    pub scratch_updates: usize,
    pub extractor_seed: u64,
    pub out_dir: PathBuf,
    /// Persistent per-image feature cache; features are only kept in memory when unset.
    pub feature_cache: Option<PathBuf>,
    pub feature_memory_mb: usize,
    pub threads: Option<usize>,
    /// Also write each cell's trained weights next to its CSV.
    #[serde(default)]
    pub save_cell_weights: bool,
}

impl ExperimentConfig {
    /// Defaults for `kind`, matching the controlled conditions of each study.
    pub fn new(kind: ExperimentKind) -> Self {
        let (n_values, arms, augmentation, init) = match kind {
            ExperimentKind::Table1 => (
                DEFAULT_N_VALUES.to_vec(),
                vec![Arm::Transfer, Arm::Scratch],
                AugmentationPlan::NONE,
                InitMethod::Gaussian,
            ),
            ExperimentKind::Table3 => (vec![10], vec![Arm::Transfer], AugmentationPlan::NONE, InitMethod::Gaussian),
            ExperimentKind::Table4 => (vec![10], vec![Arm::Transfer], AugmentationPlan::ALL, InitMethod::Gaussian),
            ExperimentKind::Noise => (
                DEFAULT_N_VALUES.to_vec(),
                vec![Arm::Transfer],
                AugmentationPlan::ALL,
                InitMethod::Xavier,
            ),
            ExperimentKind::Single => (vec![150], vec![Arm::Transfer], AugmentationPlan::NONE, InitMethod::Gaussian),
        };
        Self {
            kind,
            data: SYNTHETIC.to_string(),
            weights: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            n_values,
            arms,
            augmentation,
            init,
            schedule: LrSchedule::default(),
            noise: None,
            snr_levels: DEFAULT_SNR_LEVELS.to_vec(),
            noise_train: true,
            noise_test: true,
            split: SplitSpec::default(),
            updates: None,
            transfer_updates: DEFAULT_TRANSFER_UPDATES,
            scratch_updates: DEFAULT_SCRATCH_UPDATES,
            extractor_seed: 0,
            out_dir: PathBuf::from("out"),
            feature_cache: None,
            feature_memory_mb: DEFAULT_FEATURE_MEMORY_MB,
            threads: None,
            save_cell_weights: false,
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.data == SYNTHETIC
    }

    pub fn updates_for(&self, arm: Arm) -> usize {
        self.updates.unwrap_or(match arm {
            Arm::Transfer => self.transfer_updates,
            Arm::Scratch => self.scratch_updates,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.n_values.is_empty() {
            return bad("at least one n value is required".into());
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n == 0) {
            return bad(format!("n must be at least 1 per class, got {n}"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n > self.split.per_class_train) {
            return bad(format!(
                "n = {n} exceeds the {} training images per class",
                self.split.per_class_train
            ));
        }
        if self.split.per_class_train == 0 || self.split.per_class_test == 0 {
            return bad("split sizes must be positive".into());
        }
        if self.arms.is_empty() {
            return bad("at least one mode is required".into());
        }
        if self.updates == Some(0) || self.transfer_updates == 0 || self.scratch_updates == 0 {
            return bad("update budgets must be positive".into());
        }
        let snrs = self.snr_levels.iter().chain(self.noise.as_ref().map(|n| &n.snr_db));
        if let Some(s) = snrs.into_iter().find(|s| !s.is_finite()) {
            return bad(format!("SNR must be finite, got {s}"));
        }
        if self.kind == ExperimentKind::Noise && !(self.noise_train || self.noise_test) {
            return bad("the noise study needs noise on train, test, or both".into());
        }
        let lr = self.schedule;
        if !(lr.initial > 0.0 && lr.initial.is_finite() && lr.decay > 0.0 && lr.decay <= 1.0 && lr.interval > 0) {
            return bad(format!("invalid learning-rate schedule {lr:?}"));
        }
        if self.threads == Some(0) {
            return bad("thread count must be positive".into());
        }
        Ok(())
    }

    /// Expands the configuration into its cells, in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let base = |n: usize, arm: Arm, seed: u64| Cell {
            id: String::new(),
            n,
            arm,
            augmentation: self.augmentation,
            init: self.init,
            noise: self.noise,
            seed,
        };
        let mut cells = Vec::new();
        match self.kind {
            ExperimentKind::Table1 | ExperimentKind::Single => {
                for &n in &self.n_values {
                    for &arm in &self.arms {
                        for &seed in &self.seeds {
                            cells.push(base(n, arm, seed));
                        }
                    }
                }
            }
            ExperimentKind::Table3 => {
                for plan in TABLE3_CONDITIONS {
                    for &seed in &self.seeds {
                        cells.push(Cell {
                            augmentation: plan,
                            ..base(self.n_values[0], self.arms[0], seed)
                        });
                    }
                }
            }
            ExperimentKind::Table4 => {
                for init in InitMethod::ALL {
                    for &seed in &self.seeds {
                        cells.push(Cell {
                            init,
                            ..base(self.n_values[0], self.arms[0], seed)
                        });
                    }
                }
            }
            ExperimentKind::Noise => {
                let levels = std::iter::once(None).chain(self.snr_levels.iter().map(|&s| Some(s)));
                let levels: Vec<Option<f64>> = levels.collect();
                for &n in &self.n_values {
                    for snr in &levels {
                        for &seed in &self.seeds {
                            cells.push(Cell {
                                noise: snr.map(|snr_db| NoiseSpec {
                                    snr_db,
                                    apply_to_train: self.noise_train,
                                    apply_to_test: self.noise_test,
                                }),
                                ..base(n, self.arms[0], seed)
                            });
                        }
                    }
                }
            }
        }
        for c in &mut cells {
            c.id = c.make_id(self.kind);
        }
        cells
    }
}

/// Augmentation conditions compared in the augmentation study.
pub const TABLE3_CONDITIONS: [AugmentationPlan; 5] = [
    AugmentationPlan::NONE,
    AugmentationPlan {
        brightness: true,
        flips: false,
        rotations: false,
    },
    AugmentationPlan {
        brightness: false,
        flips: true,
        rotations: false,
    },
    AugmentationPlan {
        brightness: false,
        flips: false,
        rotations: true,
    },
    AugmentationPlan::ALL,
];

/// `original`, `combined`, or the enabled family names.
pub fn condition_name(plan: AugmentationPlan) -> String {
    if plan.is_empty() {
        "original".into()
    } else if plan == AugmentationPlan::ALL {
        "combined".into()
    } else {
        plan.to_string()
    }
}

/// Text for the `snr` column: `none` or the level in dB.
pub fn snr_label(noise: Option<&NoiseSpec>) -> String {
    noise.map_or_else(|| "none".to_string(), |n| n.snr_db.to_string())
}

/// One train-and-evaluate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub n: usize,
    pub arm: Arm,
    pub augmentation: AugmentationPlan,
    pub init: InitMethod,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
}

impl Cell {
    fn make_id(&self, kind: ExperimentKind) -> String {
        match kind {
            ExperimentKind::Table1 | ExperimentKind::Single => format!("n{}_{}_s{}", self.n, self.arm, self.seed),
            ExperimentKind::Table3 => format!("{}_s{}", condition_name(self.augmentation).replace('+', "-"), self.seed),
            ExperimentKind::Table4 => format!("{}_s{}", self.init, self.seed),
            ExperimentKind::Noise => format!("n{}_snr-{}_s{}", self.n, snr_label(self.noise.as_ref()), self.seed),
        }
    }

    /// Values for [`ExperimentKind::columns`], minus the trailing accuracy.
    pub fn key_fields(&self, kind: ExperimentKind) -> Vec<String> {
        match kind {
            ExperimentKind::Table1 | ExperimentKind::Single => {
                vec![self.n.to_string(), self.arm.to_string(), self.seed.to_string()]
            }
            ExperimentKind::Table3 => vec![condition_name(self.augmentation), self.seed.to_string()],
            ExperimentKind::Table4 => vec![self.init.to_string(), self.seed.to_string()],
            ExperimentKind::Noise => vec![
                self.n.to_string(),
                snr_label(self.noise.as_ref()),
                self.seed.to_string(),
            ],
        }
    }
}
