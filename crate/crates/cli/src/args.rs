use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ssdr", version, about = "Transfer-learning steel surface defect recognition")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Dataset root with one folder per class, or `synthetic`.
    #[arg(long, global = true, value_name = "DIR", default_value = "synthetic")]
    pub data: String,

    /// Converted extractor weights (SSDR container).
    #[arg(long, global = true, value_name = "FILE")]
    pub weights: Option<PathBuf>,

    /// Run seed; repeat for several seeds per cell.
    #[arg(long = "seed", global = true, value_name = "N")]
    pub seeds: Vec<u64>,

    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Update budget for every training run.
    #[arg(long, global = true, value_name = "N")]
    pub updates: Option<usize>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Transfer,
    Scratch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseSide {
    Train,
    Test,
    Both,
}

/// Options shared by the training and experiment commands.
#[derive(Debug, Args, Default)]
pub struct RunOpts {
    /// Training images per class; repeatable for grids.
    #[arg(long = "n", value_name = "N")]
    pub n: Vec<usize>,

    /// Training mode; repeatable for the dataset-size study.
    #[arg(long = "mode", value_enum)]
    pub modes: Vec<ModeArg>,

    /// Augmentation: none, all, or a `+`-joined subset of brightness, flips, rotations.
    #[arg(long, value_name = "PLAN")]
    pub augment: Option<String>,

    /// Classifier initialization: gaussian, uniform, xavier or msra.
    #[arg(long, value_name = "METHOD")]
    pub init: Option<String>,

    /// Initial learning rate (decays by 0.9 every 500 updates).
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,

    /// Noise level in dB; repeatable for the noise study.
    #[arg(long = "snr", value_name = "DB", allow_negative_numbers = true)]
    pub snr: Vec<f64>,

    /// Which images receive noise.
    #[arg(long, value_enum)]
    pub noise_on: Option<NoiseSide>,

    /// Training images per class in the fixed split.
    #[arg(long, value_name = "N")]
    pub train_per_class: Option<usize>,

    /// Test images per class in the fixed split.
    #[arg(long, value_name = "N")]
    pub test_per_class: Option<usize>,

    /// Seed of the fixed train/test split and of the synthetic generator.
    #[arg(long, value_name = "N")]
    pub split_seed: Option<u64>,

    /// Seed of the random extractor used when no weights are given on synthetic data.
    #[arg(long, value_name = "N")]
    pub extractor_seed: Option<u64>,

    /// Directory persisting extractor features across runs.
    #[arg(long, value_name = "DIR")]
    pub feature_cache: Option<PathBuf>,

    /// In-memory feature budget before spilling to disk.
    #[arg(long, value_name = "MB")]
    pub feature_memory_mb: Option<usize>,

    /// Write every cell's trained weights next to its CSV.
    #[arg(long)]
    pub save_weights: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cache extractor features of the train and test splits to disk.
    Extract {
        #[command(flatten)]
        run: RunOpts,
    },
    /// Train once and evaluate; writes the record, weights and loss history.
    Train {
        #[command(flatten)]
        run: RunOpts,

        /// Train the classifier from `extract` output in this directory.
        #[arg(long, value_name = "DIR")]
        features: Option<PathBuf>,
    },
    /// Evaluate trained weights on the test split.
    Eval {
        #[command(flatten)]
        run: RunOpts,

        /// Trained classifier (transfer) or full network (scratch).
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
    /// Dataset-size study, transfer versus scratch.
    Table1 {
        #[command(flatten)]
        run: RunOpts,
    },
    /// Augmentation study.
    Table3 {
        #[command(flatten)]
        run: RunOpts,
    },
    /// Initialization study.
    Table4 {
        #[command(flatten)]
        run: RunOpts,
    },
    /// Noise study over dataset size and SNR.
    Noise {
        #[command(flatten)]
        run: RunOpts,
    },
    /// Dump extractor feature maps of one image as PNGs.
    Featmaps {
        #[arg(long, value_name = "FILE")]
        image: PathBuf,

        /// Stage to dump: after pool 1, 2 or 3.
        #[arg(long, value_name = "K", default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        pool: u8,

        /// Random extractor seed when no weights are given.
        #[arg(long, value_name = "N")]
        extractor_seed: Option<u64>,
    },
    /// Record gradient histograms during a scratch run.
    Gradhist {
        #[command(flatten)]
        run: RunOpts,

        /// Capture interval in updates.
        #[arg(long, value_name = "K", default_value_t = 50)]
        every: usize,
    },
    /// Write a synthetic dataset as a class-folder tree.
    Synth {
        /// Images per class.
        #[arg(long, value_name = "N", default_value_t = 300)]
        per_class: usize,
    },
    /// Gradient checks of the classifier head and the full network.
    Check {
        /// Parameters sampled per layer.
        #[arg(long, value_name = "N", default_value_t = 200)]
        samples: usize,
    },
}
