//! Initialization, the optimization schedule, the training loop,
//! evaluation and gradient diagnostics.

pub mod adam;
pub mod eval;
pub mod gradcheck;
pub mod histogram;
pub mod init;
pub mod samples;
pub mod schedule;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use eval::{evaluate, EvalResult};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use histogram::GradHistogram;
pub use init::{init_params, InitMethod};
pub use samples::Samples;
pub use schedule::{lr_at, LrSchedule};
pub use trainer::{train, History, TrainConfig, UpdateRecord};
