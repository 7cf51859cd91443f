pub mod data;
pub mod error;
pub mod experiments;
pub mod network;
pub mod ops;
pub mod seeding;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use ops::Mode;
pub use tensor::{Real, Tensor};
