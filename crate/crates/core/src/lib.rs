pub mod augment;
pub mod cache;
pub mod dsp;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod moe;
pub mod tensor;
pub mod types;

pub use error::{Error, Result};
pub use types::{Label, Modality, Source};
