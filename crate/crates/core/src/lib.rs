pub mod channel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hf_oracle;
pub mod matrix;
pub mod numerics;
pub mod ris;
pub mod stat_model;
pub mod stats;
pub mod surface;
pub mod units;

pub use error::{Error, Result};
