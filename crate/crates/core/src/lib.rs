pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod report;
pub mod seed;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
