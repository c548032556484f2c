pub mod error;
pub mod geo;
pub mod ingest;
pub mod transform;

pub use error::{Error, Result};
pub mod numeric;
pub mod prior;
pub mod estimator;
pub mod analytics;
pub mod synth;
pub mod config;
pub mod io;
pub mod cli;
