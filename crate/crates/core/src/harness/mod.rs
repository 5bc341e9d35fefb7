//! Seeded experiment runs, aggregation across repeats, and table output.

mod aggregate;
mod config;
mod run;

pub use aggregate::*;
pub use config::{Algorithm, ExperimentConfig};
pub use run::*;
