//! Teaching-guided hypothesis pruning for importance-weighted active learning.

pub mod blackbox;
pub mod bounds;
pub mod data;
pub mod error;
pub mod harness;
pub mod hypothesis;
pub mod pruning;
pub mod teaching;

pub use error::{Error, Result};
