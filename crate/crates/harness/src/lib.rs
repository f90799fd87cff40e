//! Experiment configuration, evaluation protocols and their CSV/SVG output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod mask;
pub mod stats;
pub mod svg;
pub mod table;

pub use error::{HarnessError, Result};
