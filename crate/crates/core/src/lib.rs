pub mod baselines;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod labels;
pub mod model;
pub mod planner;
pub mod rng;
pub mod sim;
pub mod space;

pub use error::{Error, Result};
