//! Restoration of fractured shapes with twin occupancy decoders.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod checkpoint;
pub mod fracture;
pub mod inference;
pub mod loss;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod samples;
pub mod shapes;
pub mod training;

pub use config::RunConfig;
pub use error::{ExitClass, MendError, Result};
