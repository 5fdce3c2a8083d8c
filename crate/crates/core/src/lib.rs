pub mod classifier;
pub mod curvature;
pub mod dwt;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod pgm;
pub mod phantom;
pub mod pipeline;
pub mod reconstruct;
pub mod scan;
pub mod sectors;
pub mod segnet;
pub mod surface;

pub use error::{Error, Result};
