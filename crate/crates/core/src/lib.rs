//! Trainable deep morphological opening/closing for bottom-up text detection,
//! with the segment geometry, losses, trainer and a synthetic benchmark.

pub mod bench;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod map;
pub mod morph;
pub mod train;

pub use error::{Error, Result};
pub use map::{BinaryMap, FeatureMap};
