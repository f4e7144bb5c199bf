//! Core library of the sodaug toolkit: dataset modelling, background
//! inpainting, appearance features, background/patch matching, object
//! synthesis, distribution analysis, and model evaluation.

pub mod analyzer;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod features;
pub mod inpaint;
pub mod matcher;
pub mod parallel;
pub mod raster;
pub mod rng;
pub mod synthesis;

pub use error::{Error, Result};
