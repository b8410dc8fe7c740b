//! Automatic object-removal masks from randomized input sampling.
//!
//! Given an image and a segmentation of the object to remove, the pipeline
//! samples random hole masks around the segmentation, scores the inpainted
//! result of each with a judge, averages the scores into a per-pixel
//! importance map, and thresholds that map into nested candidate masks from
//! which the best-scoring one is chosen.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod candidate;
pub mod config;
pub mod error;
pub mod external;
pub mod harness;
pub mod image;
pub mod importance;
pub mod inpaint;
pub mod io;
pub mod judge;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod scalar;

pub use crate::error::{Error, Result};
pub use crate::mask::{HoleMask, KeepMask, Region};
pub use crate::scalar::Scalar;

pub type Image = crate::image::Image<f64>;
pub type Image32 = crate::image::Image<f32>;
pub type ImportanceMap = crate::importance::ImportanceMap<f64>;
pub type ImportanceMap32 = crate::importance::ImportanceMap<f32>;
pub type JudgeBreakdown = crate::judge::JudgeBreakdown<f64>;
pub type Judge = crate::judge::Judge<f64>;
pub type CandidateSet = crate::candidate::CandidateSet<f64>;
