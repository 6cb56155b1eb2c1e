//! Cervigram preprocessing: specular-reflection removal by harmonic
//! (Laplace) inpainting and cervix region-of-interest extraction by K-means
//! clustering in CIELAB chromaticity.
//!
//! The typical entry point is [`pipeline::run_pipeline`]; every stage is also
//! usable on its own.

pub mod color;
pub mod error;
pub mod exec;
pub mod image;
pub mod inpaint;
pub mod kmeans;
pub mod phantom;
pub mod pipeline;
pub mod roi;
pub mod specular;

pub use crate::error::{Error, Result};
pub use crate::exec::Execution;
pub use crate::image::{BBox, BinaryMask, Plane, RgbImage8};
