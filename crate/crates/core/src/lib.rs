//! Core model for pointing-based counting benchmarks.
//!
//! Everything here is pure and allocation-only: grid scenes and their
//! rasterization, split builders, prompt and target text, the response
//! parser, reference models, grounding metrics, ablation set builders and
//! the mask-to-point / augmentation math used for real images. File formats,
//! networking and the CLI live in the `pointcount` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod ablation;
pub mod builder;
pub mod metrics;
pub mod models;
pub mod parse;
pub mod prompt;
pub mod real;
pub mod render;
pub mod scene;
pub mod seed;

pub use builder::{Chain, Distractors, Sample, Split};
pub use parse::ParsedResponse;
pub use prompt::Approach;
pub use render::RgbImage;
pub use scene::{Color, GridCoord, GridDims, ObjectSpec, PixelGeometry, Scene, Shape};
