//! Patch-based frame extrapolation for real-time temporal supersampling.

pub mod blend;
pub mod error;
pub mod image;
pub mod latency;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod scene;
pub mod segment;
pub mod shadow;
pub mod warp;

pub use error::{Error, Result};
pub use image::ImagePlane;
pub use scene::{GBufferSet, RenderedFrame, SceneSpec, TargetGBuffer};
