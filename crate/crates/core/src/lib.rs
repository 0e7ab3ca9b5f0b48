//! Land-cover segmentation core.
//!
//! Dense rank-4 tensors with hand-derived gradients, a small atrous
//! encoder/ASPP/decoder network, palette mask codecs, scene tiling, sample
//! archives, segmentation metrics and land-cover change reports.
//!
//! The crate is `no_std` and only needs `alloc`; file and image IO live in
//! the `landseg` companion crate.
#![no_std]

extern crate alloc;

pub mod archive;
pub mod change;
pub mod checkpoint;
mod wire;
pub mod class;
mod error;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod raster;
pub mod split;
pub mod synth;
pub mod tensor;
pub mod tiling;
pub mod train;

pub use class::{LandCover, NUM_CLASSES};
pub use error::{Error, Result};
pub use mask::{ClassPalette, LabelMask};
pub use model::{ModelConfig, SegNet};
pub use raster::RgbImage;
pub use tensor::{Scalar, Shape, Tensor};
