//! Underwater image enhancement: SRCNN super-resolution followed by
//! multi-scale Retinex, plus classical baselines and quality metrics.

pub mod baselines;
pub mod conv;
pub mod dataops;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod msr;
pub mod pipeline;
pub mod resize;
pub mod scalar;
pub mod srcnn;

pub use error::{Error, Result};
pub use image::{Image, ImageU8};
pub use scalar::Scalar;

pub type ImageF = Image<f64>;
pub type ImageF32 = Image<f32>;
pub type SrcnnModelF = srcnn::SrcnnModel<f64>;
pub type SrcnnModelF32 = srcnn::SrcnnModel<f32>;
