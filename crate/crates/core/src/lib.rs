//! Single-image dehazing toolkit.
//!
//! The crate bundles three things that together make a self-contained
//! dehazing workbench:
//!
//! * a classical dark-channel-prior pipeline ([`classical`]): dark channel,
//!   airlight and transmission estimation, and scene recovery by inverting
//!   the optical model `I = R*Tr + A*(1 - Tr)`;
//! * a synthetic haze generator ([`synth`]) that builds hazy images and
//!   training patch datasets from clean RGB images plus depth maps via
//!   `Tr = exp(-beta * d)`;
//! * a from-scratch two-stage convolutional network ([`net`]) that fuses the
//!   cardinal color channels and regresses the transmission map at multiple
//!   scales, trained with plain SGD on the MSE loss ([`nn`] holds the layer
//!   primitives with exact backward passes).
//!
//! [`metrics`] provides SSIM / MSE / PSNR and timing helpers for evaluating
//! either route. All arithmetic is double precision; every randomized
//! procedure takes an explicit seed and is bit-reproducible.

pub mod classical;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod raster;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{BiReLU, Conv2DLayer, SGDConfig};
pub use raster::{Airlight, DepthMap, Image, TransmissionMap};
pub use tensor::Tensor;
