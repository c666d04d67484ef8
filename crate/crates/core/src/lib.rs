//! Event-assisted 3D Gaussian splatting for low-light scenes.
//!
//! The crate is `no_std` (with `alloc`). The default `std` feature only adds
//! rayon-backed pixel parallelism; outputs are bit-identical either way.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod ctmb;
pub mod error;
pub mod events;
pub mod gradcheck;
pub mod loss;
pub mod math;
pub mod metrics;
mod par;
pub mod provider;
pub mod raster;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use events::{Event, EventMap, EventModelParams, EventStream, NoiseFilterParams};
pub use loss::{LossConfig, LossParts};
pub use provider::{ProviderConfig, ProviderMode, PseudoBrightProvider, PseudoBrightSource};
pub use raster::{backward, render, render_image, GradientSet, Image, RenderGraph};
pub use scene::{Bounds, Camera, Gaussian, ProjectedGaussian, Scene};
pub use synth::{Dataset, TurntableConfig};
pub use train::{train, TrainConfig, TrainOutput};
