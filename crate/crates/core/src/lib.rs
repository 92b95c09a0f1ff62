//! Wasserstein distortion between images: pooled feature statistics compared
//! under a per-pixel pooling width that moves each location between pixel
//! fidelity and statistical realism.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod distortion;
pub mod error;
pub mod features;
pub mod grid;
pub mod io;
pub mod limits;
pub mod pooling;
pub mod scalar;
pub mod sigma_map;
pub mod synthesis;
pub mod textures;
pub mod wdgrid;

pub use distortion::{
    distortion_heatmap, local_distortion, pairwise_distortion, total_distortion, Backend,
    DistortionReport, Multipliers, PoiPlan, PooledMoments,
};
pub use error::{Error, Result};
pub use features::{FeatureLayer, FeatureNet, FeatureStack, StackSpec};
pub use grid::{Grid, ImageGrid};
pub use pooling::{make_tsg_pmf, PoolingKernel2D, PoolingPmf};
pub use scalar::Real;
pub use sigma_map::SigmaMap;
pub use synthesis::{synthesize, SynthesisConfig, SynthesisTrace};

pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type FeatureStack64 = FeatureStack<f64>;
pub type FeatureStack32 = FeatureStack<f32>;
pub type SigmaMap64 = SigmaMap<f64>;
pub type SigmaMap32 = SigmaMap<f32>;
pub type PoolingPmf64 = PoolingPmf<f64>;
pub type PoolingPmf32 = PoolingPmf<f32>;
pub type PoolingKernel64 = PoolingKernel2D<f64>;
pub type PoolingKernel32 = PoolingKernel2D<f32>;
pub type DistortionReport64 = DistortionReport<f64>;
pub type DistortionReport32 = DistortionReport<f32>;
pub type SynthesisTrace64 = SynthesisTrace<f64>;
pub type SynthesisTrace32 = SynthesisTrace<f32>;
