//! Fit a parametric face model to a single image by differentiable
//! rendering.
//!
//! A fit runs three stages over the same scene: a morphable model with pose
//! and spherical-harmonic light, then per-texel reflectance maps, then a
//! normal map. Each stage minimizes ray-traced and vertex-based photometric
//! terms plus regularizers, with gradients from the reverse-mode tape in
//! [`diff`].
//!
//! ```
//! use facefit::fit::{fit, FitConfig, StagePlan};
//! use facefit::fixtures::{face_fixture, FixtureOptions};
//!
//! let fx = face_fixture(&FixtureOptions { grid: 12, size: 24, spp: 1, detail: false, ..Default::default() })?;
//! let cfg = FitConfig {
//!     stages: vec![StagePlan::coarse(10)],
//!     spp: 1,
//!     ..Default::default()
//! };
//! let r = fit(&fx.image, Some(&fx.landmarks), &fx.bundle, &cfg, None, |_| {})?;
//! assert!(r.log.last().unwrap().total.is_finite());
//! # Ok::<(), facefit::Error>(())
//! ```
//!
//! The guide in `book/` explains each part; its examples run as doc-tests.

// index loops mirror the math; `!(x > 0.0)` rejects NaN on purpose
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod diff;
pub mod error;
pub mod math;
pub mod sh;

pub use error::{Error, Result};
pub mod ablation;
pub mod bvh;
pub mod fit;
pub mod fixtures;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod render;
pub mod scene;
pub mod shading;
pub mod trace;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scene-model.md")]
    mod scene_model {}
    #[doc = include_str!("../../../book/src/lighting.md")]
    mod lighting {}
    #[doc = include_str!("../../../book/src/derivatives.md")]
    mod derivatives {}
    #[doc = include_str!("../../../book/src/rendering.md")]
    mod rendering {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
