//! Focal-length self-calibration from images of planar octagonal targets.
//!
//! A red octagon with a white border (a stop sign) is segmented by color,
//! its outline is traced with subpixel edges, eight edges are fitted by
//! sequential RANSAC, and the eight corners give a plane-to-image
//! homography. With the principal point fixed at the image center, each
//! homography yields one `(fx, fy)` measurement, and a Kalman filter fuses
//! the measurements of each camera over time.
//!
//! ```
//! use octocal::calib::{focal_from_homography, Intrinsics};
//! use octocal::synth::CameraPose;
//! use nalgebra::Vector3;
//!
//! let k = Intrinsics::centered(1810.4, 1840.1, 1280, 800);
//! let pose = CameraPose::from_angles(35.0, 40.0, 5.0, Vector3::new(0.3, -0.2, 12.0))?;
//! let h = pose.homography(&k)?;
//! let f = focal_from_homography(&h, k.cx, k.cy, 1e4)?;
//! assert!((f.fx - 1810.4).abs() < 1e-6 && (f.fy - 1840.1).abs() < 1e-6);
//! # Ok::<(), octocal::Error>(())
//! ```
//!
//! The modules follow the processing order: [`raster`], [`edge`],
//! [`lines`], [`octagon`], [`calib`], [`filter`]. [`synth`] renders scenes
//! with exact ground truth and [`pipeline`] wires everything together.

pub mod calib;
pub mod edge;
pub mod error;
pub mod filter;
pub mod lines;
pub mod octagon;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/color-and-edges.md")]
    mod color_and_edges {}
    #[doc = include_str!("../../../book/src/lines-and-corners.md")]
    mod lines_and_corners {}
    #[doc = include_str!("../../../book/src/homography-and-focal.md")]
    mod homography_and_focal {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
