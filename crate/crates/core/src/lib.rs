//! Virtual-camera quality control for 3D-printed concrete.
//!
//! A point cloud of a printed wall is rendered through a virtual pinhole
//! camera into an image whose pixels remember which point they show. The
//! image is cut into overlapping tiles, filaments are segmented per tile,
//! per-tile instances are merged, each instance's thickness is profiled with
//! an exact distance transform, and the instance labels are carried back onto
//! the 3-D points.

pub mod backproject;
pub mod camera;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mask;
pub mod pipeline;
pub mod profile;
pub mod render;
pub mod segmentation;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};
