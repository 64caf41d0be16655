//! Edge-based cuboid pose estimation for unorganized point clouds.
//!
//! The crate is organized as a pipeline: point clouds come in through
//! [`io`], edge points are scored by [`edge`], edge points are grouped into
//! line segments by [`line`], and [`pose`] clubs orthogonal segments into
//! corners and solves for 6-DoF cuboid poses. [`scene`] generates synthetic
//! clutter scenes with ground truth for evaluation, and [`spatial`] provides
//! the k-d tree the geometric stages share.

pub mod cloud;
pub mod edge;
pub mod io;
pub mod line;
pub mod pose;
pub mod scene;
pub mod spatial;

pub use cloud::{CropBox, Point3, PointCloud, Rgb};
