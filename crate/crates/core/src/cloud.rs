//! Point cloud primitives shared by every stage of the pipeline.
//!
//! Coordinates are in meters, camera frame: the sensor sits at the origin
//! looking down +z unless an input file says otherwise.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// A single 3D sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_coords(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// Vector from `self` to `other`.
    pub fn to(&self, other: &Point3) -> Vector3<f64> {
        other.coords() - self.coords()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn midpoint(&self, other: &Point3) -> Point3 {
        Point3::new(
            0.5 * (self.x + other.x),
            0.5 * (self.y + other.y),
            0.5 * (self.z + other.z),
        )
    }

    pub fn translated(&self, v: &Vector3<f64>) -> Point3 {
        Point3::new(self.x + v.x, self.y + v.y, self.z + v.z)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

/// Per-point RGB color, only used for annotated output files.
pub type Rgb = [u8; 3];

/// An unorganized point cloud. Point order is preserved by all I/O paths,
/// so indices into the cloud stay valid for its whole lifetime.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Optional per-point color; when present, `colors.len() == points.len()`.
    pub colors: Option<Vec<Rgb>>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Point3) {
        self.points.push(p);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Sub-cloud made of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud::from_points(indices.iter().map(|&i| self.points[i]).collect())
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;

    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

/// Axis-aligned crop box used as an optional pre-filter for real scans
/// that contain ground planes or walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub min: Point3,
    pub max: Point3,
}

impl CropBox {
    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Returns the retained cloud together with the original index of each
    /// retained point.
    pub fn apply(&self, cloud: &PointCloud) -> (PointCloud, Vec<usize>) {
        let mut kept = PointCloud::new();
        let mut indices = Vec::new();
        for (i, p) in cloud.iter().enumerate() {
            if self.contains(p) {
                kept.push(*p);
                indices.push(i);
            }
        }
        (kept, indices)
    }
}
