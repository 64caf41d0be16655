//! Balanced k-d tree over a point cloud for fixed-radius and k-nearest
//! neighbor queries.
//!
//! Radius queries use closed-ball semantics (distance ≤ r) so boundary ties
//! are deterministic. Construction is median-split with the axis cycling by
//! depth, and equal coordinates are ordered by point index, so a given cloud
//! always produces the same tree.

use crate::cloud::{Point3, PointCloud};
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("cannot build a spatial index over an empty cloud")]
    EmptyCloud,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("point index {index} out of bounds for cloud of {len} points")]
    IndexOutOfBounds { index: usize, len: usize },
}

/// Immutable spatial index over a borrowed point slice. The tree itself is
/// an in-place median arrangement of point indices: the node of any
/// subrange sits at its midpoint, so no explicit node structs are needed.
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<u32>,
}

fn coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build_recursive(points: &[Point3], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coord(&points[a as usize], axis)
            .total_cmp(&coord(&points[b as usize], axis))
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_recursive(points, left, depth + 1);
    build_recursive(points, &mut rest[1..], depth + 1);
}

/// Max-heap entry ordered by (distance², index) so the worst of the current
/// k candidates is always on top and ties resolve to the lower index.
#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> Result<Self, SpatialError> {
        Self::from_points(&cloud.points)
    }

    pub fn from_points(points: &'a [Point3]) -> Result<Self, SpatialError> {
        if points.is_empty() {
            return Err(SpatialError::EmptyCloud);
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build_recursive(points, &mut order, 0);
        Ok(KdTree { points, order })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All point indices within `r` of `query` (closed ball), ascending.
    /// A cloud point coincident with the free `query` point is included;
    /// self-exclusion applies only to [`radius_neighbors_of`].
    ///
    /// [`radius_neighbors_of`]: KdTree::radius_neighbors_of
    pub fn radius_neighbors(&self, query: Point3, r: f64) -> Result<Vec<usize>, SpatialError> {
        if !(r > 0.0) {
            return Err(SpatialError::NonPositiveRadius(r));
        }
        let mut out = Vec::new();
        self.radius_search(0, self.order.len(), 0, &query, r, r * r, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    /// Neighbors of the cloud point at `index`, excluding `index` itself.
    pub fn radius_neighbors_of(&self, index: usize, r: f64) -> Result<Vec<usize>, SpatialError> {
        if index >= self.points.len() {
            return Err(SpatialError::IndexOutOfBounds {
                index,
                len: self.points.len(),
            });
        }
        let mut out = self.radius_neighbors(self.points[index], r)?;
        if let Ok(pos) = out.binary_search(&index) {
            out.remove(pos);
        }
        Ok(out)
    }

    fn radius_search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &Point3,
        r: f64,
        r2: f64,
        out: &mut Vec<usize>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        if q.distance_squared(p) <= r2 {
            out.push(idx);
        }
        let delta = coord(q, axis_of(depth)) - coord(p, axis_of(depth));
        if delta <= r {
            self.radius_search(lo, mid, depth + 1, q, r, r2, out);
        }
        if delta >= -r {
            self.radius_search(mid + 1, hi, depth + 1, q, r, r2, out);
        }
    }

    /// The `k` nearest cloud points to `query`, nearest first; distance ties
    /// resolve to the lower index. Returns fewer than `k` only when the
    /// cloud is smaller than `k`.
    pub fn knn(&self, query: Point3, k: usize) -> Vec<usize> {
        self.knn_impl(query, k, None)
    }

    /// The `k` nearest neighbors of the cloud point at `index`, excluding
    /// the point itself.
    pub fn knn_of(&self, index: usize, k: usize) -> Result<Vec<usize>, SpatialError> {
        if index >= self.points.len() {
            return Err(SpatialError::IndexOutOfBounds {
                index,
                len: self.points.len(),
            });
        }
        Ok(self.knn_impl(self.points[index], k, Some(index)))
    }

    fn knn_impl(&self, query: Point3, k: usize, exclude: Option<usize>) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_search(0, self.order.len(), 0, &query, k, exclude, &mut heap);
        let mut best = heap.into_vec();
        best.sort_unstable();
        best.into_iter().map(|c| c.index as usize).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn knn_search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &Point3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        if exclude != Some(idx) {
            let d2 = q.distance_squared(&self.points[idx]);
            heap.push(Candidate {
                d2,
                index: idx as u32,
            });
            if heap.len() > k {
                heap.pop();
            }
        }
        let delta = coord(q, axis_of(depth)) - coord(&self.points[idx], axis_of(depth));
        let (near_lo, near_hi, far_lo, far_hi) = if delta <= 0.0 {
            (lo, mid, mid + 1, hi)
        } else {
            (mid + 1, hi, lo, mid)
        };
        self.knn_search(near_lo, near_hi, depth + 1, q, k, exclude, heap);
        // The far half can only matter while the heap is short of k
        // candidates or the plane is closer than the current worst.
        let worst = heap.peek().map(|c| c.d2).unwrap_or(f64::INFINITY);
        if heap.len() < k || delta * delta <= worst {
            self.knn_search(far_lo, far_hi, depth + 1, q, k, exclude, heap);
        }
    }
}

fn axis_of(depth: usize) -> usize {
    depth % 3
}
