//! Edge/interior classification by the resultant-direction score, plus the
//! covariance-eigenvalue baseline used for comparison runs.
//!
//! For a point p with neighbors n_1..n_k inside radius r_s, the unit
//! directions d̂_j = (n_j − p)/‖n_j − p‖ are summed into a resultant R. The
//! score is the mean alignment of the directions with R̂, which algebraically
//! equals ‖R‖/k. Interior points of a uniformly sampled surface see
//! neighbors on all sides, so the directions cancel and the score stays near
//! zero; on a boundary the neighbors all lie to one side and the score rises
//! toward 1.

use crate::cloud::{Point3, PointCloud};
use crate::spatial::{KdTree, SpatialError};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

/// Neighbors closer than this have no usable direction (coincident
/// duplicates); resultants shorter than this count as fully cancelled.
const DIRECTION_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("invalid edge parameters: {0}")]
    InvalidParams(String),
    #[error("operation needs at least {needed} points, cloud has {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeParams {
    /// Neighborhood radius in meters.
    pub r_s: f64,
    /// Score threshold above which a point counts as an edge.
    pub t_h: f64,
    /// Minimum neighbor count; sparser points score 0 so isolated noise
    /// never becomes an edge.
    pub k_min: usize,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            r_s: 0.02,
            t_h: 0.35,
            k_min: 3,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<(), EdgeError> {
        if !self.r_s.is_finite() || self.r_s <= 0.0 {
            return Err(EdgeError::InvalidParams(format!(
                "r_s must be a positive length, got {}",
                self.r_s
            )));
        }
        if !self.t_h.is_finite() || !(0.0..=1.0).contains(&self.t_h) {
            return Err(EdgeError::InvalidParams(format!(
                "t_h must lie in [0, 1], got {}",
                self.t_h
            )));
        }
        if self.k_min < 1 {
            return Err(EdgeError::InvalidParams("k_min must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-point scoring results over a whole cloud.
#[derive(Debug, Clone, Default)]
pub struct ScoredCloud {
    pub scores: Vec<f64>,
    pub neighbor_counts: Vec<usize>,
    pub edge_flags: Vec<bool>,
}

impl ScoredCloud {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn edge_indices(&self) -> Vec<usize> {
        self.edge_flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
            .collect()
    }
}

/// The edge subset of a cloud together with the map back to original indices.
#[derive(Debug, Clone, Default)]
pub struct EdgeExtraction {
    pub scored: ScoredCloud,
    pub edge_cloud: PointCloud,
    /// `index_map[j]` is the original-cloud index of `edge_cloud[j]`.
    pub index_map: Vec<usize>,
}

fn score_one(points: &[Point3], tree: &KdTree, i: usize, r_s: f64, k_min: usize) -> (f64, usize) {
    let neighbors = tree
        .radius_neighbors_of(i, r_s)
        .expect("caller validated the index");
    let p = points[i].coords();
    let mut directions: Vec<Vector3<f64>> = Vec::with_capacity(neighbors.len());
    for &j in &neighbors {
        let d = points[j].coords() - p;
        let norm = d.norm();
        if norm > DIRECTION_EPSILON {
            directions.push(d / norm);
        }
    }
    let k = directions.len();
    if k < k_min {
        return (0.0, k);
    }
    let resultant: Vector3<f64> = directions.iter().sum();
    let norm = resultant.norm();
    if norm <= DIRECTION_EPSILON {
        return (0.0, k);
    }
    let r_hat = resultant / norm;
    let score = directions.iter().map(|d| r_hat.dot(d)).sum::<f64>() / k as f64;
    (score.clamp(0.0, 1.0), k)
}

/// Score of the cloud point at `i`: mean alignment of its neighbor
/// directions with their resultant. Returns `(0, k)` when fewer than
/// `k_min` usable neighbors exist or the resultant cancels exactly.
pub fn point_score(
    cloud: &PointCloud,
    tree: &KdTree,
    i: usize,
    params: &EdgeParams,
) -> Result<(f64, usize), EdgeError> {
    params.validate()?;
    if i >= cloud.len() {
        return Err(SpatialError::IndexOutOfBounds {
            index: i,
            len: cloud.len(),
        }
        .into());
    }
    Ok(score_one(&cloud.points, tree, i, params.r_s, params.k_min))
}

/// Scores every point of the cloud. Points are scored independently and in
/// parallel; the result is identical to a sequential pass.
pub fn score_cloud(cloud: &PointCloud, params: &EdgeParams) -> Result<ScoredCloud, EdgeError> {
    params.validate()?;
    if cloud.is_empty() {
        return Ok(ScoredCloud::default());
    }
    let tree = KdTree::build(cloud)?;
    let per_point: Vec<(f64, usize)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| score_one(&cloud.points, &tree, i, params.r_s, params.k_min))
        .collect();
    let mut scored = ScoredCloud {
        scores: Vec::with_capacity(cloud.len()),
        neighbor_counts: Vec::with_capacity(cloud.len()),
        edge_flags: Vec::with_capacity(cloud.len()),
    };
    for (score, k) in per_point {
        scored.edge_flags.push(score > params.t_h && k >= params.k_min);
        scored.scores.push(score);
        scored.neighbor_counts.push(k);
    }
    Ok(scored)
}

/// Splits off the edge subset of the cloud. An empty cloud yields an empty
/// extraction rather than an error so callers can pass pipelines through.
pub fn extract_edge_points(
    cloud: &PointCloud,
    params: &EdgeParams,
) -> Result<EdgeExtraction, EdgeError> {
    let scored = score_cloud(cloud, params)?;
    let mut edge_cloud = PointCloud::new();
    let mut index_map = Vec::new();
    for (i, &flag) in scored.edge_flags.iter().enumerate() {
        if flag {
            edge_cloud.push(cloud[i]);
            index_map.push(i);
        }
    }
    Ok(EdgeExtraction {
        scored,
        edge_cloud,
        index_map,
    })
}

/// Surface-variation baseline: per-point σ = λ_min / (λ_0 + λ_1 + λ_2) of
/// the covariance over the point's k nearest neighbors (the point itself is
/// its own nearest neighbor). Planar and collinear neighborhoods score 0.
pub fn covariance_edge_baseline(cloud: &PointCloud, k: usize) -> Result<Vec<f64>, EdgeError> {
    if k < 3 {
        return Err(EdgeError::InvalidParams(format!(
            "covariance baseline needs k >= 3, got {k}"
        )));
    }
    if cloud.len() < k {
        return Err(EdgeError::TooFewPoints {
            needed: k,
            have: cloud.len(),
        });
    }
    let tree = KdTree::build(cloud)?;
    let scores = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let neighbors = tree.knn(cloud.points[i], k);
            let mut mean = Vector3::zeros();
            for &j in &neighbors {
                mean += cloud.points[j].coords();
            }
            mean /= neighbors.len() as f64;
            let mut cov = Matrix3::zeros();
            for &j in &neighbors {
                let d = cloud.points[j].coords() - mean;
                cov += d * d.transpose();
            }
            cov /= neighbors.len() as f64;
            let eig = cov.symmetric_eigenvalues();
            let mut lambda = [eig[0], eig[1], eig[2]];
            lambda.sort_by(f64::total_cmp);
            let sum = lambda[0] + lambda[1] + lambda[2];
            if sum <= DIRECTION_EPSILON {
                0.0
            } else {
                (lambda[0] / sum).max(0.0)
            }
        })
        .collect();
    Ok(scores)
}
