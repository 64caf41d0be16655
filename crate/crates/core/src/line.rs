//! Straight-edge recovery from an edge cloud: RANSAC line fitting, the
//! reference-point rule, extreme-point search, and the recursive
//! extract-and-remove loop that yields all segments.

use crate::cloud::{Point3, PointCloud};
use crate::spatial::{KdTree, SpatialError};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pairs closer than this cannot define a line direction.
const DEGENERATE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LineError {
    #[error("operation needs at least {needed} points, got {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),
    #[error("inlier set is empty")]
    EmptyInlierSet,
    #[error("reference index {0} is not a member of the inlier set")]
    ReferenceNotInlier(usize),
    #[error("no extreme-point candidate qualifies")]
    NoExtremeCandidates,
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Infinite line through `point` along the unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    pub point: Point3,
    pub direction: Vector3<f64>,
}

impl LineModel {
    /// Line through two points; `None` when they coincide.
    pub fn from_two_points(a: Point3, b: Point3) -> Option<LineModel> {
        let d = b.coords() - a.coords();
        let norm = d.norm();
        if norm <= DEGENERATE_EPSILON {
            return None;
        }
        Some(LineModel {
            point: a,
            direction: d / norm,
        })
    }

    /// Perpendicular distance from `p` to the line.
    pub fn distance(&self, p: &Point3) -> f64 {
        (p.coords() - self.point.coords()).cross(&self.direction).norm()
    }
}

/// Indices (into the edge cloud) of points within the RANSAC distance
/// threshold of a line model.
pub type InlierSet = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractParams {
    /// RANSAC point-to-line distance threshold in meters.
    pub distance_threshold: f64,
    /// RANSAC hypothesis count per extracted line.
    pub max_iterations: usize,
    /// Consensus floor below which no line is reported. `None` picks
    /// min(30, max(10, |E|/100)): 30 for real-scale edge clouds, scaled
    /// down for small synthetic ones.
    pub min_inliers: Option<usize>,
    /// Hard cap on the number of extracted segments.
    pub max_segments: usize,
    /// Neighborhood radius reused for reference-point counting, extreme
    /// qualification, and the removal window.
    pub r_s: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            distance_threshold: 0.01,
            max_iterations: 1000,
            min_inliers: None,
            max_segments: 100,
            r_s: 0.02,
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<(), LineError> {
        if !self.distance_threshold.is_finite() || self.distance_threshold <= 0.0 {
            return Err(LineError::InvalidParams(format!(
                "distance threshold must be positive, got {}",
                self.distance_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(LineError::InvalidParams("max_iterations must be ≥ 1".into()));
        }
        if let Some(m) = self.min_inliers {
            if m < 2 {
                return Err(LineError::InvalidParams(format!(
                    "min_inliers must be ≥ 2, got {m}"
                )));
            }
        }
        if self.max_segments == 0 {
            return Err(LineError::InvalidParams("max_segments must be ≥ 1".into()));
        }
        if !self.r_s.is_finite() || self.r_s <= 0.0 {
            return Err(LineError::InvalidParams(format!(
                "r_s must be a positive length, got {}",
                self.r_s
            )));
        }
        Ok(())
    }

    /// Consensus floor for an edge cloud of `edge_count` points.
    pub fn effective_min_inliers(&self, edge_count: usize) -> usize {
        self.min_inliers
            .unwrap_or_else(|| (edge_count / 100).clamp(10, 30))
    }
}

/// A straight edge bounded by two extreme points.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub e1: Point3,
    pub e2: Point3,
    /// Edge-cloud indices of the points this segment accounts for.
    pub members: Vec<usize>,
    /// Set when no qualifying candidate existed opposite the reference
    /// point (the far side is occluded or the reference sits at an end).
    pub one_sided: bool,
}

impl LineSegment {
    pub fn length(&self) -> f64 {
        self.e1.distance(&self.e2)
    }

    /// Unit direction from e1 to e2.
    pub fn direction(&self) -> Vector3<f64> {
        (self.e2.coords() - self.e1.coords()).normalize()
    }

    pub fn record(&self) -> SegmentRecord {
        SegmentRecord {
            e1: [self.e1.x, self.e1.y, self.e1.z],
            e2: [self.e2.x, self.e2.y, self.e2.z],
            length: self.length(),
            member_count: self.members.len(),
            one_sided: self.one_sided,
        }
    }
}

/// JSON-facing summary of a segment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentRecord {
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub length: f64,
    pub member_count: usize,
    pub one_sided: bool,
}

fn ransac_line_impl(
    points: &[Point3],
    threshold: f64,
    max_iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(LineModel, InlierSet)> {
    let n = points.len();
    let mut best: Option<(usize, LineModel)> = None;
    for _ in 0..max_iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Some(model) = LineModel::from_two_points(points[i], points[j]) else {
            continue;
        };
        let count = points.iter().filter(|p| model.distance(p) <= threshold).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
        }
    }
    let (_, model) = best?;
    let inliers: InlierSet = points
        .iter()
        .enumerate()
        .filter(|(_, p)| model.distance(p) <= threshold)
        .map(|(i, _)| i)
        .collect();
    Some((model, inliers))
}

/// One RANSAC line over the edge cloud. `Ok(None)` means the best consensus
/// stayed below the min-inlier floor. Deterministic for a fixed seed.
pub fn ransac_line(
    edge_cloud: &PointCloud,
    params: &ExtractParams,
    seed: u64,
) -> Result<Option<(LineModel, InlierSet)>, LineError> {
    params.validate()?;
    if edge_cloud.len() < 2 {
        return Err(LineError::TooFewPoints {
            needed: 2,
            have: edge_cloud.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_inliers = params.effective_min_inliers(edge_cloud.len());
    Ok(ransac_line_impl(
        &edge_cloud.points,
        params.distance_threshold,
        params.max_iterations,
        &mut rng,
    )
    .filter(|(_, inliers)| inliers.len() >= min_inliers))
}

/// The inlier with the most fellow inliers within `r_s`; ties go to the
/// lowest index. This is the anchor that keeps the extreme-point search on
/// one physical edge even when distant collinear points share the line.
pub fn reference_index(
    edge_cloud: &PointCloud,
    inliers: &[usize],
    r_s: f64,
) -> Result<usize, LineError> {
    if inliers.is_empty() {
        return Err(LineError::EmptyInlierSet);
    }
    let positions: Vec<Point3> = inliers.iter().map(|&i| edge_cloud[i]).collect();
    let tree = KdTree::from_points(&positions)?;
    let mut best_index = inliers[0];
    let mut best_count = 0usize;
    let mut first = true;
    for (slot, &cloud_index) in inliers.iter().enumerate() {
        let count = tree.radius_neighbors_of(slot, r_s)?.len();
        if first || count > best_count || (count == best_count && cloud_index < best_index) {
            best_index = cloud_index;
            best_count = count;
            first = false;
        }
    }
    Ok(best_index)
}

/// Extreme points of the inlier run containing the reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extremes {
    /// Edge-cloud index of the extreme nearest the reference point.
    pub e1: usize,
    /// Edge-cloud index of the opposite extreme. In the one-sided case this
    /// may be the reference point itself.
    pub e2: usize,
    pub one_sided: bool,
}

/// A candidate qualifies when every inlier neighbor within `r_s` lies on
/// its reference-point side (all dots of d̂1 with neighbor directions are
/// non-negative) — true only for set extremes. e1 is the qualifying
/// candidate nearest the reference; e2 the nearest one on the opposite
/// side. With no opposite-side candidate the segment is one-sided: e2
/// becomes the farthest same-side candidate, or the reference point itself
/// when e1 is the only candidate.
pub fn extreme_points(
    edge_cloud: &PointCloud,
    inliers: &[usize],
    reference: usize,
    r_s: f64,
) -> Result<Extremes, LineError> {
    if inliers.len() < 2 {
        return Err(LineError::TooFewPoints {
            needed: 2,
            have: inliers.len(),
        });
    }
    if !inliers.contains(&reference) {
        return Err(LineError::ReferenceNotInlier(reference));
    }
    let p_r = edge_cloud[reference].coords();
    let positions: Vec<Point3> = inliers.iter().map(|&i| edge_cloud[i]).collect();
    let tree = KdTree::from_points(&positions)?;

    // (cloud index, distance to p_r, d̂1 = unit direction toward p_r)
    let mut qualifying: Vec<(usize, f64, Vector3<f64>)> = Vec::new();
    for (slot, &cloud_index) in inliers.iter().enumerate() {
        let p_i = positions[slot].coords();
        let to_ref = p_r - p_i;
        let dist = to_ref.norm();
        if dist <= DEGENERATE_EPSILON {
            continue;
        }
        let d1 = to_ref / dist;
        let mut ok = true;
        for neighbor_slot in tree.radius_neighbors_of(slot, r_s)? {
            let d2 = positions[neighbor_slot].coords() - p_i;
            let norm = d2.norm();
            if norm <= DEGENERATE_EPSILON {
                continue;
            }
            if d1.dot(&d2) / norm < 0.0 {
                ok = false;
                break;
            }
        }
        if ok {
            qualifying.push((cloud_index, dist, d1));
        }
    }
    if qualifying.is_empty() {
        return Err(LineError::NoExtremeCandidates);
    }

    let closer = |a: &(usize, f64, Vector3<f64>), b: &(usize, f64, Vector3<f64>)| {
        a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
    };
    let (e1, _, d1_e1) = *qualifying.iter().min_by(|a, b| closer(a, b)).unwrap();
    let opposite: Vec<&(usize, f64, Vector3<f64>)> = qualifying
        .iter()
        .filter(|(_, _, d1)| d1.dot(&d1_e1) < 0.0)
        .collect();
    if let Some((e2, _, _)) = opposite.into_iter().min_by(|a, b| closer(a, b)) {
        return Ok(Extremes {
            e1,
            e2: *e2,
            one_sided: false,
        });
    }
    // One-sided: everything qualifies on e1's side. Take the farthest
    // candidate; with a single candidate the run spans reference→e1.
    let (far, _, _) = *qualifying
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    Ok(Extremes {
        e1,
        e2: if far == e1 { reference } else { far },
        one_sided: true,
    })
}

/// Recursively extracts straight segments: fit a line, anchor it at the
/// reference point, bound it by extremes, then remove the inliers whose
/// projection falls inside the segment interval (extended by r_s) and
/// repeat on the remainder. Member indices refer to the original edge
/// cloud. Deterministic for a fixed seed.
pub fn extract_all_segments(
    edge_cloud: &PointCloud,
    params: &ExtractParams,
    seed: u64,
) -> Result<Vec<LineSegment>, LineError> {
    params.validate()?;
    let min_inliers = params.effective_min_inliers(edge_cloud.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alive: Vec<bool> = vec![true; edge_cloud.len()];
    let mut segments: Vec<LineSegment> = Vec::new();

    while segments.len() < params.max_segments {
        let active: Vec<usize> = (0..edge_cloud.len()).filter(|&i| alive[i]).collect();
        if active.len() < min_inliers.max(2) {
            break;
        }
        let positions: Vec<Point3> = active.iter().map(|&i| edge_cloud[i]).collect();
        let Some((_, local_inliers)) = ransac_line_impl(
            &positions,
            params.distance_threshold,
            params.max_iterations,
            &mut rng,
        )
        .filter(|(_, inliers)| inliers.len() >= min_inliers) else {
            break;
        };
        let inliers: Vec<usize> = local_inliers.iter().map(|&s| active[s]).collect();

        let reference = reference_index(edge_cloud, &inliers, params.r_s)?;
        let extremes = match extreme_points(edge_cloud, &inliers, reference, params.r_s) {
            Ok(e) => e,
            // Degenerate consensus (e.g. all inliers coincident): drop those
            // points and move on rather than loop on them forever.
            Err(LineError::NoExtremeCandidates) => {
                for &i in &inliers {
                    alive[i] = false;
                }
                continue;
            }
            Err(other) => return Err(other),
        };
        let e1 = edge_cloud[extremes.e1];
        let e2 = edge_cloud[extremes.e2];
        let Some(bounded) = LineModel::from_two_points(e1, e2) else {
            for &i in &inliers {
                alive[i] = false;
            }
            continue;
        };

        // Removal window: projections within [proj(e1), proj(e2)] ± r_s.
        let span = e2.coords() - e1.coords();
        let length = span.norm();
        let u = span / length;
        let mut members = Vec::new();
        let mut removed = 0usize;
        for &i in &inliers {
            let proj = (edge_cloud[i].coords() - e1.coords()).dot(&u);
            if proj < -params.r_s || proj > length + params.r_s {
                continue;
            }
            alive[i] = false;
            removed += 1;
            if bounded.distance(&edge_cloud[i]) <= params.distance_threshold {
                members.push(i);
            }
        }
        if removed == 0 {
            // Cannot happen (e1's own projection is 0), but never risk a
            // non-terminating loop on a degenerate consensus.
            break;
        }
        segments.push(LineSegment {
            e1,
            e2,
            members,
            one_sided: extremes.one_sided,
        });
    }
    Ok(segments)
}
