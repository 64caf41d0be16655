//! Cuboid 6-DoF pose estimation from clubbed edge segments.
//!
//! Orthogonal, intersecting segments are grouped per cuboid; a corner pair
//! yields a triplet (shared corner, two far extremes) whose directions are
//! matched to the local box axes by edge length; the sign ambiguity is
//! resolved by requiring the remaining local axis to point toward the
//! camera. Three corner correspondences give a closed-form rigid transform,
//! refined with every other detected corner of the group.

use crate::cloud::{Point3, PointCloud};
use crate::edge::{extract_edge_points, EdgeError, EdgeExtraction, EdgeParams};
use crate::line::{extract_all_segments, ExtractParams, LineError, LineSegment};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("invalid cuboid dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid pose parameters: {0}")]
    InvalidParams(String),
    #[error("segments do not intersect (closest endpoints {0:.4} m apart)")]
    NotIntersecting(f64),
    #[error("segments are parallel; no corner frame exists")]
    ParallelSegments,
    #[error("corner coincides with the camera origin; viewing direction undefined")]
    CornerAtOrigin,
    #[error("ambiguous dimension labels for edge lengths {0:.4} m and {1:.4} m")]
    AmbiguousLabels(f64, f64),
    #[error("degenerate view: |d·t| = {0:.4} below the grazing threshold")]
    DegenerateView(f64),
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("correspondences are collinear; pose under-determined")]
    CollinearCorrespondences,
    #[error("group has fewer than two segments")]
    UnposableGroup,
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Line(#[from] LineError),
}

/// Cuboid dimensions: length, breadth, height along the local x, y, z axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuboidDims {
    pub l: f64,
    pub b: f64,
    pub h: f64,
}

/// Local box axis, in the order dimensions are listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Length,
    Breadth,
    Height,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Length, Axis::Breadth, Axis::Height];

    pub fn index(self) -> usize {
        match self {
            Axis::Length => 0,
            Axis::Breadth => 1,
            Axis::Height => 2,
        }
    }

    pub fn unit(self) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

/// How many of the three dimensions coincide; poses of non-distinct boxes
/// are only defined up to the matching symmetry rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryClass {
    Distinct,
    TwoEqual,
    Cube,
}

impl std::fmt::Display for SymmetryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SymmetryClass::Distinct => "distinct",
            SymmetryClass::TwoEqual => "two_equal",
            SymmetryClass::Cube => "cube",
        })
    }
}

fn dims_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.max(b)
}

impl CuboidDims {
    pub fn new(l: f64, b: f64, h: f64) -> Self {
        CuboidDims { l, b, h }
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        for (name, v) in [("l", self.l), ("b", self.b), ("h", self.h)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(PoseError::InvalidDims(format!(
                    "{name} must be a positive length, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Length => self.l,
            Axis::Breadth => self.b,
            Axis::Height => self.h,
        }
    }

    /// All 8 corners in the local frame (centroid origin), in a fixed
    /// sign-pattern order.
    pub fn local_corners(&self) -> [Vector3<f64>; 8] {
        let mut corners = [Vector3::zeros(); 8];
        for (i, corner) in corners.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *corner = Vector3::new(sx * self.l / 2.0, sy * self.b / 2.0, sz * self.h / 2.0);
        }
        corners
    }

    pub fn symmetry_class(&self) -> SymmetryClass {
        let lb = dims_equal(self.l, self.b);
        let bh = dims_equal(self.b, self.h);
        let lh = dims_equal(self.l, self.h);
        match (lb, bh, lh) {
            (true, true, _) | (true, _, true) | (_, true, true) => SymmetryClass::Cube,
            (false, false, false) => SymmetryClass::Distinct,
            _ => SymmetryClass::TwoEqual,
        }
    }
}

impl std::str::FromStr for CuboidDims {
    type Err = String;

    /// Parses `L,B,H` in meters.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("expected L,B,H, got `{s}`"));
        }
        let mut vals = [0.0; 3];
        for (v, part) in vals.iter_mut().zip(&parts) {
            *v = part
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("bad dimension `{part}`"))?;
        }
        let dims = CuboidDims::new(vals[0], vals[1], vals[2]);
        dims.validate().map_err(|e| e.to_string())?;
        Ok(dims)
    }
}

/// Tolerances of the grouping and pose stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    /// Max |cos| between directions for segments to count as orthogonal.
    pub orthogonality_tol: f64,
    /// Max distance between closest endpoints for segments to intersect.
    pub intersect_tol: f64,
    /// Relative tolerance when matching an edge length to a dimension.
    pub dim_rel_tol: f64,
    /// Max detected-to-predicted corner distance accepted in refinement.
    pub refine_gate: f64,
    /// |d·t| below this means the view grazes the corner face.
    pub degenerate_dot: f64,
}

impl Default for PoseParams {
    fn default() -> Self {
        PoseParams {
            orthogonality_tol: 0.1,
            intersect_tol: 0.01,
            dim_rel_tol: 0.2,
            refine_gate: 0.02,
            degenerate_dot: 0.05,
        }
    }
}

impl PoseParams {
    pub fn validate(&self) -> Result<(), PoseError> {
        let checks = [
            ("orthogonality_tol", self.orthogonality_tol, 1.0),
            ("dim_rel_tol", self.dim_rel_tol, 1.0),
            ("degenerate_dot", self.degenerate_dot, 1.0),
        ];
        for (name, v, max) in checks {
            if !v.is_finite() || v <= 0.0 || v >= max {
                return Err(PoseError::InvalidParams(format!(
                    "{name} must lie in (0, {max}), got {v}"
                )));
            }
        }
        for (name, v) in [("intersect_tol", self.intersect_tol), ("refine_gate", self.refine_gate)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(PoseError::InvalidParams(format!(
                    "{name} must be a positive length, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// True when the segment directions are orthogonal within `tol` on |cos|.
pub fn segments_orthogonal(l1: &LineSegment, l2: &LineSegment, tol: f64) -> bool {
    l1.direction().dot(&l2.direction()).abs() <= tol
}

/// Closest pair among the four endpoint combinations, with the far ends.
fn closest_endpoint_pair(l1: &LineSegment, l2: &LineSegment) -> (f64, Point3, Point3, Point3) {
    let mut best = (f64::INFINITY, Point3::ORIGIN, Point3::ORIGIN, Point3::ORIGIN);
    for (a, far_a) in [(l1.e1, l1.e2), (l1.e2, l1.e1)] {
        for (b, far_b) in [(l2.e1, l2.e2), (l2.e2, l2.e1)] {
            let d = a.distance(&b);
            if d < best.0 {
                best = (d, a.midpoint(&b), far_a, far_b);
            }
        }
    }
    best
}

/// Corner point shared by two segments: the midpoint of the closest
/// endpoint pair when that pair is within `tol`, else `None`.
pub fn segments_intersect(l1: &LineSegment, l2: &LineSegment, tol: f64) -> Option<Point3> {
    let (d, corner, _, _) = closest_endpoint_pair(l1, l2);
    (d <= tol).then_some(corner)
}

/// One clubbed l1–l2 handoff and the corner it pivots on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainLink {
    pub a: usize,
    pub b: usize,
    pub corner: Point3,
}

/// Segments clubbed as edges of one cuboid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeGroup {
    /// Indices into the segment array, in discovery order.
    pub segment_indices: Vec<usize>,
    /// Consecutive pairs walked by the clubbing chain.
    pub chain: Vec<ChainLink>,
    /// Corners of every orthogonal intersecting pair within the group,
    /// deduplicated within the intersection tolerance.
    pub corners: Vec<Point3>,
}

impl EdgeGroup {
    /// A singleton group has no corner and cannot be posed.
    pub fn posable(&self) -> bool {
        self.segment_indices.len() >= 2
    }
}

fn club_edges_masked(
    segments: &[LineSegment],
    start: usize,
    params: &PoseParams,
    consumed: &mut [bool],
) -> EdgeGroup {
    let mut group = EdgeGroup::default();
    let mut current = start;
    consumed[start] = true;
    group.segment_indices.push(start);
    loop {
        let mut partner = None;
        for (j, seg) in segments.iter().enumerate() {
            if consumed[j] || !segments_orthogonal(&segments[current], seg, params.orthogonality_tol)
            {
                continue;
            }
            if let Some(corner) = segments_intersect(&segments[current], seg, params.intersect_tol)
            {
                partner = Some((j, corner));
                break;
            }
        }
        let Some((j, corner)) = partner else { break };
        consumed[j] = true;
        group.segment_indices.push(j);
        group.chain.push(ChainLink {
            a: current,
            b: j,
            corner,
        });
        current = j;
    }

    // All-pairs corners give the refinement stage more correspondences
    // than the chain alone (e.g. the 4th corner of a rectangle of edges).
    for (i, &si) in group.segment_indices.iter().enumerate() {
        for &sj in group.segment_indices.iter().skip(i + 1) {
            if !segments_orthogonal(&segments[si], &segments[sj], params.orthogonality_tol) {
                continue;
            }
            let Some(corner) =
                segments_intersect(&segments[si], &segments[sj], params.intersect_tol)
            else {
                continue;
            };
            if group
                .corners
                .iter()
                .all(|c| c.distance(&corner) > params.intersect_tol)
            {
                group.corners.push(corner);
            }
        }
    }
    group
}

/// Clubs segments starting from `start`: repeatedly hands off to the
/// lowest-indexed unconsumed segment orthogonal to and intersecting the
/// current one. A segment with no partner comes back as a singleton group.
pub fn club_edges(segments: &[LineSegment], start: usize, params: &PoseParams) -> EdgeGroup {
    let mut consumed = vec![false; segments.len()];
    club_edges_masked(segments, start, params, &mut consumed)
}

/// Clubs every segment exactly once, iterating unconsumed start indices in
/// order. Groups are disjoint by construction.
pub fn club_all_groups(segments: &[LineSegment], params: &PoseParams) -> Vec<EdgeGroup> {
    let mut consumed = vec![false; segments.len()];
    let mut groups = Vec::new();
    for start in 0..segments.len() {
        if !consumed[start] {
            groups.push(club_edges_masked(segments, start, params, &mut consumed));
        }
    }
    groups
}

/// Shared corner p1, far extremes p2/p3, and the direction frame
/// d1 = (p2−p1)/‖·‖, d2 = (p3−p1)/‖·‖, t = −p1/‖p1‖, d = d1×d2 normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerTriplet {
    pub p1: Point3,
    pub p2: Point3,
    pub p3: Point3,
    pub d1: Vector3<f64>,
    pub d2: Vector3<f64>,
    pub t: Vector3<f64>,
    pub d: Vector3<f64>,
    /// ‖p2 − p1‖ and ‖p3 − p1‖: the measured edge lengths used for both
    /// dimension labels and the local positions of p2/p3.
    pub len1: f64,
    pub len2: f64,
}

pub fn corner_triplet(
    l1: &LineSegment,
    l2: &LineSegment,
    intersect_tol: f64,
) -> Result<CornerTriplet, PoseError> {
    let (dist, p1, p2, p3) = closest_endpoint_pair(l1, l2);
    if dist > intersect_tol {
        return Err(PoseError::NotIntersecting(dist));
    }
    let v1 = p2.coords() - p1.coords();
    let v2 = p3.coords() - p1.coords();
    let (len1, len2) = (v1.norm(), v2.norm());
    if len1 <= 1e-12 || len2 <= 1e-12 {
        return Err(PoseError::ParallelSegments);
    }
    let d1 = v1 / len1;
    let d2 = v2 / len2;
    let cross = d1.cross(&d2);
    let cross_norm = cross.norm();
    if cross_norm <= 1e-9 {
        return Err(PoseError::ParallelSegments);
    }
    let p1_norm = p1.coords().norm();
    if p1_norm <= 1e-9 {
        return Err(PoseError::CornerAtOrigin);
    }
    Ok(CornerTriplet {
        p1,
        p2,
        p3,
        d1,
        d2,
        t: -p1.coords() / p1_norm,
        d: cross / cross_norm,
        len1,
        len2,
    })
}

/// Dimensions whose value is within `rel_tol` (relative) of `length`, in
/// axis order.
pub fn matching_axes(length: f64, dims: &CuboidDims, rel_tol: f64) -> Vec<Axis> {
    Axis::ALL
        .iter()
        .copied()
        .filter(|&a| (length - dims.dim(a)).abs() <= rel_tol * dims.dim(a))
        .collect()
}

/// The unique dimension matching `length`, or `None` when no dimension or
/// more than one matches (equal-dimension boxes always land here and are
/// resolved by discovery order at the pipeline level).
pub fn classify_edge_dimension(length: f64, dims: &CuboidDims, rel_tol: f64) -> Option<Axis> {
    let matches = matching_axes(length, dims, rel_tol);
    match matches.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

/// First pair of distinct axis labels for the two edge lengths, trying
/// axes in declaration order (the discovery-order rule for equal dims).
fn resolve_labels(
    len1: f64,
    len2: f64,
    dims: &CuboidDims,
    rel_tol: f64,
) -> Result<(Axis, Axis), PoseError> {
    let m1 = matching_axes(len1, dims, rel_tol);
    let m2 = matching_axes(len2, dims, rel_tol);
    for &a1 in &m1 {
        for &a2 in &m2 {
            if a1 != a2 {
                return Ok((a1, a2));
            }
        }
    }
    Err(PoseError::AmbiguousLabels(len1, len2))
}

/// Camera-frame corner paired with its local-frame position.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Point3, Vector3<f64>)>,
    pub axis1: Axis,
    pub axis2: Axis,
    /// Accepted signs: local direction of d1 is s1·axis1, of d2 is s2·axis2.
    pub s1: f64,
    pub s2: f64,
}

fn permutation_sign(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        _ => -1.0,
    }
}

/// Maps the triplet onto the local frame. The hypothesis d1 = +axis1,
/// d2 = +axis2 is accepted when it makes the remaining local axis point
/// toward the camera (s1·s2·parity·(d·t) > 0); otherwise d2's sign flips.
/// p1 sits on the camera-facing face: its remaining-axis coordinate is
/// +dim/2, and each labeled coordinate is −sign·dim/2.
pub fn assign_directions(
    triplet: &CornerTriplet,
    axis1: Axis,
    axis2: Axis,
    dims: &CuboidDims,
    degenerate_dot: f64,
) -> Result<CorrespondenceSet, PoseError> {
    if axis1 == axis2 {
        return Err(PoseError::AmbiguousLabels(triplet.len1, triplet.len2));
    }
    let remaining = Axis::ALL
        .into_iter()
        .find(|a| *a != axis1 && *a != axis2)
        .expect("two distinct axes leave one remaining");

    let dt = triplet.d.dot(&triplet.t);
    if dt.abs() < degenerate_dot {
        return Err(PoseError::DegenerateView(dt.abs()));
    }
    // Locally, (s1·axis1) × (s2·axis2) = s1·s2·parity·remaining, and that
    // crossed direction is observed in camera frame as d. Pointing the
    // remaining axis at the camera therefore requires s1·s2·parity·(d·t) > 0.
    let parity = permutation_sign(axis1.index(), axis2.index(), remaining.index());
    let s1 = 1.0;
    let s2 = if parity * dt > 0.0 { 1.0 } else { -1.0 };
    debug_assert!(s1 * s2 * parity * dt > 0.0);

    let mut p1_local = Vector3::zeros();
    p1_local[axis1.index()] = -s1 * dims.dim(axis1) / 2.0;
    p1_local[axis2.index()] = -s2 * dims.dim(axis2) / 2.0;
    p1_local[remaining.index()] = dims.dim(remaining) / 2.0;
    let p2_local = p1_local + triplet.len1 * s1 * axis1.unit();
    let p3_local = p1_local + triplet.len2 * s2 * axis2.unit();

    Ok(CorrespondenceSet {
        pairs: vec![
            (triplet.p1, p1_local),
            (triplet.p2, p2_local),
            (triplet.p3, p3_local),
        ],
        axis1,
        axis2,
        s1,
        s2,
    })
}

/// Rigid transform from the local object frame to the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn transform(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local + self.translation
    }

    /// Unit quaternion as (w, x, y, z) with w ≥ 0.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        let mut wxyz = [q.w, q.i, q.j, q.k];
        let flip = wxyz[0] < 0.0
            || (wxyz[0] == 0.0
                && wxyz[1..].iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0));
        if flip {
            for v in &mut wxyz {
                *v = -*v;
            }
        }
        wxyz
    }

    /// Max deviation of RᵀR from identity plus |det−1|.
    pub fn rotation_defect(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.amax() + (self.rotation.determinant() - 1.0).abs()
    }
}

fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    (((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
}

/// Least-squares rigid transform over (camera, local) pairs via the SVD of
/// the centered cross-covariance, with the reflection case corrected to a
/// proper rotation. Exact on noiseless consistent input.
pub fn pose_from_correspondences(
    pairs: &[(Point3, Vector3<f64>)],
) -> Result<Pose, PoseError> {
    if pairs.len() < 3 {
        return Err(PoseError::TooFewCorrespondences(pairs.len()));
    }
    let n = pairs.len() as f64;
    let c_cam: Vector3<f64> = pairs.iter().map(|(c, _)| c.coords()).sum::<Vector3<f64>>() / n;
    let c_loc: Vector3<f64> = pairs.iter().map(|(_, l)| *l).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (cam, loc) in pairs {
        h += (loc - c_loc) * (cam.coords() - c_cam).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    // Rank < 2 means the points are collinear (or coincident): rotation
    // about the common axis is unobservable.
    if sv[1] <= 1e-9 * sv[0].max(1e-30) {
        return Err(PoseError::CollinearCorrespondences);
    }
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum())) * u.transpose();
    Ok(Pose {
        rotation,
        translation: c_cam - rotation * c_loc,
    })
}

/// Result of corner-based refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    /// Detected corners matched to predicted ones (≤ 8).
    pub matched: usize,
    /// Mean matched-corner distance under the returned pose.
    pub mean_residual: Option<f64>,
}

/// Re-solves the pose from detected corners greedily matched to the 8
/// corners predicted by `initial` (each used at most once, matches beyond
/// `gate` rejected). Falls back to `initial` when fewer than 3 corners
/// match or the matched set is degenerate.
pub fn refine_pose(
    initial: &Pose,
    corners: &[Point3],
    dims: &CuboidDims,
    gate: f64,
) -> Refinement {
    let local = dims.local_corners();
    let predicted: Vec<Vector3<f64>> = local.iter().map(|c| initial.transform(c)).collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, corner) in corners.iter().enumerate() {
        for (pi, pred) in predicted.iter().enumerate() {
            let d = (corner.coords() - pred).norm();
            if d <= gate {
                candidates.push((d, ci, pi));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut corner_used = vec![false; corners.len()];
    let mut predicted_used = vec![false; 8];
    let mut pairs: Vec<(Point3, Vector3<f64>)> = Vec::new();
    for (_, ci, pi) in candidates {
        if !corner_used[ci] && !predicted_used[pi] {
            corner_used[ci] = true;
            predicted_used[pi] = true;
            pairs.push((corners[ci], local[pi]));
        }
    }

    let pose = match pose_from_correspondences(&pairs) {
        Ok(p) => p,
        Err(_) => *initial,
    };
    let mean_residual = (!pairs.is_empty()).then(|| {
        pairs
            .iter()
            .map(|(cam, loc)| (cam.coords() - pose.transform(loc)).norm())
            .sum::<f64>()
            / pairs.len() as f64
    });
    Refinement {
        pose,
        matched: pairs.len(),
        mean_residual,
    }
}

/// Rotations mapping the box onto itself: signed permutations with det +1
/// that only exchange axes of equal dimension. Distinct dims give the
/// identity plus the three 180° axis flips; a cube gives all 24.
pub fn cuboid_symmetry_rotations(dims: &CuboidDims) -> Vec<Matrix3<f64>> {
    let d = [dims.l, dims.b, dims.h];
    let mut out = Vec::new();
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        if (0..3).any(|j| !dims_equal(d[perm[j]], d[j])) {
            continue;
        }
        for signs in 0..8u8 {
            let s = [
                if signs & 1 == 0 { 1.0 } else { -1.0 },
                if signs & 2 == 0 { 1.0 } else { -1.0 },
                if signs & 4 == 0 { 1.0 } else { -1.0 },
            ];
            let mut m: Matrix3<f64> = Matrix3::zeros();
            for j in 0..3 {
                m[(perm[j], j)] = s[j];
            }
            if (m.determinant() - 1.0).abs() < 1e-12 {
                out.push(m);
            }
        }
    }
    out
}

/// Pose discrepancy modulo box symmetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDelta {
    pub rotation_deg: f64,
    pub translation_m: f64,
}

/// Error between an estimate and ground truth, minimized over the box's
/// symmetry rotations (all of which describe the same physical box).
pub fn pose_error(estimate: &Pose, truth: &Pose, dims: &CuboidDims) -> PoseDelta {
    let mut best = f64::INFINITY;
    for s in cuboid_symmetry_rotations(dims) {
        let delta = estimate.rotation.transpose() * truth.rotation * s;
        best = best.min(rotation_angle(&delta));
    }
    PoseDelta {
        rotation_deg: best.to_degrees(),
        translation_m: (estimate.translation - truth.translation).norm(),
    }
}

/// Per-estimate quality report.
#[derive(Debug, Clone, PartialEq)]
pub struct Quality {
    pub corner_count: usize,
    pub matched_corners: usize,
    pub mean_corner_residual: Option<f64>,
    pub one_sided_segments: usize,
    pub symmetry: SymmetryClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// The 3-point pose the refinement started from.
    pub initial_pose: Pose,
    pub group_index: usize,
    pub quality: Quality,
}

/// JSON-facing pose + quality record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoseRecord {
    pub rotation: [[f64; 3]; 3],
    pub quaternion_wxyz: [f64; 4],
    pub translation: [f64; 3],
    pub corner_count: usize,
    pub matched_corners: usize,
    pub mean_corner_residual: Option<f64>,
    pub one_sided_segments: usize,
    pub symmetry: String,
}

impl PoseEstimate {
    pub fn record(&self) -> PoseRecord {
        let r = &self.pose.rotation;
        PoseRecord {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            quaternion_wxyz: self.pose.quaternion_wxyz(),
            translation: [
                self.pose.translation.x,
                self.pose.translation.y,
                self.pose.translation.z,
            ],
            corner_count: self.quality.corner_count,
            matched_corners: self.quality.matched_corners,
            mean_corner_residual: self.quality.mean_corner_residual,
            one_sided_segments: self.quality.one_sided_segments,
            symmetry: self.quality.symmetry.to_string(),
        }
    }
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTimings {
    pub edge_seconds: f64,
    pub segment_seconds: f64,
    pub fitting_seconds: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.edge_seconds + self.segment_seconds + self.fitting_seconds
    }
}

/// All pipeline knobs in one place.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineParams {
    pub edge: EdgeParams,
    pub extract: ExtractParams,
    pub pose: PoseParams,
}

/// Everything the pipeline produced, including intermediates for
/// inspection and annotation.
#[derive(Debug)]
pub struct PipelineOutput {
    pub extraction: EdgeExtraction,
    pub segments: Vec<LineSegment>,
    pub groups: Vec<EdgeGroup>,
    pub estimates: Vec<PoseEstimate>,
    pub timings: StageTimings,
    /// Human-readable reasons for groups that produced no pose.
    pub diagnostics: Vec<String>,
}

fn pose_for_group(
    segments: &[LineSegment],
    group: &EdgeGroup,
    dims: &CuboidDims,
    params: &PoseParams,
) -> Result<(Pose, Refinement), PoseError> {
    let mut last_err = PoseError::UnposableGroup;
    // Chain pairs in discovery order; the first workable pair anchors the
    // initial pose, the rest of the group only enters via refinement.
    for link in &group.chain {
        let attempt = corner_triplet(&segments[link.a], &segments[link.b], params.intersect_tol)
            .and_then(|triplet| {
                let (a1, a2) =
                    resolve_labels(triplet.len1, triplet.len2, dims, params.dim_rel_tol)?;
                let corr = assign_directions(&triplet, a1, a2, dims, params.degenerate_dot)?;
                pose_from_correspondences(&corr.pairs)
            });
        match attempt {
            Ok(initial) => {
                let refined = refine_pose(&initial, &group.corners, dims, params.refine_gate);
                return Ok((initial, refined));
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Full pipeline: edge scoring → segment extraction → clubbing → per-group
/// pose estimation with refinement. Groups that cannot be posed are
/// reported in `diagnostics` rather than guessed at.
pub fn estimate_poses(
    cloud: &PointCloud,
    dims: &CuboidDims,
    params: &PipelineParams,
    seed: u64,
) -> Result<PipelineOutput, PoseError> {
    dims.validate()?;
    params.pose.validate()?;

    let start = Instant::now();
    let extraction = extract_edge_points(cloud, &params.edge)?;
    let edge_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let segments = extract_all_segments(&extraction.edge_cloud, &params.extract, seed)?;
    let segment_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let groups = club_all_groups(&segments, &params.pose);
    let mut estimates = Vec::new();
    let mut diagnostics = Vec::new();
    for (group_index, group) in groups.iter().enumerate() {
        if !group.posable() {
            diagnostics.push(format!(
                "group {group_index}: single segment, nothing to club"
            ));
            continue;
        }
        match pose_for_group(&segments, group, dims, &params.pose) {
            Ok((initial_pose, refined)) => {
                let one_sided_segments = group
                    .segment_indices
                    .iter()
                    .filter(|&&s| segments[s].one_sided)
                    .count();
                estimates.push(PoseEstimate {
                    pose: refined.pose,
                    initial_pose,
                    group_index,
                    quality: Quality {
                        corner_count: group.corners.len(),
                        matched_corners: refined.matched,
                        mean_corner_residual: refined.mean_residual,
                        one_sided_segments,
                        symmetry: dims.symmetry_class(),
                    },
                });
            }
            Err(e) => diagnostics.push(format!("group {group_index}: {e}")),
        }
    }
    let fitting_seconds = start.elapsed().as_secs_f64();

    Ok(PipelineOutput {
        extraction,
        segments,
        groups,
        estimates,
        timings: StageTimings {
            edge_seconds,
            segment_seconds,
            fitting_seconds,
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(e1: [f64; 3], e2: [f64; 3]) -> LineSegment {
        LineSegment {
            e1: Point3::from(e1),
            e2: Point3::from(e2),
            members: Vec::new(),
            one_sided: false,
        }
    }

    fn default_dims() -> CuboidDims {
        CuboidDims::new(0.2, 0.1, 0.05)
    }

    #[test]
    fn orthogonality_examples() {
        let x = seg([0.0, 0.0, 0.0], [0.2, 0.0, 0.0]);
        let y = seg([0.0, 0.0, 0.0], [0.0, 0.1, 0.0]);
        let x2 = seg([0.0, 0.1, 0.0], [0.2, 0.1, 0.0]);
        assert!(segments_orthogonal(&x, &y, 0.1));
        assert!(!segments_orthogonal(&x, &x2, 0.1));
        let deg85 = 85f64.to_radians();
        let tilted = seg([0.0, 0.0, 0.0], [0.2 * deg85.cos(), 0.2 * deg85.sin(), 0.0]);
        assert!(segments_orthogonal(&x, &tilted, 0.1));
    }

    #[test]
    fn intersection_examples() {
        let a = seg([0.0, 0.0, 1.0], [0.2, 0.0, 1.0]);
        let b = seg([0.0, 0.0, 1.0], [0.0, 0.1, 1.0]);
        assert_eq!(
            segments_intersect(&a, &b, 0.01),
            Some(Point3::new(0.0, 0.0, 1.0))
        );

        let c = seg([0.0, 0.008, 1.0], [0.0, 0.1, 1.0]);
        let corner = segments_intersect(&a, &c, 0.01).unwrap();
        assert!((corner.y - 0.004).abs() < 1e-12, "midpoint rule");

        let skew = seg([0.0, 0.05, 1.0], [0.0, 0.1, 1.0]);
        assert_eq!(segments_intersect(&a, &skew, 0.01), None);
    }

    #[test]
    fn clubbing_collects_three_orthogonal_segments_at_a_corner() {
        let segments = vec![
            seg([0.0, 0.0, 0.0], [0.2, 0.0, 0.0]),
            seg([0.0, 0.0, 0.0], [0.0, 0.1, 0.0]),
            seg([0.0, 0.0, 0.0], [0.0, 0.0, 0.05]),
        ];
        let group = club_edges(&segments, 0, &PoseParams::default());
        assert_eq!(group.segment_indices, [0, 1, 2]);
        assert!(group.posable());
        // All three pairs intersect at the same physical corner; dedup
        // keeps one corner point.
        assert_eq!(group.corners.len(), 1);
    }

    #[test]
    fn isolated_segment_is_an_unposable_singleton() {
        let segments = vec![seg([0.0, 0.0, 0.0], [0.2, 0.0, 0.0])];
        let group = club_edges(&segments, 0, &PoseParams::default());
        assert_eq!(group.segment_indices, [0]);
        assert!(!group.posable());
        assert!(group.corners.is_empty());
    }

    #[test]
    fn two_cuboids_club_into_disjoint_groups() {
        let segments = vec![
            seg([0.0, 0.0, 0.0], [0.2, 0.0, 0.0]),
            seg([0.0, 0.0, 0.0], [0.0, 0.1, 0.0]),
            seg([1.0, 1.0, 0.0], [1.2, 1.0, 0.0]),
            seg([1.0, 1.0, 0.0], [1.0, 1.1, 0.0]),
        ];
        let groups = club_all_groups(&segments, &PoseParams::default());
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].segment_indices, [0, 1]);
        assert_eq!(groups[1].segment_indices, [2, 3]);
    }

    #[test]
    fn corner_triplet_matches_the_worked_example() {
        let l1 = seg([0.0, 0.0, 1.0], [0.2, 0.0, 1.0]);
        let l2 = seg([0.0, 0.0, 1.0], [0.0, 0.1, 1.0]);
        let t = corner_triplet(&l1, &l2, 0.01).unwrap();
        assert_eq!(t.p1, Point3::new(0.0, 0.0, 1.0));
        assert_eq!(t.p2, Point3::new(0.2, 0.0, 1.0));
        assert_eq!(t.p3, Point3::new(0.0, 0.1, 1.0));
        assert!((t.d1 - Vector3::x()).norm() < 1e-12);
        assert!((t.d2 - Vector3::y()).norm() < 1e-12);
        assert!((t.d - Vector3::z()).norm() < 1e-12);
        assert!((t.t - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);

        // Swapping the segments swaps p2/p3 and flips d.
        let swapped = corner_triplet(&l2, &l1, 0.01).unwrap();
        assert_eq!(swapped.p2, t.p3);
        assert_eq!(swapped.p3, t.p2);
        assert!((swapped.d + t.d).norm() < 1e-12);
    }

    #[test]
    fn non_intersecting_segments_are_an_error() {
        let l1 = seg([0.0, 0.0, 1.0], [0.2, 0.0, 1.0]);
        let l2 = seg([0.0, 0.05, 1.0], [0.0, 0.1, 1.0]);
        assert!(matches!(
            corner_triplet(&l1, &l2, 0.01),
            Err(PoseError::NotIntersecting(_))
        ));
    }

    #[test]
    fn dimension_classification_examples() {
        let dims = default_dims();
        assert_eq!(classify_edge_dimension(0.205, &dims, 0.2), Some(Axis::Length));
        assert_eq!(classify_edge_dimension(0.14, &dims, 0.2), None);
        let cube = CuboidDims::new(0.1, 0.1, 0.1);
        assert_eq!(classify_edge_dimension(0.1, &cube, 0.2), None);
        // Discovery-order resolution still labels cube edges.
        assert_eq!(
            resolve_labels(0.1, 0.1, &cube, 0.2).unwrap(),
            (Axis::Length, Axis::Breadth)
        );
    }

    /// Builds the triplet of the worked example, optionally mirrored so
    /// d·t comes out positive (first brick) or negative (second brick).
    fn example_triplet(flip_l2: bool) -> CornerTriplet {
        let l1 = seg([0.0, 0.0, 1.0], [0.2, 0.0, 1.0]);
        let l2 = if flip_l2 {
            seg([0.0, 0.0, 1.0], [0.0, -0.1, 1.0])
        } else {
            seg([0.0, 0.0, 1.0], [0.0, 0.1, 1.0])
        };
        corner_triplet(&l1, &l2, 0.01).unwrap()
    }

    #[test]
    fn direction_assignment_first_brick_keeps_both_signs() {
        let dims = default_dims();
        let t = example_triplet(true);
        assert!(t.d.dot(&t.t) > 0.0, "first-brick construction");
        let corr = assign_directions(&t, Axis::Length, Axis::Breadth, &dims, 0.05).unwrap();
        assert_eq!((corr.s1, corr.s2), (1.0, 1.0));
        assert_eq!(corr.pairs[0].1, Vector3::new(-0.1, -0.05, 0.025));
    }

    #[test]
    fn direction_assignment_second_brick_flips_d2() {
        let dims = default_dims();
        let t = example_triplet(false);
        assert!(t.d.dot(&t.t) < 0.0, "second-brick construction");
        let corr = assign_directions(&t, Axis::Length, Axis::Breadth, &dims, 0.05).unwrap();
        assert_eq!((corr.s1, corr.s2), (1.0, -1.0));
        assert_eq!(corr.pairs[0].1, Vector3::new(-0.1, 0.05, 0.025));
        // p2/p3 step along the accepted local directions by measured length.
        assert_eq!(corr.pairs[1].1, Vector3::new(0.1, 0.05, 0.025));
        assert_eq!(corr.pairs[2].1, Vector3::new(-0.1, -0.05, 0.025));
    }

    #[test]
    fn grazing_view_is_rejected() {
        // Corner almost in the plane of d: push the corner far out along x
        // so t is nearly perpendicular to d = +z.
        let l1 = seg([5.0, 0.0, 0.01], [5.2, 0.0, 0.01]);
        let l2 = seg([5.0, 0.0, 0.01], [5.0, 0.1, 0.01]);
        let t = corner_triplet(&l1, &l2, 0.01).unwrap();
        assert!(matches!(
            assign_directions(&t, Axis::Length, Axis::Breadth, &default_dims(), 0.05),
            Err(PoseError::DegenerateView(_))
        ));
    }

    #[test]
    fn identity_correspondences_give_identity_pose() {
        let dims = default_dims();
        let pairs: Vec<(Point3, Vector3<f64>)> = dims.local_corners()[..4]
            .iter()
            .map(|c| (Point3::from_coords(*c), *c))
            .collect();
        let pose = pose_from_correspondences(&pairs).unwrap();
        assert!((pose.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(pose.translation.norm() < 1e-12);
    }

    #[test]
    fn random_rigid_transforms_are_recovered_exactly() {
        let dims = default_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64),
            ));
            let rot = Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0));
            let shift = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..1.5),
            );
            let truth = Pose {
                rotation: *rot.matrix(),
                translation: shift,
            };
            let pairs: Vec<(Point3, Vector3<f64>)> = dims.local_corners()[..5]
                .iter()
                .map(|c| (Point3::from_coords(truth.transform(c)), *c))
                .collect();
            let pose = pose_from_correspondences(&pairs).unwrap();
            assert!((pose.rotation - truth.rotation).amax() < 1e-9);
            assert!((pose.translation - truth.translation).norm() < 1e-9);
            assert!(pose.rotation_defect() < 1e-9);
        }
    }

    #[test]
    fn collinear_correspondences_are_an_error() {
        let pairs: Vec<(Point3, Vector3<f64>)> = (0..4)
            .map(|i| {
                let p = Vector3::new(i as f64 * 0.05, 0.0, 0.0);
                (Point3::from_coords(p), p)
            })
            .collect();
        assert!(matches!(
            pose_from_correspondences(&pairs),
            Err(PoseError::CollinearCorrespondences)
        ));
    }

    #[test]
    fn refinement_with_the_same_corners_is_a_fixed_point() {
        let dims = default_dims();
        let truth = Pose {
            rotation: *Rotation3::from_euler_angles(0.2, -0.1, 0.4).matrix(),
            translation: Vector3::new(0.1, -0.2, 0.8),
        };
        let corners: Vec<Point3> = dims.local_corners()[..3]
            .iter()
            .map(|c| Point3::from_coords(truth.transform(c)))
            .collect();
        let refined = refine_pose(&truth, &corners, &dims, 0.02);
        assert_eq!(refined.matched, 3);
        assert!((refined.pose.rotation - truth.rotation).amax() < 1e-9);
        assert!((refined.pose.translation - truth.translation).norm() < 1e-9);
        assert!(refined.mean_residual.unwrap() < 1e-9);
    }

    #[test]
    fn spurious_corner_is_rejected_by_the_gate() {
        let dims = default_dims();
        let truth = Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 0.0, 1.0),
        };
        let mut corners: Vec<Point3> = dims.local_corners()[..4]
            .iter()
            .map(|c| Point3::from_coords(truth.transform(c)))
            .collect();
        corners.push(Point3::new(0.3, 0.3, 1.3)); // 10 cm+ from any corner
        let refined = refine_pose(&truth, &corners, &dims, 0.02);
        assert_eq!(refined.matched, 4, "outlier must not match");
        assert!((refined.pose.rotation - truth.rotation).amax() < 1e-9);
    }

    #[test]
    fn symmetry_group_sizes_follow_the_dims() {
        assert_eq!(cuboid_symmetry_rotations(&default_dims()).len(), 4);
        assert_eq!(
            cuboid_symmetry_rotations(&CuboidDims::new(0.1, 0.1, 0.05)).len(),
            8
        );
        assert_eq!(
            cuboid_symmetry_rotations(&CuboidDims::new(0.1, 0.1, 0.1)).len(),
            24
        );
    }

    #[test]
    fn pose_error_is_zero_modulo_symmetry() {
        let dims = default_dims();
        let truth = Pose {
            rotation: *Rotation3::from_euler_angles(0.3, 0.1, -0.2).matrix(),
            translation: Vector3::new(0.2, 0.1, 0.9),
        };
        let z_flip = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        let equivalent = Pose {
            rotation: truth.rotation * z_flip,
            translation: truth.translation,
        };
        let delta = pose_error(&equivalent, &truth, &dims);
        assert!(delta.rotation_deg < 1e-9);
        assert!(delta.translation_m < 1e-12);

        // A quarter turn is symmetric for a cube but not for distinct dims.
        let quarter = *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2)
            .matrix();
        let rotated = Pose {
            rotation: truth.rotation * quarter,
            translation: truth.translation,
        };
        assert!(pose_error(&rotated, &truth, &dims).rotation_deg > 89.0);
        let cube = CuboidDims::new(0.1, 0.1, 0.1);
        assert!(pose_error(&rotated, &truth, &cube).rotation_deg < 1e-9);
    }

    #[test]
    fn quaternion_is_canonical_and_consistent() {
        let pose = Pose {
            rotation: *Rotation3::from_euler_angles(2.9, -1.2, 2.0).matrix(),
            translation: Vector3::zeros(),
        };
        let q = pose.quaternion_wxyz();
        assert!(q[0] >= 0.0);
        let back = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            q[0], q[1], q[2], q[3],
        ))
        .to_rotation_matrix();
        assert!((back.matrix() - pose.rotation).amax() < 1e-9);
    }

    #[test]
    fn pose_record_roundtrips_through_json() {
        let estimate = PoseEstimate {
            pose: Pose {
                rotation: *Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix(),
                translation: Vector3::new(0.4, 0.5, 0.6),
            },
            initial_pose: Pose::identity(),
            group_index: 0,
            quality: Quality {
                corner_count: 4,
                matched_corners: 4,
                mean_corner_residual: Some(0.001),
                one_sided_segments: 1,
                symmetry: SymmetryClass::Distinct,
            },
        };
        let json = serde_json::to_string(&estimate.record()).unwrap();
        let back: PoseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, estimate.record());
        assert_eq!(back.symmetry, "distinct");
    }

    #[test]
    fn full_triplet_to_pose_recovers_the_worked_example_geometry() {
        // Box of (0.2, 0.1, 0.05) with its camera-facing face at z = 1:
        // the triplet corners lie on that face, so the solved pose must put
        // the box center at (0.1, 0.05, 1.025) with local +z toward camera.
        let dims = default_dims();
        let t = example_triplet(false);
        let corr = assign_directions(&t, Axis::Length, Axis::Breadth, &dims, 0.05).unwrap();
        let pose = pose_from_correspondences(&corr.pairs).unwrap();
        assert!((pose.translation - Vector3::new(0.1, 0.05, 1.025)).norm() < 1e-9);
        let local_z_in_camera = pose.rotation * Vector3::z();
        assert!((local_z_in_camera - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
        // Residuals vanish on consistent input.
        for (cam, loc) in &corr.pairs {
            assert!((cam.coords() - pose.transform(loc)).norm() < 1e-9);
        }
    }

    #[test]
    fn empty_scene_yields_no_poses() {
        let out = estimate_poses(
            &PointCloud::new(),
            &default_dims(),
            &PipelineParams::default(),
            0,
        )
        .unwrap();
        assert!(out.estimates.is_empty());
        assert!(out.segments.is_empty());
    }
}
