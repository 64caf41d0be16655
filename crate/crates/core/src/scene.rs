//! Deterministic synthetic cuboid scenes with ground-truth poses.
//!
//! Stands in for a depth sensor: each visible face of each cuboid is
//! grid-sampled at a fixed pitch, optionally perturbed by isotropic
//! Gaussian noise. Every point carries a ground-truth label (cuboid id,
//! face id, boundary flag) so detector output can be scored exactly.

use crate::cloud::{Point3, PointCloud};
use crate::pose::{CuboidDims, Pose};
use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("placed only {placed} of {requested} cuboids after {attempts} rejections")]
    PlacementFailed {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("label run-length data decodes to {decoded} labels, cloud has {cloud} points")]
    LabelMismatch { decoded: usize, cloud: usize },
}

/// Ground-truth label of one generated point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointLabel {
    pub cuboid: u32,
    /// 0:+x 1:−x 2:+y 3:−y 4:+z 5:−z, in the cuboid's local frame.
    pub face: u8,
    /// Within one pitch of the face border.
    pub boundary: bool,
}

/// Everything needed to generate a scene reproducibly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub dims: CuboidDims,
    pub count: usize,
    /// Cuboid centers are drawn uniformly from this box.
    pub position_min: Point3,
    pub position_max: Point3,
    /// Rotations are a uniform yaw about +z followed by a tilt of up to
    /// this many radians about a uniform horizontal axis.
    pub max_tilt: f64,
    /// Grid spacing on each face, meters.
    pub pitch: f64,
    /// Isotropic Gaussian noise σ, meters.
    pub noise_sigma: f64,
    pub camera: Point3,
    /// Minimum clearance between cuboids; the overlap test inflates each
    /// box by half of this.
    pub separation: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// One unobstructed cuboid somewhere below the camera.
    pub fn isolated(dims: CuboidDims, seed: u64) -> Self {
        SceneSpec {
            dims,
            count: 1,
            position_min: Point3::new(-0.15, -0.15, 0.7),
            position_max: Point3::new(0.15, 0.15, 1.0),
            max_tilt: 0.35,
            pitch: 0.002,
            noise_sigma: 0.001,
            camera: Point3::ORIGIN,
            separation: 0.015,
            seed,
        }
    }

    /// Several cuboids scattered over a tabletop-sized region.
    pub fn clutter(dims: CuboidDims, count: usize, seed: u64) -> Self {
        SceneSpec {
            count,
            position_min: Point3::new(-0.3, -0.3, 0.7),
            position_max: Point3::new(0.3, 0.3, 1.0),
            ..SceneSpec::isolated(dims, seed)
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.dims
            .validate()
            .map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
        if !self.pitch.is_finite() || self.pitch <= 0.0 {
            return Err(SceneError::InvalidSpec(format!(
                "pitch must be positive, got {}",
                self.pitch
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(SceneError::InvalidSpec(format!(
                "noise σ must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !self.max_tilt.is_finite() || !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.max_tilt)
        {
            return Err(SceneError::InvalidSpec(format!(
                "max tilt must lie in [0, π/2], got {}",
                self.max_tilt
            )));
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return Err(SceneError::InvalidSpec(format!(
                "separation must be non-negative, got {}",
                self.separation
            )));
        }
        let (lo, hi) = (self.position_min, self.position_max);
        if !(lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z) {
            return Err(SceneError::InvalidSpec(
                "position box has min > max".to_string(),
            ));
        }
        Ok(())
    }
}

/// Per-cuboid poses plus one label per generated point, in cloud order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroundTruth {
    pub poses: Vec<Pose>,
    pub labels: Vec<PointLabel>,
}

impl SceneGroundTruth {
    /// Label count must equal cloud length; generation guarantees it, but
    /// decoded sidecars are checked against the cloud they describe.
    pub fn validate_against(&self, cloud: &PointCloud) -> Result<(), SceneError> {
        if self.labels.len() != cloud.len() {
            return Err(SceneError::LabelMismatch {
                decoded: self.labels.len(),
                cloud: cloud.len(),
            });
        }
        Ok(())
    }
}

fn face_frame(face: u8) -> (usize, f64, usize, usize) {
    let axis = (face / 2) as usize;
    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
    (axis, sign, (axis + 1) % 3, (axis + 2) % 3)
}

/// RNG used for cuboid `index` of a scene: one ChaCha stream per cuboid,
/// so placement rejections never perturb surface noise.
pub fn cuboid_stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Grid-samples every face of the cuboid whose outward normal points
/// toward the camera, at `pitch` spacing, with optional Gaussian noise.
/// Labels carry cuboid id 0; multi-cuboid callers re-tag them.
pub fn sample_cuboid_surface_rng(
    dims: &CuboidDims,
    pose: &Pose,
    pitch: f64,
    noise_sigma: f64,
    camera: Point3,
    rng: &mut ChaCha8Rng,
) -> (PointCloud, Vec<PointLabel>) {
    let half = [dims.l / 2.0, dims.b / 2.0, dims.h / 2.0];
    let dim = [dims.l, dims.b, dims.h];
    let normal = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("σ > 0"));

    let mut cloud = PointCloud::new();
    let mut labels = Vec::new();
    for face in 0..6u8 {
        let (axis, sign, ua, va) = face_frame(face);
        let mut normal_local = Vector3::zeros();
        normal_local[axis] = sign;
        let center_local = normal_local * half[axis];
        let normal_world = pose.rotation * normal_local;
        let center_world = pose.transform(&center_local);
        if (camera.coords() - center_world).dot(&normal_world) <= 0.0 {
            continue;
        }

        let nu = (dim[ua] / pitch).round().max(1.0) as usize;
        let nv = (dim[va] / pitch).round().max(1.0) as usize;
        let (step_u, step_v) = (dim[ua] / nu as f64, dim[va] / nv as f64);
        // Slack well above float error, well below one grid step, keeps
        // the ≤-pitch boundary rule stable under recomputation.
        let limit = pitch * (1.0 + 1e-6);
        for k in 0..=nu {
            let u = -half[ua] + k as f64 * step_u;
            let du = k.min(nu - k) as f64 * step_u;
            for j in 0..=nv {
                let v = -half[va] + j as f64 * step_v;
                let dv = j.min(nv - j) as f64 * step_v;
                let mut local = center_local;
                local[ua] += u;
                local[va] += v;
                let mut world = pose.transform(&local);
                if let Some(n) = normal {
                    world.x += n.sample(rng);
                    world.y += n.sample(rng);
                    world.z += n.sample(rng);
                }
                cloud.push(Point3::from_coords(world));
                labels.push(PointLabel {
                    cuboid: 0,
                    face,
                    boundary: du.min(dv) <= limit,
                });
            }
        }
    }
    (cloud, labels)
}

/// Seed-taking wrapper over [`sample_cuboid_surface_rng`].
pub fn sample_cuboid_surface(
    dims: &CuboidDims,
    pose: &Pose,
    pitch: f64,
    noise_sigma: f64,
    camera: Point3,
    seed: u64,
) -> Result<(PointCloud, Vec<PointLabel>), SceneError> {
    if !pitch.is_finite() || pitch <= 0.0 {
        return Err(SceneError::InvalidSpec(format!(
            "pitch must be positive, got {pitch}"
        )));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(SceneError::InvalidSpec(format!(
            "noise σ must be non-negative, got {noise_sigma}"
        )));
    }
    dims.validate()
        .map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_cuboid_surface_rng(
        dims,
        pose,
        pitch,
        noise_sigma,
        camera,
        &mut rng,
    ))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn sample_pose(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Pose {
    let yaw = uniform(rng, 0.0, std::f64::consts::TAU);
    let tilt = uniform(rng, 0.0, spec.max_tilt);
    let azimuth = uniform(rng, 0.0, std::f64::consts::TAU);
    let tilt_axis = Unit::new_normalize(Vector3::new(azimuth.cos(), azimuth.sin(), 0.0));
    let rotation = Rotation3::from_axis_angle(&tilt_axis, tilt)
        * Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let translation = Vector3::new(
        uniform(rng, spec.position_min.x, spec.position_max.x),
        uniform(rng, spec.position_min.y, spec.position_max.y),
        uniform(rng, spec.position_min.z, spec.position_max.z),
    );
    Pose {
        rotation: *rotation.matrix(),
        translation,
    }
}

/// Separating-axis overlap test for two oriented boxes with equal dims,
/// each inflated by `margin` on every half-extent. The 15 candidate axes
/// are the 6 face normals and the 9 edge-direction cross products.
fn obb_overlap(dims: &CuboidDims, a: &Pose, b: &Pose, margin: f64) -> bool {
    let half = Vector3::new(
        dims.l / 2.0 + margin,
        dims.b / 2.0 + margin,
        dims.h / 2.0 + margin,
    );
    let a_axes: Vec<Vector3<f64>> = (0..3).map(|i| a.rotation.column(i).into_owned()).collect();
    let b_axes: Vec<Vector3<f64>> = (0..3).map(|i| b.rotation.column(i).into_owned()).collect();
    let t = b.translation - a.translation;

    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
    axes.extend(a_axes.iter().copied());
    axes.extend(b_axes.iter().copied());
    for ai in &a_axes {
        for bj in &b_axes {
            let c = ai.cross(bj);
            if c.norm() > 1e-12 {
                axes.push(c.normalize());
            }
        }
    }
    for axis in axes {
        let ra: f64 = (0..3).map(|i| half[i] * a_axes[i].dot(&axis).abs()).sum();
        let rb: f64 = (0..3).map(|i| half[i] * b_axes[i].dot(&axis).abs()).sum();
        if t.dot(&axis).abs() > ra + rb {
            return false;
        }
    }
    true
}

const MAX_REJECTIONS_PER_CUBOID: usize = 1000;

/// Draws non-interpenetrating poses by rejection sampling, then samples
/// each cuboid's surface on its own RNG stream and concatenates.
/// Deterministic per seed.
pub fn gen_clutter_scene(spec: &SceneSpec) -> Result<(PointCloud, SceneGroundTruth), SceneError> {
    spec.validate()?;
    let mut placer = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut poses: Vec<Pose> = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while poses.len() < spec.count {
        if attempts >= MAX_REJECTIONS_PER_CUBOID * spec.count.max(1) {
            return Err(SceneError::PlacementFailed {
                placed: poses.len(),
                requested: spec.count,
                attempts,
            });
        }
        attempts += 1;
        let candidate = sample_pose(spec, &mut placer);
        if poses
            .iter()
            .all(|p| !obb_overlap(&spec.dims, p, &candidate, spec.separation / 2.0))
        {
            poses.push(candidate);
        }
    }

    let mut cloud = PointCloud::new();
    let mut labels = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        let mut rng = cuboid_stream_rng(spec.seed, i);
        let (part, part_labels) = sample_cuboid_surface_rng(
            &spec.dims,
            pose,
            spec.pitch,
            spec.noise_sigma,
            spec.camera,
            &mut rng,
        );
        for p in part.iter() {
            cloud.push(*p);
        }
        labels.extend(part_labels.into_iter().map(|l| PointLabel {
            cuboid: i as u32,
            ..l
        }));
    }
    Ok((cloud, SceneGroundTruth { poses, labels }))
}

/// One run of identical labels in cloud order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRun {
    pub len: usize,
    pub cuboid: u32,
    pub face: u8,
    pub boundary: bool,
}

pub fn encode_labels_rle(labels: &[PointLabel]) -> Vec<LabelRun> {
    let mut runs: Vec<LabelRun> = Vec::new();
    for label in labels {
        match runs.last_mut() {
            Some(run)
                if run.cuboid == label.cuboid
                    && run.face == label.face
                    && run.boundary == label.boundary =>
            {
                run.len += 1;
            }
            _ => runs.push(LabelRun {
                len: 1,
                cuboid: label.cuboid,
                face: label.face,
                boundary: label.boundary,
            }),
        }
    }
    runs
}

pub fn decode_labels_rle(runs: &[LabelRun]) -> Vec<PointLabel> {
    let mut labels = Vec::with_capacity(runs.iter().map(|r| r.len).sum());
    for run in runs {
        labels.extend(std::iter::repeat_n(
            PointLabel {
                cuboid: run.cuboid,
                face: run.face,
                boundary: run.boundary,
            },
            run.len,
        ));
    }
    labels
}

/// JSON sidecar mirroring [`SceneGroundTruth`] plus the generating spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub spec: SceneSpec,
    pub rotations: Vec<[[f64; 3]; 3]>,
    pub translations: Vec<[f64; 3]>,
    pub labels_rle: Vec<LabelRun>,
}

impl GroundTruthRecord {
    pub fn encode(spec: &SceneSpec, truth: &SceneGroundTruth) -> Self {
        GroundTruthRecord {
            spec: *spec,
            rotations: truth
                .poses
                .iter()
                .map(|p| {
                    let r = &p.rotation;
                    [
                        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
                    ]
                })
                .collect(),
            translations: truth
                .poses
                .iter()
                .map(|p| [p.translation.x, p.translation.y, p.translation.z])
                .collect(),
            labels_rle: encode_labels_rle(&truth.labels),
        }
    }

    pub fn decode(&self) -> SceneGroundTruth {
        let poses = self
            .rotations
            .iter()
            .zip(&self.translations)
            .map(|(rows, t)| Pose {
                rotation: nalgebra::Matrix3::new(
                    rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2],
                    rows[2][0], rows[2][1], rows[2][2],
                ),
                translation: Vector3::new(t[0], t[1], t[2]),
            })
            .collect();
        SceneGroundTruth {
            poses,
            labels: decode_labels_rle(&self.labels_rle),
        }
    }
}
