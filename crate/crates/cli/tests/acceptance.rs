//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture`). Statistical
//! criteria use fixed seeds so the suite is reproducible.

use boxpose_cli::plane::{compare_baseline_rows, labeled_plane, recall_and_fp};
use boxpose_core::edge::{extract_edge_points, point_score, score_cloud, EdgeParams};
use boxpose_core::io::{read_pcd, read_ply, write_pcd, write_ply};
use boxpose_core::line::{extract_all_segments, ExtractParams, LineSegment};
use boxpose_core::pose::{
    estimate_poses, pose_error, pose_from_correspondences, CuboidDims, PipelineParams, Pose,
};
use boxpose_core::scene::{gen_clutter_scene, SceneSpec};
use boxpose_core::spatial::KdTree;
use boxpose_core::{Point3, PointCloud};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(number: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {number:02} ({name}): {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {number} ({name}) failed: {detail}");
}

fn brick() -> CuboidDims {
    CuboidDims {
        l: 0.2,
        b: 0.1,
        h: 0.05,
    }
}

/// Synthetic σ = 1 mm scenes use a tighter RANSAC band than the real-scan
/// default so segment removal does not erode shared corners.
fn scene_params() -> PipelineParams {
    PipelineParams {
        extract: ExtractParams {
            distance_threshold: 0.0025,
            ..ExtractParams::default()
        },
        ..PipelineParams::default()
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

#[test]
fn criterion_01_score_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r_s = 0.02;
    let params = EdgeParams {
        r_s,
        ..EdgeParams::default()
    };
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let center = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let k = rng.random_range(3..=40);
        let mut points = vec![center];
        for _ in 0..k {
            let dir = unit_vector(&mut rng);
            let rho = r_s * rng.random_range(0.1..0.999);
            points.push(Point3::new(
                center.x + rho * dir.x,
                center.y + rho * dir.y,
                center.z + rho * dir.z,
            ));
        }
        let cloud = PointCloud::from_points(points);
        let tree = KdTree::build(&cloud).unwrap();
        let (score, reported_k) = point_score(&cloud, &tree, 0, &params).unwrap();

        // Independent route: ‖Σ unit directions‖ / k.
        let resultant: Vector3<f64> = cloud
            .iter()
            .skip(1)
            .map(|p| (p.coords() - center.coords()).normalize())
            .sum();
        let expected = resultant.norm() / k as f64;
        assert_eq!(reported_k, k);
        worst = worst.max((score - expected).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-9 && elapsed < 1.0;
    report(
        1,
        "score identity",
        ok,
        &format!("max |score − ‖R‖/k| = {worst:.2e} over 1000 neighborhoods in {elapsed:.3} s"),
    );
}

#[test]
fn criterion_02_analytic_disk_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = 0.02;
    let params = EdgeParams {
        r_s: r,
        ..EdgeParams::default()
    };
    let mut sample_disk = |max_angle: f64| {
        let mut points = vec![Point3::ORIGIN];
        for _ in 0..100_000 {
            let theta = rng.random_range(0.0..max_angle);
            let rho = r * rng.random_range(1e-6..1.0f64).sqrt();
            points.push(Point3::new(rho * theta.cos(), rho * theta.sin(), 0.0));
        }
        let cloud = PointCloud::from_points(points);
        let tree = KdTree::build(&cloud).unwrap();
        point_score(&cloud, &tree, 0, &params).unwrap().0
    };
    let half = sample_disk(std::f64::consts::PI);
    let quarter = sample_disk(std::f64::consts::FRAC_PI_2);
    let half_target = 2.0 / std::f64::consts::PI;
    let quarter_target = 2.0 * std::f64::consts::SQRT_2 / std::f64::consts::PI;
    let ok = (half - half_target).abs() < 0.01 && (quarter - quarter_target).abs() < 0.01;
    report(
        2,
        "analytic score targets",
        ok,
        &format!(
            "half-disk {half:.4} vs {half_target:.4}, quarter-disk {quarter:.4} vs {quarter_target:.4}"
        ),
    );
}

#[test]
fn criterion_03_spatial_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0usize;
    for _ in 0..200 {
        let n = rng.random_range(1..=300);
        let points: Vec<Point3> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let cloud = PointCloud::from_points(points);
        let tree = KdTree::build(&cloud).unwrap();
        let query = Point3::new(
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.2..1.2),
        );
        let radius = rng.random_range(0.01..0.8);
        let mut got = tree.radius_neighbors(query, radius).unwrap();
        got.sort_unstable();
        let want: Vec<usize> = (0..cloud.len())
            .filter(|&i| (cloud[i].coords() - query.coords()).norm_squared() <= radius * radius)
            .collect();
        assert_eq!(got, want, "radius {radius} over {n} points");
        checked += want.len();
    }
    report(
        3,
        "spatial-index oracle",
        true,
        &format!("200 random (cloud, radius) cases, {checked} neighbor hits, exact equality"),
    );
}

#[test]
fn criterion_04_edge_classification_on_plane() {
    let (cloud, truth) = labeled_plane(0.2, 0.002, 0.001, 42);
    let scored = score_cloud(&cloud, &EdgeParams::default()).unwrap();
    let (recall, fp) = recall_and_fp(&scored.edge_flags, &truth);
    let ok = recall >= 0.90 && fp < 0.05;
    report(
        4,
        "edge classification",
        ok,
        &format!("boundary recall {recall:.3}, interior FP {fp:.4} at defaults"),
    );
}

/// The 4 borders of the cuboid face most aligned with the camera
/// direction, as world-frame endpoint pairs.
fn top_face_borders(pose: &Pose, dims: &CuboidDims) -> [(Vector3<f64>, Vector3<f64>); 4] {
    let half = [dims.l / 2.0, dims.b / 2.0, dims.h / 2.0];
    let mut best = (f64::NEG_INFINITY, 0usize, 1.0f64);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let mut n_local = Vector3::zeros();
            n_local[axis] = sign;
            let n_world = pose.rotation * n_local;
            let center = pose.transform(&(n_local * half[axis]));
            let align = n_world.dot(&-center) / center.norm();
            if align > best.0 {
                best = (align, axis, sign);
            }
        }
    }
    let (_, axis, sign) = best;
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let corner = |su: f64, sv: f64| {
        let mut c = Vector3::zeros();
        c[axis] = sign * half[axis];
        c[u] = su * half[u];
        c[v] = sv * half[v];
        pose.transform(&c)
    };
    [
        (corner(-1.0, -1.0), corner(1.0, -1.0)),
        (corner(1.0, -1.0), corner(1.0, 1.0)),
        (corner(1.0, 1.0), corner(-1.0, 1.0)),
        (corner(-1.0, 1.0), corner(-1.0, -1.0)),
    ]
}

/// Longest detected segment collinear with the given border.
fn matching_segment<'a>(
    segments: &'a [LineSegment],
    border: &(Vector3<f64>, Vector3<f64>),
) -> Option<&'a LineSegment> {
    let dir = (border.1 - border.0).normalize();
    let line_dist = |p: &Point3| {
        let d = p.coords() - border.0;
        (d - d.dot(&dir) * dir).norm()
    };
    segments
        .iter()
        .filter(|s| s.direction().normalize().dot(&dir).abs() >= 0.9)
        .filter(|s| line_dist(&s.e1) <= 0.01 && line_dist(&s.e2) <= 0.01)
        .max_by(|a, b| a.length().total_cmp(&b.length()))
}

#[test]
fn criterion_05_top_face_segment_lengths() {
    let dims = brick();
    let spec = SceneSpec::isolated(dims, 11);
    let (cloud, truth) = gen_clutter_scene(&spec).unwrap();
    let params = scene_params();
    let extraction = extract_edge_points(&cloud, &params.edge).unwrap();
    let segments = extract_all_segments(&extraction.edge_cloud, &params.extract, 5).unwrap();

    let mut worst = 0.0f64;
    let mut found = 0usize;
    let mut detail = String::new();
    for border in top_face_borders(&truth.poses[0], &dims) {
        let truth_len = (border.1 - border.0).norm();
        match matching_segment(&segments, &border) {
            Some(seg) => {
                let err = (seg.length() - truth_len).abs();
                worst = worst.max(err);
                found += 1;
                detail.push_str(&format!("{:.1} mm ", err * 1e3));
            }
            None => detail.push_str("missing "),
        }
    }
    let ok = found == 4 && worst <= 0.010;
    report(
        5,
        "segment lengths",
        ok,
        &format!("top-face length errors: {detail}(tolerance 10 mm)"),
    );
}

#[test]
fn criterion_06_pose_recovery_rate() {
    let dims = brick();
    let params = scene_params();
    let start = Instant::now();
    let mut good = 0usize;
    for seed in 0..50u64 {
        let (cloud, truth) = gen_clutter_scene(&SceneSpec::isolated(dims, seed)).unwrap();
        let out = estimate_poses(&cloud, &dims, &params, 5).unwrap();
        if out.estimates.iter().any(|e| {
            let d = pose_error(&e.pose, &truth.poses[0], &dims);
            d.rotation_deg < 5.0 && d.translation_m < 0.010
        }) {
            good += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = good >= 45 && elapsed < 60.0;
    report(
        6,
        "pose recovery",
        ok,
        &format!("{good}/50 scenes within 5°/10 mm in {elapsed:.1} s"),
    );
}

#[test]
fn criterion_07_refinement_improves_mean_rotation_error() {
    let dims = brick();
    let params = scene_params();
    let mut initial_errors = Vec::new();
    let mut refined_errors = Vec::new();
    for seed in 200..600u64 {
        if refined_errors.len() >= 100 {
            break;
        }
        let (cloud, truth) = gen_clutter_scene(&SceneSpec::isolated(dims, seed)).unwrap();
        let out = estimate_poses(&cloud, &dims, &params, 5).unwrap();
        for est in &out.estimates {
            if est.quality.corner_count >= 5 && refined_errors.len() < 100 {
                initial_errors
                    .push(pose_error(&est.initial_pose, &truth.poses[0], &dims).rotation_deg);
                refined_errors.push(pose_error(&est.pose, &truth.poses[0], &dims).rotation_deg);
            }
        }
    }
    let n = refined_errors.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mi, mr) = (mean(&initial_errors), mean(&refined_errors));
    let ok = n >= 100 && mr <= mi;
    report(
        7,
        "refinement monotonicity",
        ok,
        &format!("mean rotation error over {n} trials: 3-point {mi:.3}° → refined {mr:.3}°"),
    );
}

#[test]
fn criterion_08_noiseless_kabsch_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dims = brick();
    let mut worst_r: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for _ in 0..100 {
        let rotation = UnitQuaternion::from_axis_angle(
            &nalgebra::Unit::new_normalize(unit_vector(&mut rng)),
            rng.random_range(0.0..std::f64::consts::PI),
        )
        .to_rotation_matrix()
        .into_inner();
        let translation = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let pairs: Vec<(Point3, Vector3<f64>)> = dims
            .local_corners()
            .iter()
            .map(|l| {
                let w = rotation * l + translation;
                (Point3::new(w.x, w.y, w.z), *l)
            })
            .collect();
        let pose = pose_from_correspondences(&pairs).unwrap();
        worst_r = worst_r.max((pose.rotation - rotation).norm());
        worst_t = worst_t.max((pose.translation - translation).norm());
    }
    let ok = worst_r <= 1e-9 && worst_t <= 1e-9;
    report(
        8,
        "noiseless exactness",
        ok,
        &format!("100 random transforms: max rotation defect {worst_r:.2e}, translation {worst_t:.2e}"),
    );
}

#[test]
fn criterion_09_clutter_scenes() {
    let dims = brick();
    let params = scene_params();
    let mut good = 0usize;
    for seed in 100..120u64 {
        let (cloud, truth) = gen_clutter_scene(&SceneSpec::clutter(dims, 5, seed)).unwrap();
        let out = estimate_poses(&cloud, &dims, &params, 1).unwrap();
        if out.estimates.iter().any(|e| {
            truth.poses.iter().any(|t| {
                let d = pose_error(&e.pose, t, &dims);
                d.rotation_deg < 5.0 && d.translation_m < 0.010
            })
        }) {
            good += 1;
        }
    }
    let ok = good >= 16;
    report(
        9,
        "clutter",
        ok,
        &format!("{good}/20 five-cuboid scenes produced an acceptable pose"),
    );
}

#[test]
fn criterion_10_baseline_comparison() {
    // 0.40 is the proposed detector's operating threshold at σ = 2 mm; the
    // comparison matches the baseline's recall to whatever the proposed
    // detector achieves.
    let params = EdgeParams {
        t_h: 0.40,
        ..EdgeParams::default()
    };
    let rows = compare_baseline_rows(0.2, 0.002, &params, 0).unwrap();
    assert_eq!(rows.len(), 12);
    let sigma2: Vec<_> = rows.iter().filter(|r| r.sigma_mm == 2.0).collect();
    assert_eq!(sigma2.len(), 4);
    let proposed_fp = sigma2[0].proposed_fp;
    let baseline_report: Vec<String> = sigma2
        .iter()
        .map(|r| format!("k={} FP {:.3}", r.k, r.baseline_fp))
        .collect();
    let ok = proposed_fp < 0.05;
    report(
        10,
        "baseline comparison",
        ok,
        &format!(
            "σ=2 mm at recall {:.3}: proposed FP {proposed_fp:.4}; baseline {}",
            sigma2[0].proposed_recall,
            baseline_report.join(", ")
        ),
    );
}

#[test]
fn criterion_11_timing_trend() {
    let (cloud, _) = labeled_plane(0.2, 0.002, 0.001, 42);
    assert!(cloud.len() >= 30_000, "sweep cloud has {}", cloud.len());
    let mut timings = Vec::new();
    for r_s in [0.010, 0.015, 0.020, 0.025, 0.030] {
        let params = EdgeParams {
            r_s,
            ..EdgeParams::default()
        };
        let mut samples: Vec<f64> = (0..3)
            .map(|_| {
                let start = Instant::now();
                let _ = extract_edge_points(&cloud, &params).unwrap();
                start.elapsed().as_secs_f64()
            })
            .collect();
        samples.sort_by(f64::total_cmp);
        timings.push(samples[1]);
    }
    let increasing = timings.windows(2).all(|w| w[0] < w[1]);

    let dims = brick();
    let (scene, _) = gen_clutter_scene(&SceneSpec::isolated(dims, 11)).unwrap();
    let start = Instant::now();
    let _ = estimate_poses(&scene, &dims, &scene_params(), 5).unwrap();
    let pipeline = start.elapsed().as_secs_f64();

    let ok = increasing && pipeline < 10.0;
    let formatted: Vec<String> = timings.iter().map(|t| format!("{t:.3}")).collect();
    report(
        11,
        "timing trend",
        ok,
        &format!(
            "median edge times over {} points: [{}] s; full pipeline {pipeline:.2} s",
            cloud.len(),
            formatted.join(", ")
        ),
    );
}

#[test]
fn criterion_12_parser_fuzz_and_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let template_cloud = PointCloud::from_points(
        (0..25)
            .map(|i| Point3::new(i as f64 * 0.05, 1.0 - i as f64 * 0.02, 0.5))
            .collect(),
    );
    let templates = [
        write_pcd(&template_cloud).into_bytes(),
        write_ply(&template_cloud).into_bytes(),
    ];
    for case in 0..10_000usize {
        let bytes = if case % 2 == 0 {
            let len = rng.random_range(0..600);
            (0..len).map(|_| rng.random()).collect::<Vec<u8>>()
        } else {
            let mut b = templates[rng.random_range(0..templates.len())].clone();
            for _ in 0..rng.random_range(1..10) {
                let i = rng.random_range(0..b.len());
                b[i] = rng.random();
            }
            b
        };
        let _ = read_pcd(&bytes);
        let _ = read_ply(&bytes);
    }

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(0..200);
        let cloud = PointCloud::from_points(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1e3..1e3),
                        rng.random_range(-1e3..1e3),
                        rng.random_range(-1e3..1e3),
                    )
                })
                .collect(),
        );
        for parsed in [
            read_pcd(write_pcd(&cloud).as_bytes()).unwrap(),
            read_ply(write_ply(&cloud).as_bytes()).unwrap(),
        ] {
            assert_eq!(parsed.cloud.len(), cloud.len());
            for (a, b) in cloud.iter().zip(parsed.cloud.iter()) {
                worst = worst
                    .max((a.x - b.x).abs())
                    .max((a.y - b.y).abs())
                    .max((a.z - b.z).abs());
            }
        }
    }
    let ok = worst <= 1e-6;
    report(
        12,
        "parser fuzz + round trip",
        ok,
        &format!("10⁴ fuzz inputs survived; worst round-trip coordinate error {worst:.2e} m"),
    );
}

#[test]
fn criterion_13_command_determinism() {
    use std::path::PathBuf;
    use std::process::Command;

    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_c13");
    let _ = std::fs::remove_dir_all(&base);
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_boxpose"))
            .args(args)
            .output()
            .expect("binary should spawn");
        assert!(
            out.status.code() == Some(0),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let mut identical = Vec::new();
    for pass in ["a", "b"] {
        let dir = base.join(pass);
        let gen = dir.join("gen");
        run(&[
            "gen-scene",
            "--dims",
            "0.2,0.1,0.05",
            "--count",
            "2",
            "--seed",
            "7",
            "--output",
            gen.to_str().unwrap(),
        ]);
        // Both passes read the first pass's cloud so the input is one
        // fixed file, as the criterion requires.
        let input = base.join("a/gen/cloud.pcd");
        run(&[
            "extract-lines",
            "--input",
            input.to_str().unwrap(),
            "--ransac-thresh",
            "0.0025",
            "--seed",
            "3",
            "--output",
            dir.join("lines").to_str().unwrap(),
        ]);
        run(&[
            "estimate-pose",
            "--input",
            input.to_str().unwrap(),
            "--dims",
            "0.2,0.1,0.05",
            "--ransac-thresh",
            "0.0025",
            "--seed",
            "3",
            "--output",
            dir.join("pose").to_str().unwrap(),
        ]);
    }
    for file in [
        "gen/cloud.pcd",
        "gen/cloud.ply",
        "gen/truth.json",
        "lines/segments.json",
        "lines/annotated.ply",
        "pose/poses.json",
        "pose/annotated.ply",
    ] {
        let a = std::fs::read(base.join("a").join(file)).unwrap();
        let b = std::fs::read(base.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
        identical.push(file);
    }
    report(
        13,
        "determinism",
        true,
        &format!("byte-identical across two runs: {}", identical.join(", ")),
    );
}
