//! Subcommand implementations. Each returns the process exit code; `main`
//! maps `Err` to the input-error code.

use crate::args::{
    CompareBaselineArgs, DetectEdgesArgs, EstimatePoseArgs, ExtractLinesArgs, GenSceneArgs,
    PlanPickArgs,
};
use crate::{plane, waypoints, EXIT_EMPTY, EXIT_OK, EXIT_USAGE};
use anyhow::{bail, Context, Result};
use boxpose_core::edge::{extract_edge_points, score_cloud, EdgeParams};
use boxpose_core::io::{read_pcd, read_ply, write_annotated, write_pcd, write_ply, Label};
use boxpose_core::line::{extract_all_segments, ExtractParams, SegmentRecord};
use boxpose_core::pose::{
    estimate_poses, CuboidDims, PipelineOutput, PipelineParams, PoseParams, PoseRecord,
};
use boxpose_core::scene::{gen_clutter_scene, GroundTruthRecord, SceneSpec};
use boxpose_core::{Point3, PointCloud};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Radii timed by `detect-edges --sweep`, meters.
pub const SWEEP_RADII: [f64; 5] = [0.010, 0.015, 0.020, 0.025, 0.030];

/// Wireframe sampling step along fitted box edges, meters.
const WIREFRAME_STEP: f64 = 0.002;

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let parsed = match ext.as_deref() {
        Some("pcd") => read_pcd(&bytes),
        Some("ply") => read_ply(&bytes),
        _ => bail!(
            "unsupported input extension for {} (expected .pcd or .ply)",
            path.display()
        ),
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    if parsed.dropped_nonfinite > 0 {
        eprintln!(
            "warning: dropped {} non-finite point(s) from {}",
            parsed.dropped_nonfinite,
            path.display()
        );
    }
    Ok(parsed.cloud)
}

fn load_input(path: &Path, crop: Option<boxpose_core::CropBox>) -> Result<PointCloud> {
    let cloud = read_cloud(path)?;
    Ok(match crop {
        Some(c) => c.apply(&cloud).0,
        None => cloud,
    })
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_gen_scene(args: &GenSceneArgs) -> Result<i32> {
    let mut spec = if args.count == 1 {
        SceneSpec::isolated(args.dims, args.seed)
    } else {
        SceneSpec::clutter(args.dims, args.count, args.seed)
    };
    spec.noise_sigma = args.noise;
    let (cloud, truth) = gen_clutter_scene(&spec)?;
    write_output(&args.output, "cloud.pcd", &write_pcd(&cloud))?;
    write_output(&args.output, "cloud.ply", &write_ply(&cloud))?;
    let record = GroundTruthRecord::encode(&spec, &truth);
    write_output(&args.output, "truth.json", &to_json_pretty(&record)?)?;
    println!(
        "gen-scene: {} points from {} cuboid(s) -> {}",
        cloud.len(),
        spec.count,
        args.output.display()
    );
    Ok(EXIT_OK)
}

pub fn cmd_detect_edges(args: &DetectEdgesArgs) -> Result<i32> {
    let cloud = load_input(&args.input, args.crop.map(|c| c.0))?;
    let params = EdgeParams {
        r_s: args.rs,
        t_h: args.th,
        ..EdgeParams::default()
    };
    let scored = score_cloud(&cloud, &params)?;

    let labels: Vec<Label> = scored
        .edge_flags
        .iter()
        .map(|&e| if e { Label::Edge } else { Label::Interior })
        .collect();
    write_output(&args.output, "annotated.ply", &write_annotated(&cloud, &labels)?)?;

    let mut csv = String::from("index,score,neighbors,edge\n");
    for i in 0..scored.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            i, scored.scores[i], scored.neighbor_counts[i], scored.edge_flags[i] as u8
        ));
    }
    write_output(&args.output, "scores.csv", &csv)?;

    // Scores live in [0, 1]; exact 1.0 lands in the top bin.
    let mut bins = [0usize; 20];
    for &s in &scored.scores {
        let b = ((s * 20.0).floor() as usize).min(19);
        bins[b] += 1;
    }
    let mut hist = String::from("bin_lo,bin_hi,count\n");
    for (b, count) in bins.iter().enumerate() {
        hist.push_str(&format!(
            "{:.2},{:.2},{}\n",
            b as f64 / 20.0,
            (b + 1) as f64 / 20.0,
            count
        ));
    }
    write_output(&args.output, "score_histogram.csv", &hist)?;

    if args.sweep {
        let mut sweep = String::from("r_s,seconds,edge_points\n");
        for r_s in SWEEP_RADII {
            let start = Instant::now();
            let extraction = extract_edge_points(&cloud, &EdgeParams { r_s, ..params })?;
            let secs = start.elapsed().as_secs_f64();
            sweep.push_str(&format!(
                "{:.3},{:.4},{}\n",
                r_s,
                secs,
                extraction.edge_cloud.len()
            ));
        }
        write_output(&args.output, "sweep_timing.csv", &sweep)?;
    }

    let edges = scored.edge_flags.iter().filter(|&&e| e).count();
    println!(
        "detect-edges: {edges} of {} points flagged -> {}",
        cloud.len(),
        args.output.display()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SegmentsFile {
    seed: u64,
    edge_point_count: usize,
    ransac_threshold: f64,
    segments: Vec<SegmentRecord>,
}

pub fn cmd_extract_lines(args: &ExtractLinesArgs) -> Result<i32> {
    let cloud = load_input(&args.input, args.crop.map(|c| c.0))?;
    let edge_params = EdgeParams {
        r_s: args.rs,
        t_h: args.th,
        ..EdgeParams::default()
    };
    let extraction = extract_edge_points(&cloud, &edge_params)?;
    let extract_params = ExtractParams {
        distance_threshold: args.ransac_thresh,
        r_s: args.rs,
        ..ExtractParams::default()
    };
    let segments = extract_all_segments(&extraction.edge_cloud, &extract_params, args.seed)?;

    let file = SegmentsFile {
        seed: args.seed,
        edge_point_count: extraction.edge_cloud.len(),
        ransac_threshold: args.ransac_thresh,
        segments: segments.iter().map(|s| s.record()).collect(),
    };
    write_output(&args.output, "segments.json", &to_json_pretty(&file)?)?;

    let mut labels = vec![Label::Edge; extraction.edge_cloud.len()];
    for (i, seg) in segments.iter().enumerate() {
        for &m in &seg.members {
            labels[m] = Label::Segment(i as u16);
        }
    }
    write_output(
        &args.output,
        "annotated.ply",
        &write_annotated(&extraction.edge_cloud, &labels)?,
    )?;

    println!(
        "extract-lines: {} segment(s) from {} edge points -> {}",
        segments.len(),
        extraction.edge_cloud.len(),
        args.output.display()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PosesFile {
    dims: [f64; 3],
    seed: u64,
    point_count: usize,
    edge_point_count: usize,
    segment_count: usize,
    group_count: usize,
    estimates: Vec<PoseRecord>,
    diagnostics: Vec<String>,
}

/// The 12 edges of the local box as corner-index pairs into
/// `CuboidDims::local_corners` (indices differing in exactly one bit).
fn box_edge_pairs() -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(12);
    for i in 0..8usize {
        for b in 0..3 {
            let j = i | (1 << b);
            if j > i {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn annotate_scene(
    cloud: &PointCloud,
    dims: &CuboidDims,
    out: &PipelineOutput,
) -> Result<String, boxpose_core::io::FormatError> {
    let mut labels = vec![Label::Interior; cloud.len()];
    for (i, &flag) in out.extraction.scored.edge_flags.iter().enumerate() {
        if flag {
            labels[i] = Label::Edge;
        }
    }
    for (si, seg) in out.segments.iter().enumerate() {
        for &m in &seg.members {
            labels[out.extraction.index_map[m]] = Label::Segment(si as u16);
        }
    }

    let mut augmented = cloud.clone();
    for group in &out.groups {
        for &corner in &group.corners {
            augmented.push(corner);
            labels.push(Label::Corner);
        }
    }
    let corners = dims.local_corners();
    for est in &out.estimates {
        for (a, b) in box_edge_pairs() {
            let (ca, cb) = (corners[a], corners[b]);
            let steps = ((cb - ca).norm() / WIREFRAME_STEP).ceil().max(1.0) as usize;
            for t in 0..=steps {
                let local = ca + (cb - ca) * (t as f64 / steps as f64);
                let world = est.pose.transform(&local);
                augmented.push(Point3::new(world.x, world.y, world.z));
                labels.push(Label::Wireframe);
            }
        }
    }
    write_annotated(&augmented, &labels)
}

pub fn cmd_estimate_pose(args: &EstimatePoseArgs) -> Result<i32> {
    let cloud = load_input(&args.input, args.crop.map(|c| c.0))?;
    let params = PipelineParams {
        edge: EdgeParams {
            r_s: args.rs,
            t_h: args.th,
            ..EdgeParams::default()
        },
        extract: ExtractParams {
            distance_threshold: args.ransac_thresh,
            r_s: args.rs,
            ..ExtractParams::default()
        },
        pose: PoseParams::default(),
    };
    let out = estimate_poses(&cloud, &args.dims, &params, args.seed)?;

    let poses = PosesFile {
        dims: [args.dims.l, args.dims.b, args.dims.h],
        seed: args.seed,
        point_count: cloud.len(),
        edge_point_count: out.extraction.edge_cloud.len(),
        segment_count: out.segments.len(),
        group_count: out.groups.len(),
        estimates: out.estimates.iter().map(|e| e.record()).collect(),
        diagnostics: out.diagnostics.clone(),
    };
    write_output(&args.output, "poses.json", &to_json_pretty(&poses)?)?;

    // Timings and machine info are diagnostic, not part of the
    // deterministic contract, so they go in a separate report.
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut report = String::new();
    report.push_str("boxpose estimate-pose report\n");
    report.push_str(&format!(
        "machine: {} {} ({} threads)\n",
        std::env::consts::OS,
        std::env::consts::ARCH,
        threads
    ));
    report.push_str(&format!(
        "input: {} ({} points, {} edge points, {} segments, {} groups, {} poses)\n",
        args.input.display(),
        poses.point_count,
        poses.edge_point_count,
        poses.segment_count,
        poses.group_count,
        poses.estimates.len()
    ));
    report.push_str(&format!("edge points:   {:.4} s\n", out.timings.edge_seconds));
    report.push_str(&format!("all edges:     {:.4} s\n", out.timings.segment_seconds));
    report.push_str(&format!("model fitting: {:.4} s\n", out.timings.fitting_seconds));
    report.push_str(&format!("total:         {:.4} s\n", out.timings.total()));
    for d in &out.diagnostics {
        report.push_str(&format!("note: {d}\n"));
    }
    write_output(&args.output, "report.txt", &report)?;

    write_output(
        &args.output,
        "annotated.ply",
        &annotate_scene(&cloud, &args.dims, &out)?,
    )?;

    println!(
        "estimate-pose: {} pose(s) from {} group(s) -> {}",
        out.estimates.len(),
        out.groups.len(),
        args.output.display()
    );
    for (i, est) in out.estimates.iter().enumerate() {
        let t = est.pose.translation;
        println!(
            "  pose {i}: t = ({:.4}, {:.4}, {:.4}) m, corners matched {}/{}",
            t.x, t.y, t.z, est.quality.matched_corners, est.quality.corner_count
        );
    }
    for d in &out.diagnostics {
        println!("  {d}");
    }
    if out.estimates.is_empty() {
        Ok(EXIT_EMPTY)
    } else {
        Ok(EXIT_OK)
    }
}

pub fn cmd_compare_baseline(args: &CompareBaselineArgs) -> Result<i32> {
    let params = EdgeParams {
        t_h: args.th,
        ..EdgeParams::default()
    };
    let rows = plane::compare_baseline_rows(0.2, 0.002, &params, args.seed)?;
    let csv = plane::rows_to_csv(&rows);
    write_output(&args.output, "comparison.csv", &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

pub fn cmd_plan_pick(args: &PlanPickArgs) -> Result<i32> {
    match waypoints::plan_pick_waypoints(
        args.goal.0,
        args.approach,
        args.lift,
        args.initial.0,
        args.destination.0,
    ) {
        Ok(w) => {
            write_output(&args.output, "waypoints.json", &to_json_pretty(&w)?)?;
            println!(
                "plan-pick: M = ({:.4}, {:.4}, {:.4}), R = ({:.4}, {:.4}, {:.4}) -> {}",
                w.mid.x,
                w.mid.y,
                w.mid.z,
                w.retrieval.x,
                w.retrieval.y,
                w.retrieval.z,
                args.output.display()
            );
            Ok(EXIT_OK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_USAGE)
        }
    }
}
