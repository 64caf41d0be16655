//! Command-line surface of `boxpose`.

use boxpose_core::pose::CuboidDims;
use boxpose_core::{CropBox, Point3};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Parser)]
#[command(
    name = "boxpose",
    version,
    about = "Edge-based cuboid detection and 6-DoF pose estimation for point clouds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cuboid scene with ground truth.
    GenScene(GenSceneArgs),
    /// Score edge points and write an annotated cloud.
    DetectEdges(DetectEdgesArgs),
    /// Extract line segments from a cloud's edge points.
    ExtractLines(ExtractLinesArgs),
    /// Run the full pose pipeline on a cloud.
    EstimatePose(EstimatePoseArgs),
    /// Compare the score detector against the covariance baseline.
    CompareBaseline(CompareBaselineArgs),
    /// Compute pick-trajectory waypoints from a grasp point.
    PlanPick(PlanPickArgs),
}

/// `x,y,z` triple in meters.
#[derive(Debug, Clone, Copy)]
pub struct PointArg(pub Point3);

impl FromStr for PointArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let vals = parse_floats(s, 3)?;
        Ok(PointArg(Point3::new(vals[0], vals[1], vals[2])))
    }
}

/// `x1,y1,z1,x2,y2,z2` axis-aligned crop box.
#[derive(Debug, Clone, Copy)]
pub struct CropArg(pub CropBox);

impl FromStr for CropArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_floats(s, 6)?;
        let (min, max) = (Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]));
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err("crop box has min > max".to_string());
        }
        Ok(CropArg(CropBox { min, max }))
    }
}

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got `{s}`"));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{p}`"))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    /// Output directory for cloud.pcd, cloud.ply, truth.json.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    /// Cuboid dimensions, meters.
    #[arg(long, value_name = "L,B,H")]
    pub dims: CuboidDims,
    /// Number of cuboids.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Isotropic Gaussian noise σ, meters.
    #[arg(long, default_value_t = 0.001)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DetectEdgesArgs {
    /// Input cloud (.pcd or .ply, ASCII).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    /// Neighborhood radius r_s, meters.
    #[arg(long, default_value_t = 0.02)]
    pub rs: f64,
    /// Edge score threshold t_h.
    #[arg(long, default_value_t = 0.35)]
    pub th: f64,
    /// Optional crop box applied before processing.
    #[arg(long, value_name = "X1,Y1,Z1,X2,Y2,Z2")]
    pub crop: Option<CropArg>,
    /// Also time edge extraction over r_s ∈ {0.010 … 0.030}.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct ExtractLinesArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    pub rs: f64,
    #[arg(long, default_value_t = 0.35)]
    pub th: f64,
    /// RANSAC inlier distance threshold, meters.
    #[arg(long = "ransac-thresh", default_value_t = 0.01)]
    pub ransac_thresh: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "X1,Y1,Z1,X2,Y2,Z2")]
    pub crop: Option<CropArg>,
}

#[derive(Debug, Args)]
pub struct EstimatePoseArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    #[arg(long, value_name = "L,B,H")]
    pub dims: CuboidDims,
    #[arg(long, default_value_t = 0.02)]
    pub rs: f64,
    #[arg(long, default_value_t = 0.35)]
    pub th: f64,
    #[arg(long = "ransac-thresh", default_value_t = 0.01)]
    pub ransac_thresh: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "X1,Y1,Z1,X2,Y2,Z2")]
    pub crop: Option<CropArg>,
}

#[derive(Debug, Args)]
pub struct CompareBaselineArgs {
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Operating threshold of the proposed detector.
    #[arg(long, default_value_t = 0.35)]
    pub th: f64,
}

#[derive(Debug, Args)]
pub struct PlanPickArgs {
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    /// Grasp point G.
    #[arg(long, value_name = "X,Y,Z")]
    pub goal: PointArg,
    /// Approach offset d above G, meters.
    #[arg(long, value_name = "D")]
    pub approach: f64,
    /// Retrieval lift h above G, meters.
    #[arg(long, value_name = "H")]
    pub lift: f64,
    /// Initial point I.
    #[arg(long, value_name = "X,Y,Z")]
    pub initial: PointArg,
    /// Final destination point F.
    #[arg(long = "final", value_name = "X,Y,Z")]
    pub destination: PointArg,
}
