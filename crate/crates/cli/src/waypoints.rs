//! Pick-trajectory waypoints: pure geometry, no robot I/O.

use boxpose_core::Point3;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WaypointError {
    #[error("approach distance must be positive, got {0}")]
    NonPositiveApproach(f64),
    #[error("lift height must be positive, got {0}")]
    NonPositiveLift(f64),
}

/// The five pick waypoints, always in traversal order I, M, G, R, F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoints {
    #[serde(rename = "I")]
    pub initial: Point3,
    #[serde(rename = "M")]
    pub mid: Point3,
    #[serde(rename = "G")]
    pub goal: Point3,
    #[serde(rename = "R")]
    pub retrieval: Point3,
    #[serde(rename = "F")]
    pub destination: Point3,
}

/// Places the mid point `d` above the goal and the retrieval point
/// `h_lift` above it (ẑ = vertical up of the given frame).
pub fn plan_pick_waypoints(
    goal: Point3,
    d: f64,
    h_lift: f64,
    initial: Point3,
    destination: Point3,
) -> Result<Waypoints, WaypointError> {
    if !d.is_finite() || d <= 0.0 {
        return Err(WaypointError::NonPositiveApproach(d));
    }
    if !h_lift.is_finite() || h_lift <= 0.0 {
        return Err(WaypointError::NonPositiveLift(h_lift));
    }
    let up = Vector3::z();
    Ok(Waypoints {
        initial,
        mid: goal.translated(&(d * up)),
        goal,
        retrieval: goal.translated(&(h_lift * up)),
        destination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let w = plan_pick_waypoints(
            Point3::new(0.4, 0.1, 0.05),
            0.1,
            0.2,
            Point3::ORIGIN,
            Point3::new(0.0, -0.4, 0.1),
        )
        .unwrap();
        // M and R shift G along +z by exactly d and h_lift (same float op).
        assert_eq!(w.mid, Point3::new(0.4, 0.1, 0.05 + 0.1));
        assert_eq!(w.retrieval, Point3::new(0.4, 0.1, 0.05 + 0.2));
        assert_eq!(w.goal, Point3::new(0.4, 0.1, 0.05));
        assert!((w.mid.z - 0.15).abs() < 1e-12);
        assert!((w.retrieval.z - 0.25).abs() < 1e-12);
    }

    #[test]
    fn non_positive_offsets_are_errors() {
        let g = Point3::new(0.4, 0.1, 0.05);
        assert_eq!(
            plan_pick_waypoints(g, 0.0, 0.2, Point3::ORIGIN, g),
            Err(WaypointError::NonPositiveApproach(0.0))
        );
        assert_eq!(
            plan_pick_waypoints(g, 0.1, -0.3, Point3::ORIGIN, g),
            Err(WaypointError::NonPositiveLift(-0.3))
        );
    }

    #[test]
    fn json_lists_waypoints_in_traversal_order() {
        let w = plan_pick_waypoints(
            Point3::new(0.4, 0.1, 0.05),
            0.1,
            0.2,
            Point3::ORIGIN,
            Point3::new(0.0, -0.4, 0.1),
        )
        .unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let keys: Vec<usize> = ["\"I\"", "\"M\"", "\"G\"", "\"R\"", "\"F\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}
