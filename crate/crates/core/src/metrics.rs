//! Scalar objectives for a viewpoint combination: envelope coverage and mean
//! camera-to-subject distance.

use crate::camera::CameraView;
use crate::geometry::{Point3, Vector3};
use crate::robot::{MotionEnvelope, TargetPointSet};

/// Fitness of one viewpoint combination. Coverage is maximized, distance
/// minimized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveVector {
    pub coverage: f64,
    pub distance: f64,
}

impl ObjectiveVector {
    pub fn new(coverage: f64, distance: f64) -> Self {
        Self { coverage, distance }
    }

    /// Both objectives as minimization components: (-coverage, distance).
    pub fn minimized(&self) -> [f64; 2] {
        [-self.coverage, self.distance]
    }

    /// Pareto dominance: at least as good in both objectives, strictly
    /// better in one.
    pub fn dominates(&self, other: &ObjectiveVector) -> bool {
        let a = self.minimized();
        let b = other.minimized();
        a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
    }
}

/// Arithmetic mean of a point set. Panics on empty input.
pub fn centroid(points: &[Point3]) -> Point3 {
    assert!(!points.is_empty(), "centroid of an empty point set");
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

/// Fraction of the point set inside at least one view frustum.
pub(crate) fn covered_fraction(views: &[CameraView], points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let hits = points
        .iter()
        .filter(|p| views.iter().any(|v| v.contains_point(p)))
        .count();
    hits as f64 / points.len() as f64
}

/// Envelope coverage: the fraction of the 8·K·L envelope points that fall in
/// at least one view frustum.
pub fn coverage(views: &[CameraView], envelope: &MotionEnvelope) -> f64 {
    covered_fraction(views, &envelope.points)
}

/// Mean distance from the camera vertices to the envelope centroid.
pub fn distance_pick(views: &[CameraView], envelope: &MotionEnvelope) -> f64 {
    let c = envelope.centroid();
    views.iter().map(|v| (c - v.pose.position).norm()).sum::<f64>() / views.len() as f64
}

/// Mean over cameras of the mean distance to the object centroid across
/// trajectory states.
pub fn distance_place(views: &[CameraView], target: &TargetPointSet) -> f64 {
    let centroids = target.state_centroids();
    views
        .iter()
        .map(|v| per_view_place_distance(&v.pose.position, &centroids))
        .sum::<f64>()
        / views.len() as f64
}

pub(crate) fn per_view_place_distance(camera: &Point3, state_centroids: &[Point3]) -> f64 {
    state_centroids.iter().map(|c| (c - camera).norm()).sum::<f64>() / state_centroids.len() as f64
}
