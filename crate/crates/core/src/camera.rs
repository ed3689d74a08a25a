//! Camera view model and ray-cast visibility scoring.
//!
//! A view is a pyramidal frustum: apex at the camera position, optical axis
//! along the pose's local +z, opened by two half-angles and clipped at the
//! maximum depth range. Visibility of a surface point asks whether a voxel
//! ray from the apex reaches the point's neighborhood unobstructed.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, Pose3};
use crate::voxel::{raycast_first_hit, VoxelGrid3};
use crate::{Error, Result};

/// Frustum opening angles and depth range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Full horizontal field of view, radians.
    pub fov_h: f64,
    /// Full vertical field of view, radians.
    pub fov_v: f64,
    /// Maximum depth range, meters.
    pub max_range: f64,
}

impl CameraIntrinsics {
    pub fn new(fov_h: f64, fov_v: f64, max_range: f64) -> Result<Self> {
        if !(fov_h > 0.0 && fov_h < std::f64::consts::PI) || !(fov_v > 0.0 && fov_v < std::f64::consts::PI) {
            return Err(Error::InvalidParameter(format!(
                "field of view must be in (0, pi), got {fov_h} x {fov_v}"
            )));
        }
        if !(max_range > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "camera range must be positive, got {max_range}"
            )));
        }
        Ok(Self { fov_h, fov_v, max_range })
    }

    /// RealSense D435 depth stream: 87° x 58°, 10 m range.
    pub fn d435_depth() -> Self {
        Self {
            fov_h: 87f64.to_radians(),
            fov_v: 58f64.to_radians(),
            max_range: 10.0,
        }
    }

    /// Preset by name; `d435-depth` is the only bundled profile.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "d435-depth" => Ok(Self::d435_depth()),
            other => Err(Error::InvalidParameter(format!("unknown camera preset `{other}`"))),
        }
    }
}

/// One candidate camera placement.
#[derive(Clone, Copy, Debug)]
pub struct CameraView {
    pub pose: Pose3,
    pub intrinsics: CameraIntrinsics,
}

impl CameraView {
    pub fn new(pose: Pose3, intrinsics: CameraIntrinsics) -> Self {
        Self { pose, intrinsics }
    }

    /// True when `p` lies inside the frustum: in front of the camera, within
    /// both half-angles, and within range of the apex.
    pub fn contains_point(&self, p: &Point3) -> bool {
        let local = self.pose.isometry().inverse_transform_point(p);
        if local.z <= 0.0 {
            return false;
        }
        if local.coords.norm() > self.intrinsics.max_range {
            return false;
        }
        local.x.atan2(local.z).abs() <= self.intrinsics.fov_h * 0.5
            && local.y.atan2(local.z).abs() <= self.intrinsics.fov_v * 0.5
    }
}

/// Eq.-style 0/1 visibility of one point from one view.
///
/// The point must be inside the frustum; the voxel ray from the camera apex
/// toward it must then either reach the point's voxel without any occupied
/// hit (free line of sight), or first hit a voxel whose center lies within
/// `epsilon` of the point (the object's own surface shell).
pub fn point_visibility(view: &CameraView, grid: &VoxelGrid3, p: &Point3, epsilon: f64) -> bool {
    if !view.contains_point(p) {
        return false;
    }
    match raycast_first_hit(grid, &view.pose.position, p) {
        None => true,
        Some((_, hit_center)) => (p - hit_center).norm() <= epsilon,
    }
}

/// Fraction of points seen by at least one of the views.
pub fn object_visibility(views: &[CameraView], grid: &VoxelGrid3, points: &[Point3], epsilon: f64) -> f64 {
    assert!(!points.is_empty(), "visibility of an empty point set");
    let seen = points
        .iter()
        .filter(|p| views.iter().any(|v| point_visibility(v, grid, p, epsilon)))
        .count();
    seen as f64 / points.len() as f64
}

/// Mean object visibility across trajectory states; state i pairs
/// `grids[i]` with `point_sets[i]`.
pub fn avg_visibility(
    views: &[CameraView],
    grids: &[VoxelGrid3],
    point_sets: &[Vec<Point3>],
    epsilon: f64,
) -> Result<f64> {
    if grids.len() != point_sets.len() || grids.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} occupancy grids vs {} point sets",
            grids.len(),
            point_sets.len()
        )));
    }
    let mut total = 0.0;
    for (grid, points) in grids.iter().zip(point_sets) {
        total += object_visibility(views, grid, points, epsilon);
    }
    Ok(total / grids.len() as f64)
}
