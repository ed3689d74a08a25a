//! Candidate viewpoint generation and the filters that thin the pool.
//!
//! A supervisor robot is a mobile base with a camera on a small arm. The
//! sampler drops candidate base positions on a grid over the walkable floor,
//! draws random base/yaw/arm configurations, and runs the resulting camera
//! poses through a funnel of cheap-to-expensive filters: orientation toward
//! the watched volume, single-view coverage, target coverage, and collision
//! with the environment and the construction robot's swept states. Every
//! filter returns a subsequence of its input, so candidate ids stay stable
//! from sampling through final selection.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::camera::{CameraIntrinsics, CameraView};
use crate::geometry::{Aabb, FloorBoundary, Point2, Point3, Pose3, Vector3};
use crate::metrics;
use crate::robot::{
    self, forward_kinematics, JointConfig, JointKind, KinematicChain, MotionEnvelope,
};
use crate::voxel::{region_occupied, VoxelGrid3};
use crate::{Error, Result};

/// Mobile supervisor robot: base footprint, camera arm, and sensor.
#[derive(Clone, Debug)]
pub struct SupervisorModel {
    pub name: String,
    /// Camera positioning arm, rooted on the mobile base.
    pub arm: KinematicChain,
    /// Link the camera is bolted to.
    pub mount_link: String,
    /// Fixed transform from the mount link frame to the camera frame
    /// (camera looks along local +z).
    pub mount_transform: Pose3,
    /// Radius of the drivable base, used to inflate the navigation grid.
    pub footprint_radius: f64,
    /// Radius of the vertical cylinder enclosing the whole robot.
    pub collision_radius: f64,
    /// Height of the enclosing cylinder above the floor.
    pub collision_height: f64,
    pub intrinsics: CameraIntrinsics,
}

impl SupervisorModel {
    pub fn new(
        name: impl Into<String>,
        arm: KinematicChain,
        mount_link: impl Into<String>,
        mount_transform: Pose3,
        footprint_radius: f64,
        collision_radius: f64,
        collision_height: f64,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        let name = name.into();
        let mount_link = mount_link.into();
        if arm.link_index(&mount_link).is_none() {
            return Err(Error::InvalidChain(format!(
                "supervisor `{name}`: mount link `{mount_link}` not in chain `{}`",
                arm.name
            )));
        }
        if !(footprint_radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "supervisor `{name}`: footprint radius must be positive"
            )));
        }
        if collision_radius < footprint_radius {
            return Err(Error::InvalidParameter(format!(
                "supervisor `{name}`: collision radius {collision_radius} is smaller than \
                 footprint radius {footprint_radius}"
            )));
        }
        if !(collision_height > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "supervisor `{name}`: collision height must be positive"
            )));
        }
        Ok(Self {
            name,
            arm,
            mount_link,
            mount_transform,
            footprint_radius,
            collision_radius,
            collision_height,
            intrinsics,
        })
    }
}

/// One sampled camera placement, with results of the filters it has passed.
///
/// `view.pose` always equals the camera pose recomputed from `config` via
/// [`camera_pose`]; the filters only read, never move, the camera.
#[derive(Clone, Debug)]
pub struct CandidateViewpoint {
    /// Index in the original sample order; stable across filtering.
    pub id: usize,
    pub view: CameraView,
    pub config: JointConfig,
    /// Fraction of envelope points inside the frustum, once measured.
    pub coverage: Option<f64>,
    /// Same fraction over the manipulated object's corner cloud.
    pub target_coverage: Option<f64>,
    pub collision_free: Option<bool>,
}

/// Grid of admissible base positions over the walkable floor.
///
/// Positions are spaced `spacing` apart over the bounding box of all
/// boundary loops and kept when they fall inside an outer loop and outside
/// every hole (loop boundaries count as inside).
pub fn sample_base_positions(floor: &[FloorBoundary], spacing: f64) -> Result<Vec<Point2>> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base position spacing must be positive, got {spacing}"
        )));
    }
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for boundary in floor {
        let (bl, bh) = boundary.polygon.bounds();
        lo = lo.inf(&bl);
        hi = hi.sup(&bh);
    }
    let mut positions = Vec::new();
    if lo.x <= hi.x && lo.y <= hi.y {
        let nx = ((hi.x - lo.x) / spacing + 1e-9).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / spacing + 1e-9).floor() as usize + 1;
        for iy in 0..ny {
            for ix in 0..nx {
                let p = Point2::new(lo.x + ix as f64 * spacing, lo.y + iy as f64 * spacing);
                let in_outer = floor
                    .iter()
                    .any(|b| !b.is_hole && b.polygon.contains_point(&p));
                let in_hole = floor
                    .iter()
                    .any(|b| b.is_hole && b.polygon.contains_point(&p));
                if in_outer && !in_hole {
                    positions.push(p);
                }
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::AreaTooSmall);
    }
    Ok(positions)
}

/// Camera pose produced by a base placement and arm configuration.
pub fn camera_pose(model: &SupervisorModel, config: &JointConfig) -> Result<Pose3> {
    let poses = forward_kinematics(&model.arm, config)?;
    let idx = model
        .arm
        .link_index(&model.mount_link)
        .expect("mount link validated at construction");
    Ok(poses[idx].compose(&model.mount_transform))
}

/// Draws `count` random candidates: a base position chosen uniformly from
/// `base_positions` (with replacement), a uniform heading in `[0, 2pi)`, and
/// each movable arm joint uniform within its limits. Deterministic in `seed`.
pub fn sample_candidates(
    model: &SupervisorModel,
    count: usize,
    base_positions: &[Point2],
    seed: u64,
) -> Result<Vec<CandidateViewpoint>> {
    if base_positions.is_empty() {
        return Err(Error::AreaTooSmall);
    }
    let ranges: Vec<[f64; 2]> = model
        .arm
        .links()
        .iter()
        .filter_map(|l| match l.joint {
            JointKind::Revolute { limits, .. } | JointKind::Prismatic { limits, .. } => {
                Some(limits)
            }
            JointKind::Fixed => None,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = Vec::with_capacity(count);
    for id in 0..count {
        let base = base_positions[rng.gen_range(0..base_positions.len())];
        let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
        let joints: Vec<f64> = ranges
            .iter()
            .map(|&[lo, hi]| rng.gen_range(lo..=hi))
            .collect();
        let config = JointConfig::new(robot::BasePose::new(base.x, base.y, yaw), joints);
        let pose = camera_pose(model, &config)?;
        candidates.push(CandidateViewpoint {
            id,
            view: CameraView::new(pose, model.intrinsics),
            config,
            coverage: None,
            target_coverage: None,
            collision_free: None,
        });
    }
    Ok(candidates)
}

/// Angle between the camera's optical axis and the direction to `focus`.
///
/// Zero when the camera looks straight at `focus`, `pi` when it looks away.
/// A camera placed exactly at `focus` gets angle zero. Rolling the camera
/// about its optical axis does not change the angle.
pub fn orientation_angle(view: &CameraView, focus: &Point3) -> f64 {
    let axis = view.pose.rotation() * Vector3::z();
    let r = focus - view.pose.position;
    axis.cross(&r).norm().atan2(axis.dot(&r))
}

/// Drops candidates whose optical axis points more than `alpha_threshold`
/// radians away from the envelope centroid. The boundary case is kept.
pub fn filter_orientation(
    mut candidates: Vec<CandidateViewpoint>,
    envelope: &MotionEnvelope,
    alpha_threshold: f64,
) -> Vec<CandidateViewpoint> {
    let focus = envelope.centroid();
    candidates.retain(|c| orientation_angle(&c.view, &focus) <= alpha_threshold);
    candidates
}

/// Keeps candidates that alone cover at least `c_single` of the envelope,
/// caching the measured coverage on each surviving candidate.
pub fn filter_coverage(
    mut candidates: Vec<CandidateViewpoint>,
    envelope: &MotionEnvelope,
    c_single: f64,
) -> Vec<CandidateViewpoint> {
    candidates.retain_mut(|c| {
        let cov = metrics::coverage(std::slice::from_ref(&c.view), envelope);
        c.coverage = Some(cov);
        cov >= c_single
    });
    candidates
}

/// Keeps candidates that alone cover at least `c_target` of the manipulated
/// object's swept corner cloud.
pub fn filter_target_coverage(
    mut candidates: Vec<CandidateViewpoint>,
    object_envelope: &MotionEnvelope,
    c_target: f64,
) -> Vec<CandidateViewpoint> {
    candidates.retain_mut(|c| {
        let cov = metrics::coverage(std::slice::from_ref(&c.view), object_envelope);
        c.target_coverage = Some(cov);
        cov >= c_target
    });
    candidates
}

/// Drops candidates whose body would intersect the environment or the
/// construction robot's workspace.
///
/// The body is approximated by the axis-aligned box enclosing the model's
/// collision cylinder at the candidate's base position, spanning heights
/// `[ground_clearance, collision_height]` so the floor surface itself does
/// not register as a hit. A candidate fails outright when the box touches an
/// occupied environment voxel. If the box also overlaps the envelope bounds,
/// per-state occupancy decides: occupied in any state fails; with no
/// per-state grids available the overlap alone fails.
pub fn filter_collision(
    mut candidates: Vec<CandidateViewpoint>,
    env: &VoxelGrid3,
    envelope: &MotionEnvelope,
    state_grids: Option<&[VoxelGrid3]>,
    model: &SupervisorModel,
    ground_clearance: f64,
) -> Vec<CandidateViewpoint> {
    assert!(
        ground_clearance >= 0.0 && ground_clearance < model.collision_height,
        "ground clearance must lie in [0, collision height)"
    );
    let envelope_bounds = Aabb::from_points(envelope.points.iter());
    candidates.retain_mut(|c| {
        let b = &c.config.base;
        let r = model.collision_radius;
        let body = Aabb::new(
            Point3::new(b.x - r, b.y - r, ground_clearance),
            Point3::new(b.x + r, b.y + r, model.collision_height),
        );
        let free = if region_occupied(env, &body) {
            false
        } else if envelope_bounds.is_some_and(|eb| eb.intersects(&body)) {
            match state_grids {
                Some(grids) => !grids.iter().any(|g| region_occupied(g, &body)),
                None => false,
            }
        } else {
            true
        };
        c.collision_free = Some(free);
        free
    });
    candidates
}

/// Loads a supervisor model description.
///
/// The file embeds the arm chain (same shape as a standalone chain file,
/// mesh paths relative to this file), the camera mount, the body cylinder,
/// and an intrinsics preset name:
///
/// ```json
/// {
///   "name": "scout",
///   "chain": { "name": "mast", "links": [ ... ] },
///   "camera_mount": { "link": "tilt_head", "transform": { "rpy": [0.0, 1.57, 0.0] } },
///   "footprint_radius": 0.18,
///   "collision_radius": 0.25,
///   "collision_height": 1.1,
///   "intrinsics": "d435-depth"
/// }
/// ```
pub fn supervisor_from_file(path: &Path) -> Result<SupervisorModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Scene {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let parsed: SupervisorFile = serde_json::from_str(&text).map_err(|e| Error::Scene {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let arm = robot::build_chain(parsed.chain, dir)?;
    SupervisorModel::new(
        parsed.name,
        arm,
        parsed.camera_mount.link,
        parsed.camera_mount.transform.pose(),
        parsed.footprint_radius,
        parsed.collision_radius,
        parsed.collision_height,
        CameraIntrinsics::preset(&parsed.intrinsics)?,
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SupervisorFile {
    name: String,
    chain: robot::ChainFile,
    camera_mount: MountFile,
    footprint_radius: f64,
    collision_radius: f64,
    collision_height: f64,
    intrinsics: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MountFile {
    link: String,
    #[serde(default)]
    transform: robot::TransformFile,
}
