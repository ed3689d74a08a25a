//! Serial kinematic chains with mobile bases: forward kinematics, joint
//! trajectories, motion envelopes, per-state occupancy, and surface point
//! sets on a carried object.
//!
//! A chain is an ordered list of links, each with a fixed transform to its
//! parent, an optional joint (revolute or prismatic about a local axis), and
//! optional geometry. The base rides on the floor plane as (x, y, yaw).

use std::path::Path;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{compute_obb, OrientedBox, Point3, Pose3, TriMesh, Vector3};
use crate::voxel::{overlay_state, VoxelGrid3};
use crate::{Error, Result};

const LIMIT_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum JointKind {
    Fixed,
    Revolute { axis: Unit<Vector3>, limits: [f64; 2] },
    Prismatic { axis: Unit<Vector3>, limits: [f64; 2] },
}

impl JointKind {
    pub fn is_movable(&self) -> bool {
        !matches!(self, JointKind::Fixed)
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    /// Fixed transform from the parent link frame to this joint's frame.
    pub origin: Pose3,
    pub joint: JointKind,
    /// Geometry in the link-local frame, if this link has any.
    pub mesh: Option<TriMesh>,
}

/// Serial chain; link 0 hangs off the mobile base.
#[derive(Clone, Debug)]
pub struct KinematicChain {
    pub name: String,
    links: Vec<Link>,
}

impl KinematicChain {
    pub fn new(name: impl Into<String>, links: Vec<Link>) -> Result<Self> {
        for link in &links {
            match link.joint {
                JointKind::Revolute { limits, .. } | JointKind::Prismatic { limits, .. } => {
                    if limits[0] > limits[1] {
                        return Err(Error::InvalidChain(format!(
                            "link `{}`: joint limits [{}, {}] are inverted",
                            link.name, limits[0], limits[1]
                        )));
                    }
                }
                JointKind::Fixed => {}
            }
        }
        Ok(Self { name: name.into(), links })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn movable_joint_count(&self) -> usize {
        self.links.iter().filter(|l| l.joint.is_movable()).count()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn has_geometry(&self) -> bool {
        self.links.iter().any(|l| l.mesh.is_some())
    }
}

/// Planar base placement: position on the floor and heading about z.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl BasePose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

/// One snapshot of a robot: base placement plus a value per movable joint,
/// in link order.
#[derive(Clone, Debug, PartialEq)]
pub struct JointConfig {
    pub base: BasePose,
    pub joints: Vec<f64>,
}

impl JointConfig {
    pub fn new(base: BasePose, joints: Vec<f64>) -> Self {
        Self { base, joints }
    }
}

/// Ordered joint states the construction robot will pass through.
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: Vec<JointConfig>,
}

impl Trajectory {
    pub fn new(states: Vec<JointConfig>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::InvalidParameter("trajectory needs at least one state".into()));
        };
        let dim = first.joints.len();
        if states.iter().any(|s| s.joints.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "trajectory states mix joint dimensions (first has {dim})"
            )));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[JointConfig] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Object carried by the robot, expressed in its own local frame and rigidly
/// attached to a link.
#[derive(Clone, Debug)]
pub struct AttachedObject {
    pub mesh: TriMesh,
    pub link: String,
    /// Transform from the attachment link frame to the object frame.
    pub grasp: Pose3,
}

/// Union of bounding-box corners swept over a trajectory: 8 corners per
/// geometric link (object included) per state.
#[derive(Clone, Debug)]
pub struct MotionEnvelope {
    pub points: Vec<Point3>,
    pub num_states: usize,
    pub num_links: usize,
}

impl MotionEnvelope {
    pub fn centroid(&self) -> Point3 {
        crate::metrics::centroid(&self.points)
    }
}

/// Fixed surface samples on the carried object plus their world positions at
/// every trajectory state. Index k refers to the same material point
/// everywhere.
#[derive(Clone, Debug)]
pub struct TargetPointSet {
    pub local_points: Vec<Point3>,
    pub world_points: Vec<Vec<Point3>>,
}

impl TargetPointSet {
    pub fn state_centroids(&self) -> Vec<Point3> {
        self.world_points.iter().map(|pts| crate::metrics::centroid(pts)).collect()
    }
}

/// World pose of every link at `state`, in link order.
pub fn forward_kinematics(chain: &KinematicChain, state: &JointConfig) -> Result<Vec<Pose3>> {
    Ok(link_isometries(chain, state)?.iter().map(Pose3::from_isometry).collect())
}

fn link_isometries(chain: &KinematicChain, state: &JointConfig) -> Result<Vec<Isometry3<f64>>> {
    if state.joints.len() != chain.movable_joint_count() {
        return Err(Error::DimensionMismatch(format!(
            "chain `{}` has {} movable joints, config carries {}",
            chain.name,
            chain.movable_joint_count(),
            state.joints.len()
        )));
    }
    let mut poses = Vec::with_capacity(chain.links.len());
    let mut iso = state.base.isometry();
    let mut next_joint = 0usize;
    for link in &chain.links {
        iso *= link.origin.isometry();
        match &link.joint {
            JointKind::Fixed => {}
            JointKind::Revolute { axis, limits } => {
                let q = state.joints[next_joint];
                next_joint += 1;
                check_limit(&link.name, q, limits)?;
                iso *= UnitQuaternion::from_axis_angle(axis, q);
            }
            JointKind::Prismatic { axis, limits } => {
                let q = state.joints[next_joint];
                next_joint += 1;
                check_limit(&link.name, q, limits)?;
                iso *= Translation3::from(axis.into_inner() * q);
            }
        }
        poses.push(iso);
    }
    Ok(poses)
}

fn check_limit(joint: &str, value: f64, limits: &[f64; 2]) -> Result<()> {
    if value < limits[0] - LIMIT_SLACK || value > limits[1] + LIMIT_SLACK {
        return Err(Error::JointLimit {
            joint: joint.to_string(),
            value,
            lower: limits[0],
            upper: limits[1],
        });
    }
    Ok(())
}

/// World pose of the attached object at `state`.
pub fn object_pose(chain: &KinematicChain, state: &JointConfig, attached: &AttachedObject) -> Result<Pose3> {
    let idx = chain.link_index(&attached.link).ok_or_else(|| {
        Error::InvalidChain(format!("attachment link `{}` not in chain `{}`", attached.link, chain.name))
    })?;
    let iso = link_isometries(chain, state)?[idx] * attached.grasp.isometry();
    Ok(Pose3::from_isometry(&iso))
}

/// Tight boxes around every geometric link (and the object) at one state.
pub fn state_boxes(
    chain: &KinematicChain,
    state: &JointConfig,
    attached: Option<&AttachedObject>,
) -> Result<Vec<OrientedBox>> {
    let isos = link_isometries(chain, state)?;
    let mut boxes = Vec::new();
    for (link, iso) in chain.links.iter().zip(&isos) {
        if let Some(mesh) = &link.mesh {
            boxes.push(obb_of_transformed(mesh, iso));
        }
    }
    if let Some(obj) = attached {
        let idx = chain.link_index(&obj.link).ok_or_else(|| {
            Error::InvalidChain(format!("attachment link `{}` not in chain `{}`", obj.link, chain.name))
        })?;
        let iso = isos[idx] * obj.grasp.isometry();
        boxes.push(obb_of_transformed(&obj.mesh, &iso));
    }
    Ok(boxes)
}

fn obb_of_transformed(mesh: &TriMesh, iso: &Isometry3<f64>) -> OrientedBox {
    let world: Vec<Point3> = mesh.vertices().iter().map(|v| iso * v).collect();
    compute_obb(&world)
}

/// Motion envelope of the whole robot (plus carried object) over a
/// trajectory: per state, the 8 corners of every link's bounding box.
pub fn motion_envelope(
    chain: &KinematicChain,
    traj: &Trajectory,
    attached: Option<&AttachedObject>,
) -> Result<MotionEnvelope> {
    let num_links = chain.links.iter().filter(|l| l.mesh.is_some()).count() + attached.is_some() as usize;
    if num_links == 0 {
        return Err(Error::NoGeometry(format!("chain `{}` has no link meshes", chain.name)));
    }
    let mut points = Vec::with_capacity(8 * traj.len() * num_links);
    for state in traj.states() {
        for b in state_boxes(chain, state, attached)? {
            points.extend_from_slice(&b.corners());
        }
    }
    Ok(MotionEnvelope {
        points,
        num_states: traj.len(),
        num_links,
    })
}

/// Motion envelope restricted to the carried object: 8 corners per state.
pub fn object_envelope(chain: &KinematicChain, traj: &Trajectory, attached: &AttachedObject) -> Result<MotionEnvelope> {
    let mut points = Vec::with_capacity(8 * traj.len());
    for state in traj.states() {
        let pose = object_pose(chain, state, attached)?;
        let world: Vec<Point3> = attached.mesh.vertices().iter().map(|v| pose.transform_point(v)).collect();
        if world.is_empty() {
            return Err(Error::EmptyMesh);
        }
        points.extend_from_slice(&compute_obb(&world).corners());
    }
    Ok(MotionEnvelope {
        points,
        num_states: traj.len(),
        num_links: 1,
    })
}

/// Exactly `count` uniform surface samples on the object, in its local frame.
pub fn sample_target_points(attached: &AttachedObject, count: usize, seed: u64) -> Result<Vec<Point3>> {
    if count == 0 {
        return Err(Error::InvalidParameter("target point count must be at least 1".into()));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    crate::geometry::sample_surface_points(&attached.mesh, count, &mut rng)
}

/// Carries the local samples through every trajectory state.
pub fn target_points_at_states(
    local_points: &[Point3],
    chain: &KinematicChain,
    traj: &Trajectory,
    attached: &AttachedObject,
) -> Result<TargetPointSet> {
    let mut world_points = Vec::with_capacity(traj.len());
    for state in traj.states() {
        let pose = object_pose(chain, state, attached)?;
        world_points.push(local_points.iter().map(|p| pose.transform_point(p)).collect());
    }
    Ok(TargetPointSet {
        local_points: local_points.to_vec(),
        world_points,
    })
}

/// Environment map with the robot stamped in at one state: occupied wherever
/// the environment is, plus the surface shells of all link boxes.
pub fn state_occupancy(
    env: &VoxelGrid3,
    chain: &KinematicChain,
    state: &JointConfig,
    attached: Option<&AttachedObject>,
) -> Result<VoxelGrid3> {
    Ok(overlay_state(env, &state_boxes(chain, state, attached)?))
}

/// Densifies keyframes by linear interpolation in joint space and base
/// coordinates; yaw takes the shortest angular path. Endpoints appear once.
pub fn interpolate_trajectory(keyframes: &[JointConfig], steps_per_segment: usize) -> Result<Trajectory> {
    if keyframes.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 keyframes, got {}",
            keyframes.len()
        )));
    }
    if steps_per_segment == 0 {
        return Err(Error::InvalidParameter("steps_per_segment must be at least 1".into()));
    }
    let dim = keyframes[0].joints.len();
    if keyframes.iter().any(|k| k.joints.len() != dim) {
        return Err(Error::DimensionMismatch("keyframes mix joint dimensions".into()));
    }

    let mut states = vec![keyframes[0].clone()];
    for pair in keyframes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let yaw_delta = shortest_angle(b.base.yaw - a.base.yaw);
        for step in 1..=steps_per_segment {
            if step == steps_per_segment {
                states.push(b.clone());
                continue;
            }
            let t = step as f64 / steps_per_segment as f64;
            let joints = a
                .joints
                .iter()
                .zip(&b.joints)
                .map(|(&qa, &qb)| qa + t * (qb - qa))
                .collect();
            let base = BasePose::new(
                a.base.x + t * (b.base.x - a.base.x),
                a.base.y + t * (b.base.y - a.base.y),
                wrap_angle(a.base.yaw + t * yaw_delta),
            );
            states.push(JointConfig::new(base, joints));
        }
    }
    Trajectory::new(states)
}

fn shortest_angle(delta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    (delta + PI).rem_euclid(TAU) - PI
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ChainFile {
    name: String,
    links: Vec<LinkFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    #[serde(default)]
    origin: TransformFile,
    joint: JointFile,
    #[serde(default)]
    mesh: Option<String>,
}

#[derive(Serialize, Deserialize, Clone, Default)]
#[serde(deny_unknown_fields)]
pub(crate) struct TransformFile {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl TransformFile {
    pub(crate) fn pose(&self) -> Pose3 {
        Pose3::new(Point3::new(self.xyz[0], self.xyz[1], self.xyz[2]), self.rpy)
    }
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum JointFile {
    Fixed,
    Revolute { axis: [f64; 3], limits: [f64; 2] },
    Prismatic { axis: [f64; 3], limits: [f64; 2] },
}

/// Loads a chain description: ordered links with `origin` (xyz + rpy, the
/// roll-pitch-yaw convention of [`Pose3`]), `joint` (`fixed`, or
/// `revolute`/`prismatic` with a local `axis` and `limits`), and an optional
/// `mesh` path resolved relative to the file.
pub fn chain_from_file(path: &Path) -> Result<KinematicChain> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Scene {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let parsed: ChainFile = serde_json::from_str(&text).map_err(|e| Error::Scene {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    build_chain(parsed, dir)
}

/// Turns a parsed chain description into a validated chain, resolving mesh
/// paths relative to `dir`.
pub(crate) fn build_chain(parsed: ChainFile, dir: &Path) -> Result<KinematicChain> {
    let mut links = Vec::with_capacity(parsed.links.len());
    for lf in parsed.links {
        let joint = match lf.joint {
            JointFile::Fixed => JointKind::Fixed,
            JointFile::Revolute { axis, limits } => JointKind::Revolute {
                axis: unit_axis(&lf.name, axis)?,
                limits,
            },
            JointFile::Prismatic { axis, limits } => JointKind::Prismatic {
                axis: unit_axis(&lf.name, axis)?,
                limits,
            },
        };
        let mesh = match &lf.mesh {
            Some(rel) => Some(crate::io::load_mesh(&dir.join(rel))?),
            None => None,
        };
        links.push(Link {
            name: lf.name,
            origin: lf.origin.pose(),
            joint,
            mesh,
        });
    }
    KinematicChain::new(parsed.name, links)
}

fn unit_axis(link: &str, axis: [f64; 3]) -> Result<Unit<Vector3>> {
    let v = Vector3::new(axis[0], axis[1], axis[2]);
    if v.norm() < 1e-9 {
        return Err(Error::InvalidChain(format!("link `{link}`: joint axis is zero")));
    }
    Ok(Unit::new_normalize(v))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::Aabb;

    fn unit_cube_mesh() -> TriMesh {
        let v = vec![
            Point3::new(-0.5, -0.5, -0.5),
            Point3::new(0.5, -0.5, -0.5),
            Point3::new(0.5, 0.5, -0.5),
            Point3::new(-0.5, 0.5, -0.5),
            Point3::new(-0.5, -0.5, 0.5),
            Point3::new(0.5, -0.5, 0.5),
            Point3::new(0.5, 0.5, 0.5),
            Point3::new(-0.5, 0.5, 0.5),
        ];
        let t = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriMesh::new(v, t).unwrap()
    }

    fn revolute_z(name: &str, x_offset: f64, mesh: Option<TriMesh>) -> Link {
        Link {
            name: name.into(),
            origin: Pose3::from_xyz_rpy(x_offset, 0.0, 0.0, 0.0, 0.0, 0.0),
            joint: JointKind::Revolute {
                axis: Vector3::z_axis(),
                limits: [-std::f64::consts::PI, std::f64::consts::PI],
            },
            mesh,
        }
    }

    fn planar_two_link(l1: f64, l2: f64) -> KinematicChain {
        KinematicChain::new(
            "arm",
            vec![
                revolute_z("shoulder", 0.0, None),
                revolute_z("elbow", l1, None),
                Link {
                    name: "tip".into(),
                    origin: Pose3::from_xyz_rpy(l2, 0.0, 0.0, 0.0, 0.0, 0.0),
                    joint: JointKind::Fixed,
                    mesh: None,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn fk_zero_config_accumulates_fixed_transforms() {
        let chain = KinematicChain::new(
            "c",
            vec![
                Link {
                    name: "a".into(),
                    origin: Pose3::from_xyz_rpy(1.0, 0.0, 0.5, 0.0, 0.0, 0.0),
                    joint: JointKind::Fixed,
                    mesh: None,
                },
                Link {
                    name: "b".into(),
                    origin: Pose3::from_xyz_rpy(0.0, 2.0, 0.0, 0.0, 0.0, 0.0),
                    joint: JointKind::Fixed,
                    mesh: None,
                },
            ],
        )
        .unwrap();
        let poses = forward_kinematics(&chain, &JointConfig::new(BasePose::default(), vec![])).unwrap();
        assert_relative_eq!(poses[0].position, Point3::new(1.0, 0.0, 0.5), epsilon = 1e-12);
        assert_relative_eq!(poses[1].position, Point3::new(1.0, 2.0, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn fk_planar_arm_quarter_turn() {
        let chain = planar_two_link(0.7, 0.4);
        let cfg = JointConfig::new(BasePose::default(), vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let poses = forward_kinematics(&chain, &cfg).unwrap();
        let tip = poses.last().unwrap().position;
        assert_relative_eq!(tip, Point3::new(0.0, 1.1, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn fk_matches_homogeneous_matrix_oracle() {
        let chain = KinematicChain::new(
            "c",
            vec![
                Link {
                    name: "j1".into(),
                    origin: Pose3::from_xyz_rpy(0.1, 0.2, 0.3, 0.2, -0.1, 0.4),
                    joint: JointKind::Revolute { axis: Vector3::z_axis(), limits: [-4.0, 4.0] },
                    mesh: None,
                },
                Link {
                    name: "j2".into(),
                    origin: Pose3::from_xyz_rpy(0.5, 0.0, 0.1, 0.0, 0.3, 0.0),
                    joint: JointKind::Revolute { axis: Vector3::y_axis(), limits: [-4.0, 4.0] },
                    mesh: None,
                },
                Link {
                    name: "j3".into(),
                    origin: Pose3::from_xyz_rpy(0.0, 0.4, 0.0, 0.1, 0.0, -0.2),
                    joint: JointKind::Prismatic { axis: Vector3::x_axis(), limits: [-1.0, 1.0] },
                    mesh: None,
                },
            ],
        )
        .unwrap();

        let hom = |pose: &Pose3| -> Matrix4<f64> {
            let mut m = Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation().matrix());
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.position.coords);
            m
        };
        let rot_z = |q: f64| {
            hom(&Pose3::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, q))
        };
        let rot_y = |q: f64| {
            hom(&Pose3::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, q, 0.0))
        };
        let trans_x = |q: f64| {
            hom(&Pose3::from_xyz_rpy(q, 0.0, 0.0, 0.0, 0.0, 0.0))
        };

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let base = BasePose::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0));
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let cfg = JointConfig::new(base, q.clone());

            let poses = forward_kinematics(&chain, &cfg).unwrap();

            let base_m = hom(&Pose3::from_xyz_rpy(base.x, base.y, 0.0, 0.0, 0.0, base.yaw));
            let expected = base_m
                * hom(&chain.links()[0].origin)
                * rot_z(q[0])
                * hom(&chain.links()[1].origin)
                * rot_y(q[1])
                * hom(&chain.links()[2].origin)
                * trans_x(q[2]);

            let tip = poses.last().unwrap();
            let got = hom(tip);
            for i in 0..4 {
                for j in 0..4 {
                    assert!(
                        (got[(i, j)] - expected[(i, j)]).abs() < 1e-9,
                        "entry ({i},{j}): {} vs {}",
                        got[(i, j)],
                        expected[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn fk_rejects_out_of_limit_joint_by_name() {
        let chain = planar_two_link(1.0, 1.0);
        let cfg = JointConfig::new(BasePose::default(), vec![0.0, 9.0]);
        let err = forward_kinematics(&chain, &cfg).unwrap_err();
        assert!(err.to_string().contains("elbow"), "error should name the joint: {err}");
    }

    #[test]
    fn fk_perturbation_only_moves_descendants() {
        let chain = planar_two_link(1.0, 1.0);
        let a = forward_kinematics(&chain, &JointConfig::new(BasePose::default(), vec![0.3, 0.2])).unwrap();
        let b = forward_kinematics(&chain, &JointConfig::new(BasePose::default(), vec![0.3, 0.25])).unwrap();
        assert_relative_eq!(a[0].position, b[0].position, epsilon = 1e-12);
        assert!((a[2].position - b[2].position).norm() > 1e-3);
    }

    fn single_cube_chain() -> KinematicChain {
        KinematicChain::new(
            "cube",
            vec![Link {
                name: "body".into(),
                origin: Pose3::identity(),
                joint: JointKind::Fixed,
                mesh: Some(unit_cube_mesh()),
            }],
        )
        .unwrap()
    }

    #[test]
    fn envelope_of_static_cube_is_its_corners() {
        let chain = single_cube_chain();
        let traj = Trajectory::new(vec![JointConfig::new(BasePose::default(), vec![])]).unwrap();
        let env = motion_envelope(&chain, &traj, None).unwrap();
        assert_eq!(env.points.len(), 8);
        assert_eq!((env.num_states, env.num_links), (1, 1));
        let mut got: Vec<[i64; 3]> = env
            .points
            .iter()
            .map(|p| [(p.x * 2.0).round() as i64, (p.y * 2.0).round() as i64, (p.z * 2.0).round() as i64])
            .collect();
        got.sort_unstable();
        let mut expected = Vec::new();
        for sx in [-1i64, 1] {
            for sy in [-1i64, 1] {
                for sz in [-1i64, 1] {
                    expected.push([sx, sy, sz]);
                }
            }
        }
        expected.sort_unstable();
        assert_eq!(got, expected);
        for p in &env.points {
            assert!(p.coords.amax() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn envelope_repeats_identical_states() {
        let chain = single_cube_chain();
        let state = JointConfig::new(BasePose::default(), vec![]);
        let traj = Trajectory::new(vec![state.clone(), state]).unwrap();
        let env = motion_envelope(&chain, &traj, None).unwrap();
        assert_eq!(env.points.len(), 16);
        for k in 0..8 {
            assert_relative_eq!(env.points[k], env.points[k + 8], epsilon = 1e-12);
        }
    }

    #[test]
    fn envelope_counts_and_contains_link_vertices() {
        let mesh = unit_cube_mesh();
        let links = vec![
            Link {
                name: "l1".into(),
                origin: Pose3::identity(),
                joint: JointKind::Revolute { axis: Vector3::z_axis(), limits: [-4.0, 4.0] },
                mesh: Some(mesh.clone()),
            },
            Link {
                name: "l2".into(),
                origin: Pose3::from_xyz_rpy(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                joint: JointKind::Revolute { axis: Vector3::y_axis(), limits: [-4.0, 4.0] },
                mesh: Some(mesh.clone()),
            },
            Link {
                name: "l3".into(),
                origin: Pose3::from_xyz_rpy(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                joint: JointKind::Revolute { axis: Vector3::x_axis(), limits: [-4.0, 4.0] },
                mesh: Some(mesh.clone()),
            },
        ];
        let chain = KinematicChain::new("c", links).unwrap();
        let attached = AttachedObject {
            mesh: mesh.clone(),
            link: "l3".into(),
            grasp: Pose3::from_xyz_rpy(0.5, 0.0, 0.0, 0.0, 0.0, 0.0),
        };

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let states: Vec<JointConfig> = (0..10)
            .map(|_| {
                JointConfig::new(
                    BasePose::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0)),
                    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let traj = Trajectory::new(states).unwrap();
        let env = motion_envelope(&chain, &traj, Some(&attached)).unwrap();
        assert_eq!(env.points.len(), 8 * 10 * 4);

        for (i, state) in traj.states().iter().enumerate() {
            let boxes = state_boxes(&chain, state, Some(&attached)).unwrap();
            let isos = link_isometries(&chain, state).unwrap();
            for (b, iso) in boxes.iter().take(3).zip(&isos) {
                for v in mesh.vertices() {
                    assert!(b.contains_point(&(iso * v), 1e-9), "state {i}: vertex escapes its box");
                }
            }
        }
    }

    #[test]
    fn envelope_without_geometry_errors() {
        let chain = planar_two_link(1.0, 1.0);
        let traj = Trajectory::new(vec![JointConfig::new(BasePose::default(), vec![0.0, 0.0])]).unwrap();
        assert!(matches!(motion_envelope(&chain, &traj, None), Err(Error::NoGeometry(_))));
    }

    fn carrying_chain() -> (KinematicChain, AttachedObject) {
        let chain = KinematicChain::new(
            "carrier",
            vec![Link {
                name: "hand".into(),
                origin: Pose3::identity(),
                joint: JointKind::Prismatic { axis: Vector3::x_axis(), limits: [-5.0, 5.0] },
                mesh: None,
            }],
        )
        .unwrap();
        let attached = AttachedObject {
            mesh: unit_cube_mesh(),
            link: "hand".into(),
            grasp: Pose3::identity(),
        };
        (chain, attached)
    }

    #[test]
    fn object_envelope_counts_and_translates() {
        let (chain, attached) = carrying_chain();
        let traj = Trajectory::new(vec![
            JointConfig::new(BasePose::default(), vec![0.0]),
            JointConfig::new(BasePose::default(), vec![1.0]),
            JointConfig::new(BasePose::default(), vec![2.0]),
        ])
        .unwrap();
        let env = object_envelope(&chain, &traj, &attached).unwrap();
        assert_eq!(env.points.len(), 24);

        let centroid_of = |pts: &[Point3]| {
            pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / pts.len() as f64
        };
        let c0 = centroid_of(&env.points[0..8]);
        let c1 = centroid_of(&env.points[8..16]);
        let c2 = centroid_of(&env.points[16..24]);
        assert_relative_eq!(c1 - c0, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-9);
        assert_relative_eq!(c2 - c1, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn object_envelope_static_states_identical() {
        let (chain, attached) = carrying_chain();
        let state = JointConfig::new(BasePose::default(), vec![0.5]);
        let traj = Trajectory::new(vec![state.clone(), state.clone(), state]).unwrap();
        let env = object_envelope(&chain, &traj, &attached).unwrap();
        for k in 0..8 {
            assert_relative_eq!(env.points[k], env.points[k + 8], epsilon = 1e-12);
            assert_relative_eq!(env.points[k], env.points[k + 16], epsilon = 1e-12);
        }
    }

    #[test]
    fn target_samples_are_on_surface_and_deterministic() {
        let (_, attached) = carrying_chain();
        let pts = sample_target_points(&attached, 200, 5).unwrap();
        assert_eq!(pts.len(), 200);
        for p in &pts {
            let on_face = p.coords.iter().any(|&c| (c.abs() - 0.5).abs() < 1e-9);
            let inside = p.coords.iter().all(|&c| c.abs() <= 0.5 + 1e-9);
            assert!(on_face && inside, "sample {p} not on the cube surface");
        }
        let again = sample_target_points(&attached, 200, 5).unwrap();
        assert_eq!(pts, again);
        assert_eq!(sample_target_points(&attached, 1, 0).unwrap().len(), 1);
    }

    #[test]
    fn target_points_follow_object_rigidly() {
        let (chain, attached) = carrying_chain();
        let traj = Trajectory::new(vec![
            JointConfig::new(BasePose::default(), vec![0.0]),
            JointConfig::new(BasePose::new(0.0, 0.0, 1.3), vec![1.5]),
        ])
        .unwrap();
        let local = sample_target_points(&attached, 50, 1).unwrap();
        let set = target_points_at_states(&local, &chain, &traj, &attached).unwrap();
        assert_eq!(set.world_points.len(), 2);
        assert_eq!(set.world_points[0].len(), 50);

        for (a, b) in local.iter().zip(&set.world_points[0]) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        for state_pts in &set.world_points {
            for i in 0..10 {
                for j in (i + 1)..10 {
                    let d_local = (local[i] - local[j]).norm();
                    let d_world = (state_pts[i] - state_pts[j]).norm();
                    assert!((d_local - d_world).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn state_occupancy_overlays_shell_monotonically() {
        let mut env = VoxelGrid3::new(Point3::new(-2.0, -2.0, -2.0), 0.1, [40, 40, 40]).unwrap();
        env.set_occupied(crate::voxel::GridIndex::new(1, 1, 1));

        let bare = planar_two_link(1.0, 1.0);
        let state = JointConfig::new(BasePose::default(), vec![0.0, 0.0]);
        let same = state_occupancy(&env, &bare, &state, None).unwrap();
        assert_eq!(same.occupied_count(), env.occupied_count());

        let chain = single_cube_chain();
        let stamped = state_occupancy(&env, &chain, &JointConfig::new(BasePose::default(), vec![]), None).unwrap();
        assert!(stamped.occupied_count() > env.occupied_count());
        for i in env.occupied_indices() {
            assert!(stamped.is_occupied(i));
        }
        let interior = stamped.index_of(&Point3::origin()).unwrap();
        assert!(!stamped.is_occupied(interior), "cube interior stays hollow");
    }

    #[test]
    fn interpolation_endpoints_and_linearity() {
        let a = JointConfig::new(BasePose::default(), vec![0.0]);
        let b = JointConfig::new(BasePose::default(), vec![1.0]);
        let two = interpolate_trajectory(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two.states()[0], a);
        assert_eq!(two.states()[1], b);

        let five = interpolate_trajectory(&[a, b], 4).unwrap();
        let values: Vec<f64> = five.states().iter().map(|s| s.joints[0]).collect();
        for (got, want) in values.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolation_wraps_yaw_the_short_way() {
        let a = JointConfig::new(BasePose::new(0.0, 0.0, 170f64.to_radians()), vec![]);
        let b = JointConfig::new(BasePose::new(0.0, 0.0, -170f64.to_radians()), vec![]);
        let traj = interpolate_trajectory(&[a, b], 2).unwrap();
        let mid = traj.states()[1].base.yaw;
        assert_relative_eq!(mid.abs(), std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(traj.states()[2].base.yaw, -170f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn trajectory_rejects_mixed_dimensions() {
        let a = JointConfig::new(BasePose::default(), vec![0.0]);
        let b = JointConfig::new(BasePose::default(), vec![0.0, 1.0]);
        assert!(Trajectory::new(vec![a.clone(), b.clone()]).is_err());
        assert!(interpolate_trajectory(&[a, b], 2).is_err());
    }

    #[test]
    fn envelope_centroid_and_aabb_behave() {
        let chain = single_cube_chain();
        let traj = Trajectory::new(vec![JointConfig::new(BasePose::new(2.0, 0.0, 0.0), vec![])]).unwrap();
        let env = motion_envelope(&chain, &traj, None).unwrap();
        assert_relative_eq!(env.centroid(), Point3::new(2.0, 0.0, 0.0), epsilon = 1e-9);
        let bb = Aabb::from_points(&env.points).unwrap();
        assert_relative_eq!(bb.min, Point3::new(1.5, -0.5, -0.5), epsilon = 1e-9);
        assert_relative_eq!(bb.max, Point3::new(2.5, 0.5, 0.5), epsilon = 1e-9);
    }
}
