//! Scene files, environment modeling, and the end-to-end planning run.
//!
//! A scene bundles the as-built geometry, the stock of building materials,
//! the installation targets, the construction robot, and the supervisor
//! fleet. [`run_selection`] turns one named trajectory into a [`RunReport`]:
//! it samples candidate viewpoints on the walkable floor, thins them through
//! the filter funnel, searches viewpoint combinations, and routes the
//! supervisors to the winner. [`update_after_install`] advances the scene
//! after a target is built, and [`export_geometry`] dumps the run as point
//! clouds for inspection.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::allocation::{assign, assign_single, path_length, shortest_path, viewpoint_goal_cell};
use crate::camera::{point_visibility, CameraView};
use crate::geometry::{
    extract_floor_boundary, sample_mesh_surface, Aabb, FloorBoundary, Point2, Point3, Pose3,
    TriMesh, Vector3,
};
use crate::io::{load_mesh, write_ply_edges, write_ply_points};
use crate::metrics;
use crate::optimizer::{
    nsga2_run, select_final, EvalContext, Nsga2Params, VisibilityContext,
};
use crate::robot::{
    chain_from_file, interpolate_trajectory, motion_envelope, object_envelope,
    sample_target_points, state_occupancy, target_points_at_states, AttachedObject, BasePose,
    JointConfig, KinematicChain, MotionEnvelope, TargetPointSet, TransformFile,
};
use crate::sampler::{
    filter_collision, filter_coverage, filter_orientation, filter_target_coverage,
    sample_base_positions, sample_candidates, supervisor_from_file, SupervisorModel,
};
use crate::voxel::{build_from_points, project_to_2d, OccupancyGrid2, VoxelGrid3};
use crate::{Error, Result};

const REPORT_SCHEMA: &str = "vantage-report/1";

/// Which half of a transport cycle the construction robot is about to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    /// Drive the arm to a stored material; nothing is carried yet.
    Pick,
    /// Carry the grasped material to its installation target.
    Place,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Pick => "pick",
            Operation::Place => "place",
        })
    }
}

impl FromStr for Operation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pick" => Ok(Operation::Pick),
            "place" => Ok(Operation::Place),
            other => Err(Error::InvalidParameter(format!(
                "unknown operation `{other}`, expected `pick` or `place`"
            ))),
        }
    }
}

/// Tuning knobs of a planning run. Every field has a default, so a config
/// file only lists what it overrides.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Edge length of the occupancy voxels, meters.
    pub voxel_resolution: f64,
    /// Surface samples per square meter when voxelizing scene meshes.
    /// Defaults to 16 per voxel-sized patch, dense enough that chance gaps
    /// in a wall are negligible.
    pub surface_sample_density: Option<f64>,
    /// Grid pitch of candidate base positions on the floor, meters.
    pub base_spacing: f64,
    /// Number of candidate viewpoints drawn before filtering.
    pub sample_count: usize,
    /// Largest allowed angle between the optical axis and the direction to
    /// the envelope centroid, radians.
    pub alpha_threshold: f64,
    /// Minimum envelope coverage a candidate must manage alone.
    pub c_single: f64,
    /// Minimum coverage of the carried object's corner cloud, place only.
    pub c_single_target: f64,
    /// Coverage a final deployment must reach to count as compliant.
    pub coverage_threshold: f64,
    /// Surface samples tracked on the carried object.
    pub target_point_count: usize,
    /// Ray-cast hit acceptance radius, meters. Defaults to 1.5 voxel
    /// diagonals.
    pub epsilon: Option<f64>,
    /// Height band above the floor ignored by collision and navigation
    /// checks, so the floor surface itself does not read as an obstacle.
    /// Defaults to two voxels.
    pub ground_clearance: Option<f64>,
    /// Genetic search settings. Its `seed` field is superseded by the run
    /// seed below.
    pub nsga: Nsga2Params,
    /// Master seed; every random stage derives its own stream from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voxel_resolution: 0.05,
            surface_sample_density: None,
            base_spacing: 0.25,
            sample_count: 800,
            alpha_threshold: std::f64::consts::FRAC_PI_3,
            c_single: 0.5,
            c_single_target: 0.4,
            coverage_threshold: 0.97,
            target_point_count: 200,
            epsilon: None,
            ground_clearance: None,
            nsga: Nsga2Params::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Reads a config file, accepting any subset of the fields.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scene {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Scene {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_resolution > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "voxel resolution must be positive, got {}",
                self.voxel_resolution
            )));
        }
        if !(self.base_spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "base spacing must be positive, got {}",
                self.base_spacing
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        if self.target_point_count == 0 {
            return Err(Error::InvalidParameter("target point count must be at least 1".into()));
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold <= std::f64::consts::PI) {
            return Err(Error::InvalidParameter(format!(
                "alpha threshold must lie in (0, pi], got {}",
                self.alpha_threshold
            )));
        }
        for (name, value) in [
            ("c_single", self.c_single),
            ("c_single_target", self.c_single_target),
            ("coverage_threshold", self.coverage_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {value}"
                )));
            }
        }
        if let Some(d) = self.surface_sample_density {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "surface sample density must be positive, got {d}"
                )));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::InvalidParameter(format!("epsilon must be positive, got {e}")));
            }
        }
        if let Some(c) = self.ground_clearance {
            if !(c >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "ground clearance must be nonnegative, got {c}"
                )));
            }
        }
        self.nsga.validate()
    }

    pub fn resolved_epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(1.5 * self.voxel_resolution * 3.0_f64.sqrt())
    }

    pub fn resolved_ground_clearance(&self) -> f64 {
        self.ground_clearance.unwrap_or(2.0 * self.voxel_resolution)
    }

    pub fn resolved_surface_sample_density(&self) -> f64 {
        self.surface_sample_density
            .unwrap_or(16.0 / (self.voxel_resolution * self.voxel_resolution))
    }

    /// Copy with every optional knob pinned to its effective value, as
    /// echoed into reports.
    pub fn resolved(&self) -> PipelineConfig {
        PipelineConfig {
            surface_sample_density: Some(self.resolved_surface_sample_density()),
            epsilon: Some(self.resolved_epsilon()),
            ground_clearance: Some(self.resolved_ground_clearance()),
            ..self.clone()
        }
    }
}

/// Derives an independent RNG stream for one pipeline stage.
fn stage_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const SEED_ENVIRONMENT: u64 = 1;
const SEED_TARGET_POINTS: u64 = 2;
const SEED_CANDIDATES: u64 = 3;
const SEED_SEARCH: u64 = 4;

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: String,
    floor: FloorFile,
    #[serde(default)]
    as_built: Vec<AsBuiltFile>,
    #[serde(default)]
    material_types: Vec<MaterialTypeFile>,
    #[serde(default)]
    materials: Vec<MaterialFile>,
    #[serde(default)]
    targets: Vec<TargetFile>,
    construction_robot: ConstructionFile,
    supervisors: Vec<SupervisorRefFile>,
    #[serde(default)]
    trajectories: Vec<TrajectoryFile>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct FloorFile {
    mesh: String,
    /// Height of the walkable surface, meters.
    #[serde(default)]
    height: f64,
    /// Vertical tolerance when collecting floor triangles.
    #[serde(default = "default_floor_tolerance")]
    tolerance: f64,
}

fn default_floor_tolerance() -> f64 {
    0.01
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct AsBuiltFile {
    name: String,
    mesh: String,
    #[serde(default)]
    transform: TransformFile,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct MaterialTypeFile {
    name: String,
    mesh: String,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    position: [f64; 3],
    #[serde(default)]
    rotation: [f64; 3],
    /// Grasp approach direction, unit length. Carried through for grasp
    /// tooling; viewpoint planning does not read it.
    picking_direction: [f64; 3],
    /// Grasp point offset from the material frame, also carried through.
    #[serde(default)]
    offset: [f64; 3],
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    position: [f64; 3],
    /// Outward normal of the installed face, unit length.
    normal: [f64; 3],
    /// Build sequence number; 1 is built first.
    order: usize,
    #[serde(default)]
    installed: bool,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct ConstructionFile {
    /// Chain description file, relative to the scene file.
    chain: String,
    /// Base placement as x, y, yaw.
    #[serde(default)]
    base: [f64; 3],
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct SupervisorRefFile {
    /// Supervisor model file, relative to the scene file.
    model: String,
    /// Parking position as x, y, yaw.
    start: [f64; 3],
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    name: String,
    operation: Operation,
    /// Order number of the target this motion serves.
    target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attached: Option<AttachedFile>,
    /// Joint values per keyframe, movable joints in link order.
    keyframes: Vec<Vec<f64>>,
    steps_per_segment: usize,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct AttachedFile {
    /// Name of the carried material.
    material: String,
    /// Construction robot link the object is rigidly attached to.
    link: String,
    /// Link-frame pose of the object.
    #[serde(default)]
    grasp: TransformFile,
}

/// A loaded scene: the raw file plus resolved meshes and robot models.
pub struct Scene {
    path: String,
    file: SceneFile,
    meshes: HashMap<String, TriMesh>,
    /// Construction robot kinematics.
    pub construction: KinematicChain,
    /// Where the construction robot stands.
    pub construction_base: BasePose,
    /// Supervisor models, one per deployable robot.
    pub supervisors: Vec<SupervisorModel>,
    /// Parking poses the supervisors start from, aligned with
    /// `supervisors`.
    pub supervisor_starts: Vec<BasePose>,
}

impl Scene {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    /// Path the scene was loaded from.
    pub fn path(&self) -> &str {
        &self.path
    }

    fn mesh(&self, key: &str) -> &TriMesh {
        self.meshes.get(key).expect("mesh paths resolved at load")
    }

    fn material_type(&self, kind: &str) -> Result<&MaterialTypeFile> {
        self.file
            .material_types
            .iter()
            .find(|t| t.name == kind)
            .ok_or_else(|| Error::InvalidParameter(format!("material type `{kind}` is not registered")))
    }

    /// Permanent geometry, each mesh placed at its pose.
    pub fn as_built_meshes(&self) -> Vec<TriMesh> {
        self.file
            .as_built
            .iter()
            .map(|e| self.mesh(&e.mesh).transformed(&e.transform.pose()))
            .collect()
    }

    /// Material stock, each mesh placed at its storage pose.
    pub fn material_meshes(&self) -> Vec<TriMesh> {
        self.file
            .materials
            .iter()
            .map(|m| {
                let base = self
                    .material_type(&m.kind)
                    .expect("material types validated at load");
                let pose = Pose3::new(Point3::new(m.position[0], m.position[1], m.position[2]), m.rotation);
                self.mesh(&base.mesh).transformed(&pose)
            })
            .collect()
    }

    pub fn floor_mesh(&self) -> &TriMesh {
        self.mesh(&self.file.floor.mesh)
    }

    pub fn floor_height(&self) -> f64 {
        self.file.floor.height
    }

    /// As-built entries plus materials still in stock; installation moves
    /// objects between the two without changing this total.
    pub fn object_count(&self) -> usize {
        self.file.as_built.len() + self.file.materials.len()
    }

    pub fn describe(&self) -> String {
        format!(
            "scene `{}`: {} as-built, {} materials ({} types), {} targets ({} installed), {} supervisors, {} trajectories",
            self.file.name,
            self.file.as_built.len(),
            self.file.materials.len(),
            self.file.material_types.len(),
            self.file.targets.len(),
            self.file.targets.iter().filter(|t| t.installed).count(),
            self.supervisors.len(),
            self.file.trajectories.len(),
        )
    }

    /// Writes the scene back out as JSON. Mesh and robot paths are kept
    /// verbatim, so save next to the original file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.file)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Loads and validates a scene file.
///
/// Beyond JSON shape, this checks that target orders are unique and
/// contiguous from 1; material names are unique; every material's type is
/// registered; every pending target's type has stock; normals and picking
/// directions are unit length; trajectories reference existing targets,
/// carry an attachment exactly when placing, name a real material and
/// chain link, and match the construction robot's joint count; and every
/// referenced mesh and robot file loads.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| scene_error(path, e.to_string()))?;
    let file: SceneFile =
        serde_json::from_str(&text).map_err(|e| scene_error(path, e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));

    validate_scene_file(&file, path)?;

    let mut meshes = HashMap::new();
    let mesh_refs = std::iter::once(file.floor.mesh.as_str())
        .chain(file.as_built.iter().map(|e| e.mesh.as_str()))
        .chain(file.material_types.iter().map(|t| t.mesh.as_str()));
    for key in mesh_refs {
        if !meshes.contains_key(key) {
            meshes.insert(key.to_string(), load_mesh(&dir.join(key))?);
        }
    }

    let construction = chain_from_file(&dir.join(&file.construction_robot.chain))?;
    let [bx, by, byaw] = file.construction_robot.base;
    let construction_base = BasePose::new(bx, by, byaw);

    let mut supervisors = Vec::with_capacity(file.supervisors.len());
    let mut supervisor_starts = Vec::with_capacity(file.supervisors.len());
    for s in &file.supervisors {
        supervisors.push(supervisor_from_file(&dir.join(&s.model))?);
        supervisor_starts.push(BasePose::new(s.start[0], s.start[1], s.start[2]));
    }

    validate_trajectories(&file, &construction, path)?;

    Ok(Scene {
        path: path.display().to_string(),
        file,
        meshes,
        construction,
        construction_base,
        supervisors,
        supervisor_starts,
    })
}

fn scene_error(path: &Path, message: String) -> Error {
    Error::Scene {
        path: path.display().to_string(),
        message,
    }
}

fn unit_length(v: &[f64; 3]) -> bool {
    (Vector3::new(v[0], v[1], v[2]).norm() - 1.0).abs() <= 1e-6
}

fn validate_scene_file(file: &SceneFile, path: &Path) -> Result<()> {
    let err = |message: String| scene_error(path, message);

    if file.supervisors.is_empty() {
        return Err(err("at least one supervisor robot is required".into()));
    }

    let mut orders: Vec<usize> = file.targets.iter().map(|t| t.order).collect();
    orders.sort_unstable();
    for (i, &order) in orders.iter().enumerate() {
        if order != i + 1 {
            return Err(err(format!(
                "target orders must be unique and contiguous from 1, got {orders:?}"
            )));
        }
    }

    let mut type_names = HashSet::new();
    for t in &file.material_types {
        if !type_names.insert(t.name.as_str()) {
            return Err(err(format!("material type `{}` is registered twice", t.name)));
        }
    }

    let mut material_names = HashSet::new();
    for m in &file.materials {
        if !material_names.insert(m.name.as_str()) {
            return Err(err(format!("material name `{}` is used twice", m.name)));
        }
        if !type_names.contains(m.kind.as_str()) {
            return Err(err(format!(
                "material `{}` has unregistered type `{}`",
                m.name, m.kind
            )));
        }
        if !unit_length(&m.picking_direction) {
            return Err(err(format!(
                "material `{}` picking direction is not unit length",
                m.name
            )));
        }
    }

    let stocked: HashSet<&str> = file.materials.iter().map(|m| m.kind.as_str()).collect();
    for t in &file.targets {
        if !type_names.contains(t.kind.as_str()) {
            return Err(err(format!("target `{}` has unregistered type `{}`", t.name, t.kind)));
        }
        if !t.installed && !stocked.contains(t.kind.as_str()) {
            return Err(err(format!(
                "target `{}` needs a material of type `{}` but none is in stock",
                t.name, t.kind
            )));
        }
        if !unit_length(&t.normal) {
            return Err(err(format!("target `{}` normal is not unit length", t.name)));
        }
    }

    Ok(())
}

fn validate_trajectories(file: &SceneFile, chain: &KinematicChain, path: &Path) -> Result<()> {
    let err = |message: String| scene_error(path, message);
    let joints = chain.movable_joint_count();

    for t in &file.trajectories {
        let Some(target) = file.targets.iter().find(|tg| tg.order == t.target) else {
            return Err(err(format!(
                "trajectory `{}` references missing target order {}",
                t.name, t.target
            )));
        };
        match (t.operation, &t.attached) {
            (Operation::Place, None) => {
                return Err(err(format!(
                    "place trajectory `{}` must name the carried material",
                    t.name
                )));
            }
            (Operation::Pick, Some(_)) => {
                return Err(err(format!(
                    "pick trajectory `{}` must not carry an attachment",
                    t.name
                )));
            }
            (Operation::Place, Some(a)) => {
                // A dangling material reference is fine once the target is
                // built; the trajectory will not be planned again.
                if !target.installed && !file.materials.iter().any(|m| m.name == a.material) {
                    return Err(err(format!(
                        "trajectory `{}` carries unknown material `{}`",
                        t.name, a.material
                    )));
                }
                if chain.link_index(&a.link).is_none() {
                    return Err(err(format!(
                        "trajectory `{}` attaches to unknown link `{}`",
                        t.name, a.link
                    )));
                }
            }
            (Operation::Pick, None) => {}
        }
        if t.keyframes.len() < 2 {
            return Err(err(format!(
                "trajectory `{}` needs at least 2 keyframes, got {}",
                t.name,
                t.keyframes.len()
            )));
        }
        if t.steps_per_segment == 0 {
            return Err(err(format!(
                "trajectory `{}` needs at least 1 step per segment",
                t.name
            )));
        }
        for (i, k) in t.keyframes.iter().enumerate() {
            if k.len() != joints {
                return Err(err(format!(
                    "trajectory `{}` keyframe {i} has {} joint values, the robot has {joints}",
                    t.name,
                    k.len()
                )));
            }
        }
    }
    Ok(())
}

/// Voxelized scene: the 3D occupancy map, its 2D projection over the
/// supervisors' height band, and the walkable floor outline.
pub struct EnvironmentModel {
    pub grid: VoxelGrid3,
    /// Obstacle cells between ground clearance and the tallest supervisor.
    /// Not yet inflated by any footprint.
    pub nav_grid: OccupancyGrid2,
    pub floor: Vec<FloorBoundary>,
}

/// Surface-samples the floor, as-built, and material meshes into a voxel
/// map, projects the supervisors' height band to 2D, and extracts the
/// walkable floor polygons. Deterministic in `config.seed`.
pub fn build_environment(scene: &Scene, config: &PipelineConfig) -> Result<EnvironmentModel> {
    config.validate()?;
    let resolution = config.voxel_resolution;
    let density = config.resolved_surface_sample_density();
    let base = stage_seed(config.seed, SEED_ENVIRONMENT);

    let mut instances = vec![scene.floor_mesh().clone()];
    instances.extend(scene.as_built_meshes());
    instances.extend(scene.material_meshes());

    let mut points = Vec::new();
    for (i, mesh) in instances.iter().enumerate() {
        points.extend(sample_mesh_surface(mesh, density, base.wrapping_add(i as u64))?);
    }

    let bounds = Aabb::from_points(&points)
        .ok_or(Error::EmptyMesh)?
        .expanded(2.0 * resolution);
    let (grid, _) = build_from_points(&points, resolution, &bounds)?;

    let clearance = config.resolved_ground_clearance();
    let band_top = scene
        .supervisors
        .iter()
        .map(|s| s.collision_height)
        .fold(0.0, f64::max);
    let floor_z = scene.floor_height();
    let nav_grid = project_to_2d(&grid, floor_z + clearance, floor_z + band_top)?;

    let floor = extract_floor_boundary(scene.floor_mesh(), floor_z, scene.file.floor.tolerance)?;

    Ok(EnvironmentModel { grid, nav_grid, floor })
}

/// Inputs of one planning run, expanded from the scene.
struct Prepared {
    target_name: String,
    envelope: MotionEnvelope,
    environment: EnvironmentModel,
    /// Swept corner cloud of the carried object, place only.
    object_corners: Option<MotionEnvelope>,
    /// Tracked surface samples on the carried object, place only.
    target_points: Option<TargetPointSet>,
    /// Environment plus construction robot occupancy per state, place only.
    state_grids: Option<Vec<VoxelGrid3>>,
}

fn prepare(
    scene: &Scene,
    config: &PipelineConfig,
    operation: Operation,
    target_order: usize,
) -> Result<Prepared> {
    config.validate()?;
    let Some(traj_file) = scene
        .file
        .trajectories
        .iter()
        .find(|t| t.operation == operation && t.target == target_order)
    else {
        return Err(Error::InvalidParameter(format!(
            "scene `{}` has no {operation} trajectory for target {target_order}",
            scene.name()
        )));
    };
    let target = scene
        .file
        .targets
        .iter()
        .find(|t| t.order == target_order)
        .expect("trajectory targets validated at load");
    if target.installed {
        return Err(Error::InvalidParameter(format!(
            "target `{}` (order {target_order}) is already installed",
            target.name
        )));
    }

    let keyframes: Vec<JointConfig> = traj_file
        .keyframes
        .iter()
        .map(|k| JointConfig::new(scene.construction_base, k.clone()))
        .collect();
    let trajectory = interpolate_trajectory(&keyframes, traj_file.steps_per_segment)?;

    let attached = match (operation, &traj_file.attached) {
        (Operation::Place, Some(a)) => {
            let material = scene
                .file
                .materials
                .iter()
                .find(|m| m.name == a.material)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "carried material `{}` is no longer in stock",
                        a.material
                    ))
                })?;
            let mesh = self_mesh(scene, &material.kind)?;
            Some(AttachedObject {
                mesh,
                link: a.link.clone(),
                grasp: a.grasp.pose(),
            })
        }
        _ => None,
    };

    let envelope = motion_envelope(&scene.construction, &trajectory, attached.as_ref())?;
    let environment = build_environment(scene, config)?;

    let (object_corners, target_points, state_grids) = match &attached {
        Some(att) => {
            let corners = object_envelope(&scene.construction, &trajectory, att)?;
            let local = sample_target_points(
                att,
                config.target_point_count,
                stage_seed(config.seed, SEED_TARGET_POINTS),
            )?;
            let points = target_points_at_states(&local, &scene.construction, &trajectory, att)?;
            let grids = trajectory
                .states()
                .iter()
                .map(|s| state_occupancy(&environment.grid, &scene.construction, s, Some(att)))
                .collect::<Result<Vec<_>>>()?;
            (Some(corners), Some(points), Some(grids))
        }
        None => (None, None, None),
    };

    Ok(Prepared {
        target_name: target.name.clone(),
        envelope,
        environment,
        object_corners,
        target_points,
        state_grids,
    })
}

fn self_mesh(scene: &Scene, kind: &str) -> Result<TriMesh> {
    let entry = scene.material_type(kind)?;
    Ok(scene.mesh(&entry.mesh).clone())
}

fn stage_nonempty(kept: usize, stage: &str, fed: usize) -> Result<()> {
    if kept == 0 {
        return Err(Error::EmptyStage {
            stage: stage.into(),
            detail: format!("0 of {fed} candidates kept"),
        });
    }
    Ok(())
}

/// How many candidates survived each stage, in stage order.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelCounts {
    pub sampled: usize,
    pub oriented: usize,
    pub covering: usize,
    /// Equals `covering` when nothing is carried (the stage is skipped).
    pub target_covering: usize,
    pub collision_free: usize,
}

impl FunnelCounts {
    /// True when every stage kept at most what the previous stage fed it.
    pub fn is_monotone(&self) -> bool {
        self.sampled >= self.oriented
            && self.oriented >= self.covering
            && self.covering >= self.target_covering
            && self.target_covering >= self.collision_free
    }
}

/// One deployed camera: where the robot parks, how the mast is set, what
/// the trip costs, and how far the camera sits from its subjects.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewReport {
    pub robot: usize,
    pub candidate_id: usize,
    /// Base placement as x, y, yaw.
    pub base: [f64; 3],
    pub joints: Vec<f64>,
    pub camera_position: [f64; 3],
    pub camera_rpy: [f64; 3],
    /// Distance from the camera to the motion envelope centroid.
    #[serde(serialize_with = "round2")]
    pub envelope_distance: f64,
    /// Mean distance to the carried object across states. Place only.
    #[serde(
        serialize_with = "round2_opt",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub object_distance: Option<f64>,
    #[serde(serialize_with = "round2")]
    pub path_cost: f64,
    pub goal_cell: [usize; 2],
}

/// The chosen deployment and its quality numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeReport {
    /// `"single"` or `"combination"`.
    pub kind: String,
    /// True when nothing met the coverage threshold and this is the best
    /// effort rather than a compliant result.
    pub below_threshold: bool,
    pub candidate_ids: Vec<usize>,
    #[serde(serialize_with = "round2")]
    pub coverage: f64,
    /// Mean camera distance to the supervised subject, the search
    /// objective: envelope centroid when picking, per-state object
    /// centroids when placing.
    #[serde(serialize_with = "round2")]
    pub mean_distance: f64,
    /// Mean ray-cast visibility of the carried object. Place only.
    #[serde(
        serialize_with = "round2_opt",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub avg_visibility: Option<f64>,
    /// One entry per deployed supervisor, ordered by robot index.
    pub views: Vec<ViewReport>,
}

/// Which supervisor drives to which chosen viewpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentReport {
    /// Chosen candidate id per robot; `null` for robots that stay parked.
    pub robot_to_candidate: Vec<Option<usize>>,
    #[serde(serialize_with = "round2")]
    pub total_cost: f64,
}

/// Everything one planning run produced.
///
/// Serialization rounds metric values to two decimals; the in-memory
/// numbers keep full precision.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: String,
    pub scene: String,
    pub operation: Operation,
    pub target: usize,
    pub target_name: String,
    pub seed: u64,
    /// The effective configuration, with optional knobs resolved.
    pub config: PipelineConfig,
    pub funnel: FunnelCounts,
    pub outcome: OutcomeReport,
    pub assignment: AssignmentReport,
    /// Wall-clock planning time. Excluded from the canonical bytes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing_ms: Option<u64>,
}

impl RunReport {
    /// Report JSON without wall-clock timing: byte-identical for identical
    /// scene, config, and seed.
    pub fn canonical_json(&self) -> String {
        let mut stripped = self.clone();
        stripped.timing_ms = None;
        let mut text = serde_json::to_string_pretty(&stripped).expect("report serializes");
        text.push('\n');
        text
    }
}

fn round2<S: Serializer>(value: &f64, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serializer.serialize_f64((value * 100.0).round() / 100.0)
}

fn round2_opt<S: Serializer>(
    value: &Option<f64>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(v) => serializer.serialize_some(&((v * 100.0).round() / 100.0)),
        None => serializer.serialize_none(),
    }
}

/// Plans supervision for one named operation of the construction robot.
///
/// Stage order: expand the trajectory, model the environment, sample
/// candidate viewpoints over the walkable floor, thin them by orientation,
/// envelope coverage, object coverage (place only), and collision, search
/// viewpoint combinations, merge them with strong single views, pick the
/// winner (highest object visibility when placing, highest coverage when
/// picking), then route and assign the supervisors. A stage that leaves
/// zero candidates aborts with [`Error::EmptyStage`] naming the stage and
/// its funnel count.
pub fn run_selection(
    scene: &Scene,
    config: &PipelineConfig,
    operation: Operation,
    target_order: usize,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let prep = prepare(scene, config, operation, target_order)?;
    let model = &scene.supervisors[0];
    let n_robots = scene.supervisors.len();

    let bases = sample_base_positions(&prep.environment.floor, config.base_spacing)?;
    let candidates = sample_candidates(
        model,
        config.sample_count,
        &bases,
        stage_seed(config.seed, SEED_CANDIDATES),
    )?;
    let sampled = candidates.len();

    let candidates = filter_orientation(candidates, &prep.envelope, config.alpha_threshold);
    let oriented = candidates.len();
    stage_nonempty(oriented, "orientation prefilter", sampled)?;

    let candidates = filter_coverage(candidates, &prep.envelope, config.c_single);
    let covering = candidates.len();
    stage_nonempty(covering, "coverage filter", oriented)?;

    let candidates = match &prep.object_corners {
        Some(corners) => filter_target_coverage(candidates, corners, config.c_single_target),
        None => candidates,
    };
    let target_covering = candidates.len();
    stage_nonempty(target_covering, "target coverage filter", covering)?;

    let candidates = filter_collision(
        candidates,
        &prep.environment.grid,
        &prep.envelope,
        prep.state_grids.as_deref(),
        model,
        config.resolved_ground_clearance(),
    );
    let collision_free = candidates.len();
    stage_nonempty(collision_free, "collision filter", target_covering)?;

    let ctx = EvalContext::new(&candidates, &prep.envelope, prep.target_points.as_ref());
    let singles: Vec<usize> = (0..candidates.len())
        .filter(|&i| ctx.single_coverage(i) >= config.coverage_threshold)
        .collect();

    let mut search = config.nsga;
    search.seed = stage_seed(config.seed, SEED_SEARCH);
    let front = nsga2_run(&ctx, n_robots, &search)?;

    let visibility = match (&prep.state_grids, &prep.target_points) {
        (Some(grids), Some(points)) => Some(VisibilityContext {
            state_grids: grids,
            target: points,
            epsilon: config.resolved_epsilon(),
        }),
        _ => None,
    };
    let outcome = select_final(
        &ctx,
        &front,
        &singles,
        config.coverage_threshold,
        visibility.as_ref(),
    )?;

    // Route every supervisor to every chosen viewpoint on the inflated
    // navigation grid, then assign.
    let max_footprint = scene
        .supervisors
        .iter()
        .map(|s| s.footprint_radius)
        .fold(0.0, f64::max);
    let nav = prep.environment.nav_grid.inflated(max_footprint);

    let goals: Vec<[usize; 2]> = outcome
        .positions
        .iter()
        .map(|&p| viewpoint_goal_cell(&candidates[p], &nav))
        .collect::<Result<_>>()?;
    let starts: Vec<[usize; 2]> = scene
        .supervisor_starts
        .iter()
        .zip(&scene.supervisors)
        .map(|(b, s)| {
            let cell = nav.index_of(&Point2::new(b.x, b.y)).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "supervisor `{}` start ({:.3}, {:.3}) lies outside the navigation grid",
                    s.name, b.x, b.y
                ))
            })?;
            if nav.is_occupied(cell) {
                return Err(Error::StartBlocked { x: cell[0], y: cell[1] });
            }
            Ok(cell)
        })
        .collect::<Result<_>>()?;

    let mut costs = vec![vec![0.0f64; goals.len()]; starts.len()];
    for (r, &start) in starts.iter().enumerate() {
        for (v, &goal) in goals.iter().enumerate() {
            costs[r][v] = match shortest_path(&nav, start, goal)? {
                Some(path) => path_length(&path, &nav),
                None => f64::INFINITY,
            };
        }
    }

    let mut robot_to_candidate: Vec<Option<usize>> = vec![None; n_robots];
    let mut deployed: Vec<(usize, usize)> = Vec::new();
    let total_cost;
    if goals.len() == 1 {
        let column: Vec<f64> = costs.iter().map(|row| row[0]).collect();
        let robot = assign_single(&column)?;
        total_cost = column[robot];
        robot_to_candidate[robot] = Some(outcome.candidate_ids[0]);
        deployed.push((robot, 0));
    } else {
        let assignment = assign(&costs)?;
        total_cost = assignment.total_cost;
        for (robot, &viewpoint) in assignment.robot_to_viewpoint.iter().enumerate() {
            robot_to_candidate[robot] = Some(outcome.candidate_ids[viewpoint]);
            deployed.push((robot, viewpoint));
        }
    }

    let envelope_centroid = prep.envelope.centroid();
    let state_centroids = prep.target_points.as_ref().map(|t| t.state_centroids());
    let views: Vec<ViewReport> = deployed
        .iter()
        .map(|&(robot, viewpoint)| {
            let candidate = &candidates[outcome.positions[viewpoint]];
            let cam = candidate.view.pose;
            ViewReport {
                robot,
                candidate_id: candidate.id,
                base: [
                    candidate.config.base.x,
                    candidate.config.base.y,
                    candidate.config.base.yaw,
                ],
                joints: candidate.config.joints.clone(),
                camera_position: [cam.position.x, cam.position.y, cam.position.z],
                camera_rpy: cam.rpy,
                envelope_distance: (envelope_centroid - cam.position).norm(),
                object_distance: state_centroids
                    .as_ref()
                    .map(|c| metrics::per_view_place_distance(&cam.position, c)),
                path_cost: costs[robot][viewpoint],
                goal_cell: goals[viewpoint],
            }
        })
        .collect();

    Ok(RunReport {
        schema: REPORT_SCHEMA.to_string(),
        scene: scene.name().to_string(),
        operation,
        target: target_order,
        target_name: prep.target_name,
        seed: config.seed,
        config: config.resolved(),
        funnel: FunnelCounts {
            sampled,
            oriented,
            covering,
            target_covering,
            collision_free,
        },
        outcome: OutcomeReport {
            kind: if outcome.is_single() { "single" } else { "combination" }.to_string(),
            below_threshold: outcome.below_threshold,
            candidate_ids: outcome.candidate_ids,
            coverage: outcome.coverage,
            mean_distance: outcome.distance,
            avg_visibility: outcome.avg_visibility,
            views,
        },
        assignment: AssignmentReport {
            robot_to_candidate,
            total_cost,
        },
        timing_ms: Some(started.elapsed().as_millis() as u64),
    })
}

/// Consumes the material installed at `target_order`: the material leaves
/// the stock, an as-built entry appears at the target pose, and the target
/// is marked installed. The total object count is unchanged. Returns the
/// consumed material's name.
///
/// The material named by the target's place trajectory is preferred; any
/// stock of the right type serves otherwise. The installed mesh is posed
/// with its local +y axis along the target normal.
pub fn update_after_install(scene: &mut Scene, target_order: usize) -> Result<String> {
    let Some(target) = scene.file.targets.iter().find(|t| t.order == target_order) else {
        return Err(Error::InvalidParameter(format!(
            "scene `{}` has no target with order {target_order}",
            scene.name()
        )));
    };
    if target.installed {
        return Err(Error::InvalidParameter(format!(
            "target `{}` (order {target_order}) is already installed",
            target.name
        )));
    }
    let target_name = target.name.clone();
    let kind = target.kind.clone();
    let transform = TransformFile {
        xyz: target.position,
        rpy: normal_to_rpy(&target.normal),
    };

    let preferred = scene
        .file
        .trajectories
        .iter()
        .find(|t| t.operation == Operation::Place && t.target == target_order)
        .and_then(|t| t.attached.as_ref())
        .map(|a| a.material.clone());
    let material_index = scene
        .file
        .materials
        .iter()
        .position(|m| preferred.as_deref() == Some(m.name.as_str()) && m.kind == kind)
        .or_else(|| scene.file.materials.iter().position(|m| m.kind == kind))
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no material of type `{kind}` left for target `{target_name}`"
            ))
        })?;

    let material = scene.file.materials.remove(material_index);
    let mesh = scene.material_type(&kind)?.mesh.clone();
    scene.file.as_built.push(AsBuiltFile {
        name: material.name.clone(),
        mesh,
        transform,
    });
    scene
        .file
        .targets
        .iter_mut()
        .find(|t| t.order == target_order)
        .expect("target existence checked above")
        .installed = true;
    Ok(material.name)
}

/// Roll, pitch, yaw of the rotation that maps local +y onto `normal`.
fn normal_to_rpy(normal: &[f64; 3]) -> [f64; 3] {
    let n = Vector3::new(normal[0], normal[1], normal[2]).normalize();
    let rotation = nalgebra::Rotation3::rotation_between(&Vector3::y(), &n).unwrap_or_else(|| {
        nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI)
    });
    let (roll, pitch, yaw) = rotation.euler_angles();
    [roll, pitch, yaw]
}

/// Writes a run's geometry next to its report for visual inspection:
/// `envelope.ply` (the motion envelope cloud), `frustums.ply` (wireframes
/// of the chosen views), `target_points.ply` (tracked object points over
/// all states, green when visible to the deployment, red when not; place
/// only), and `report.json` (the canonical report bytes).
pub fn export_geometry(scene: &Scene, report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let prep = prepare(scene, &report.config, report.operation, report.target)?;

    write_ply_points(&dir.join("envelope.ply"), &prep.envelope.points, None)?;

    let intrinsics = scene.supervisors[0].intrinsics;
    let views: Vec<CameraView> = report
        .outcome
        .views
        .iter()
        .map(|v| {
            let position = Point3::new(v.camera_position[0], v.camera_position[1], v.camera_position[2]);
            CameraView::new(Pose3::new(position, v.camera_rpy), intrinsics)
        })
        .collect();

    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    for view in &views {
        push_frustum(&mut vertices, &mut edges, view);
    }
    write_ply_edges(&dir.join("frustums.ply"), &vertices, &edges)?;

    if let (Some(points), Some(grids)) = (&prep.target_points, &prep.state_grids) {
        let epsilon = report.config.resolved_epsilon();
        let mut cloud = Vec::new();
        let mut colors = Vec::new();
        for (state, state_points) in points.world_points.iter().enumerate() {
            for p in state_points {
                let visible = views
                    .iter()
                    .any(|v| point_visibility(v, &grids[state], p, epsilon));
                cloud.push(*p);
                colors.push(if visible { [40, 200, 70] } else { [220, 50, 50] });
            }
        }
        write_ply_points(&dir.join("target_points.ply"), &cloud, Some(colors.as_slice()))?;
    }

    std::fs::write(dir.join("report.json"), report.canonical_json())?;
    Ok(())
}

/// Appends a five-vertex frustum wireframe: apex plus the far-plane
/// rectangle, eight edges.
fn push_frustum(vertices: &mut Vec<Point3>, edges: &mut Vec<[usize; 2]>, view: &CameraView) {
    let range = view.intrinsics.max_range;
    let half_w = range * (view.intrinsics.fov_h / 2.0).tan();
    let half_h = range * (view.intrinsics.fov_v / 2.0).tan();
    let base = vertices.len();
    vertices.push(view.pose.position);
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        vertices.push(
            view.pose
                .transform_point(&Point3::new(sx * half_w, sy * half_h, range)),
        );
    }
    for corner in 1..=4 {
        edges.push([base, base + corner]);
    }
    for corner in 1..=4 {
        let next = corner % 4 + 1;
        edges.push([base + corner, base + next]);
    }
}
