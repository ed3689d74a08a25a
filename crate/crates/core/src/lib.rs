//! Viewpoint selection for mobile camera robots supervising construction work.
//!
//! Given a scene model, the kinematics of a construction robot, and the
//! joint-space trajectory it is about to execute, this crate computes where a
//! team of camera-carrying supervisor robots should stand so that the motion
//! is well covered and the manipulated part stays visible, then assigns the
//! chosen viewpoints to the supervisors by navigation cost.
//!
//! The pipeline lives in [`pipeline::run_selection`]; the building blocks
//! (occupancy grids, ray casting, kinematics, the multi-objective optimizer,
//! path planning) are usable on their own.

pub mod allocation;
pub mod camera;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod robot;
pub mod sampler;
pub mod voxel;

use thiserror::Error;

/// Errors produced by scene loading, planning, and export.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty mesh")]
    EmptyMesh,

    #[error("mesh file {path}: {message}")]
    MeshFile { path: String, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("no floor surface found at height {height} m")]
    NoFloorSurface { height: f64 },

    #[error("grid too large: {cells} cells exceeds limit {limit}")]
    GridTooLarge { cells: u64, limit: u64 },

    #[error("joint `{joint}` value {value} outside limits [{lower}, {upper}]")]
    JointLimit {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("no geometry: {0}")]
    NoGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operational area too small: no collision-free base positions")]
    AreaTooSmall,

    #[error("insufficient candidates: {available} available, need at least {needed}")]
    InsufficientCandidates { available: usize, needed: usize },

    #[error("selection stage `{stage}` left no candidates ({detail})")]
    EmptyStage { stage: String, detail: String },

    #[error("goal blocked: navigation cell ({x}, {y}) is occupied")]
    GoalBlocked { x: usize, y: usize },

    #[error("start blocked: navigation cell ({x}, {y}) is occupied")]
    StartBlocked { x: usize, y: usize },

    #[error("cell ({x}, {y}) outside navigation grid")]
    CellOutOfBounds { x: usize, y: usize },

    #[error("viewpoint unreachable: no finite-cost assignment exists")]
    ViewpointUnreachable,

    #[error("scene: {path}: {message}")]
    Scene { path: String, message: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
