use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion};

use super::{Point3, Vector3};

/// Rotation matrix for intrinsic x-y-z Euler angles:
/// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), roll)
}

/// Rigid transform stored as a position and roll-pitch-yaw angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose3 {
    pub position: Point3,
    /// Roll, pitch, yaw in radians; see [`rotation_from_euler`].
    pub rpy: [f64; 3],
}

impl Pose3 {
    pub fn new(position: Point3, rpy: [f64; 3]) -> Self {
        Self { position, rpy }
    }

    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(Point3::new(x, y, z), [roll, pitch, yaw])
    }

    pub fn identity() -> Self {
        Self::new(Point3::origin(), [0.0; 3])
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        rotation_from_euler(self.rpy[0], self.rpy[1], self.rpy[2])
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.position.coords),
            UnitQuaternion::from_rotation_matrix(&self.rotation()),
        )
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let (roll, pitch, yaw) = iso.rotation.euler_angles();
        Self::new(Point3::from(iso.translation.vector), [roll, pitch, yaw])
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation() * p + self.position.coords
    }

    pub fn transform_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation() * v
    }

    /// `self * child`: the transform that applies `child` first, then `self`.
    pub fn compose(&self, child: &Pose3) -> Pose3 {
        Pose3::from_isometry(&(self.isometry() * child.isometry()))
    }

    pub fn inverse(&self) -> Pose3 {
        Pose3::from_isometry(&self.isometry().inverse())
    }
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}
