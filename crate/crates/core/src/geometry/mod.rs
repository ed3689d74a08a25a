//! Core geometric types and operations: rigid poses, triangle meshes,
//! axis-aligned and oriented boxes, 2D polygons, surface sampling, and
//! floor-boundary extraction.
//!
//! All lengths are meters, all angles radians, in a right-handed frame with
//! z up.

mod floor;
mod mesh;
mod obb;
mod polygon;
mod pose;
mod sample;

pub use floor::{extract_floor_boundary, FloorBoundary};
pub use mesh::TriMesh;
pub use obb::{compute_obb, OrientedBox};
pub use polygon::Polygon2;
pub use pose::{rotation_from_euler, Pose3};
pub use sample::sample_mesh_surface;
pub(crate) use sample::sample_surface_points;

pub type Point2 = nalgebra::Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Axis-aligned bounding box, closed on all faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    /// Smallest box containing every point; `None` for an empty slice.
    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Self::new(first, first);
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extents(&self) -> Vector3 {
        self.max - self.min
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    /// Box grown by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn contains_point(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// True when the two boxes share at least one point (touching counts).
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && self.max[i] >= other.min[i])
    }
}
