use crate::{Error, Result};

use super::{Aabb, Point3, Pose3, Vector3};

const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Indexed triangle mesh. Triangles with area below 1e-12 m² are dropped at
/// construction, so every stored triangle has usable geometry.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (i, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {i} references vertex {v}, mesh has {}",
                        vertices.len()
                    )));
                }
            }
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) >= MIN_TRIANGLE_AREA)
            .collect();
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_vertices(&self, i: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(i);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Rigidly transformed copy; topology is unchanged.
    pub fn transformed(&self, pose: &Pose3) -> TriMesh {
        let rot = pose.rotation();
        let t = pose.position.coords;
        TriMesh {
            vertices: self.vertices.iter().map(|v| rot * v + t).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Axis-aligned box centered at the origin with the given half extents,
    /// triangulated with outward-facing windings.
    pub fn cuboid(half_extents: Vector3) -> TriMesh {
        let [hx, hy, hz] = [half_extents.x, half_extents.y, half_extents.z];
        let vertices: Vec<Point3> = (0..8)
            .map(|k| {
                Point3::new(
                    if k & 1 == 0 { -hx } else { hx },
                    if k & 2 == 0 { -hy } else { hy },
                    if k & 4 == 0 { -hz } else { hz },
                )
            })
            .collect();
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriMesh { vertices, triangles }
    }
}

pub(crate) fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}
