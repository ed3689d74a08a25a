use crate::{Error, Result};

use super::Point2;

const MIN_EDGE_LENGTH: f64 = 1e-9;
const ON_EDGE_TOLERANCE: f64 = 1e-9;

/// Simple 2D polygon given as an ordered vertex loop (not repeated at the
/// end). Consecutive vertices are guaranteed distinct.
#[derive(Clone, Debug)]
pub struct Polygon2 {
    vertices: Vec<Point2>,
}

impl Polygon2 {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        for i in 0..vertices.len() {
            let j = (i + 1) % vertices.len();
            if (vertices[j] - vertices[i]).norm() <= MIN_EDGE_LENGTH {
                return Err(Error::InvalidPolygon(format!(
                    "vertices {i} and {j} coincide"
                )));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// Signed shoelace area: positive for counter-clockwise winding.
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            acc += v[i].x * v[j].y - v[j].x * v[i].y;
        }
        0.5 * acc
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Even-odd point-in-polygon test; points on the boundary (within 1e-9)
    /// count as inside.
    pub fn contains_point(&self, p: &Point2) -> bool {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            if point_on_segment(p, &v[i], &v[(i + 1) % n]) {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            if (v[i].y > p.y) != (v[j].y > p.y) {
                let x_cross = v[i].x + (p.y - v[i].y) / (v[j].y - v[i].y) * (v[j].x - v[i].x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bounds(&self) -> (Point2, Point2) {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for v in &self.vertices[1..] {
            min = min.inf(v);
            max = max.sup(v);
        }
        (min, max)
    }
}

fn point_on_segment(p: &Point2, a: &Point2, b: &Point2) -> bool {
    let ab = b - a;
    let ap = p - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { (ap.dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let closest = a + ab * t;
    (p - closest).norm() <= ON_EDGE_TOLERANCE
}
