use nalgebra::{Matrix3, Rotation3, SymmetricEigen};

use super::{Aabb, Point3, Vector3};

/// Oriented bounding box: a rotated frame at `center` with half-extent
/// `half_extents[i]` along the i-th column of `axes`.
#[derive(Clone, Copy, Debug)]
pub struct OrientedBox {
    pub center: Point3,
    pub axes: Rotation3<f64>,
    pub half_extents: Vector3,
}

impl OrientedBox {
    /// The 8 corner points, in the fixed sign order
    /// `(-,-,-) (+,-,-) (-,+,-) (+,+,-) (-,-,+) (+,-,+) (-,+,+) (+,+,+)`.
    pub fn corners(&self) -> [Point3; 8] {
        let mut out = [Point3::origin(); 8];
        for (k, c) in out.iter_mut().enumerate() {
            let s = Vector3::new(
                if k & 1 == 0 { -1.0 } else { 1.0 },
                if k & 2 == 0 { -1.0 } else { 1.0 },
                if k & 4 == 0 { -1.0 } else { 1.0 },
            );
            *c = self.center + self.axes * s.component_mul(&self.half_extents);
        }
        out
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.corners()).unwrap()
    }

    /// Point coordinates in the box frame.
    fn to_local(&self, p: &Point3) -> Vector3 {
        self.axes.inverse() * (p - self.center)
    }

    pub fn contains_point(&self, p: &Point3, tolerance: f64) -> bool {
        let q = self.to_local(p);
        (0..3).all(|i| q[i].abs() <= self.half_extents[i] + tolerance)
    }

    /// Unsigned distance from `p` to the box boundary surface (zero on the
    /// surface, positive both inside and outside).
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        let q = self.to_local(p);
        let d = q.abs() - self.half_extents;
        if d.iter().any(|&di| di > 0.0) {
            d.map(|di| di.max(0.0)).norm()
        } else {
            -d.max()
        }
    }
}

/// Principal-component oriented bounding box of a point set.
///
/// Axes are the eigenvectors of the point covariance, ordered by decreasing
/// eigenvalue; extents come from projecting the points onto those axes. The
/// result contains every input point (up to rounding).
pub fn compute_obb(points: &[Point3]) -> OrientedBox {
    assert!(!points.is_empty(), "oriented box of an empty point set");

    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    if basis.determinant() < 0.0 {
        basis.column_mut(2).neg_mut();
    }
    let axes = Rotation3::from_matrix_unchecked(basis);

    let inv = axes.inverse();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        let q = inv * (p.coords - mean);
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }

    OrientedBox {
        center: Point3::from(mean + axes * ((lo + hi) * 0.5)),
        axes,
        half_extents: (hi - lo) * 0.5,
    }
}
