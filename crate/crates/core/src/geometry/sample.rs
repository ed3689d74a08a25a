use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::{Point3, TriMesh};

/// Uniform surface samples at the given density (points per m²).
///
/// Each triangle contributes `floor(area * density)` points plus one more
/// with probability equal to the fractional remainder, so the expected count
/// is exactly `total_area * density`. Deterministic for a given seed.
pub fn sample_mesh_surface(mesh: &TriMesh, density: f64, seed: u64) -> Result<Vec<Point3>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sample density must be positive and finite, got {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..mesh.triangles().len() {
        let expected = mesh.triangle_area(i) * density;
        let mut n = expected.floor() as usize;
        if rng.gen::<f64>() < expected.fract() {
            n += 1;
        }
        let [a, b, c] = mesh.triangle_vertices(i);
        for _ in 0..n {
            out.push(sample_in_triangle(&a, &b, &c, &mut rng));
        }
    }
    Ok(out)
}

/// Exactly `count` surface samples, triangles chosen with probability
/// proportional to area.
pub(crate) fn sample_surface_points(mesh: &TriMesh, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Point3>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.gen::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(idx);
        out.push(sample_in_triangle(&a, &b, &c, rng));
    }
    Ok(out)
}

fn sample_in_triangle(a: &Point3, b: &Point3, c: &Point3, rng: &mut impl Rng) -> Point3 {
    let r1: f64 = rng.gen();
    let r2: f64 = rng.gen();
    let s = r1.sqrt();
    Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2))
}
