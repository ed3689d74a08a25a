use std::collections::{HashMap, HashSet};

use crate::{Error, Result};

use super::{Point2, Polygon2, TriMesh};

/// One closed loop of the walkable floor outline. `is_hole` marks loops that
/// lie inside another loop (openings such as shafts or columns).
#[derive(Clone, Debug)]
pub struct FloorBoundary {
    pub polygon: Polygon2,
    pub is_hole: bool,
}

/// Extracts the outline of the floor surface at `height` from a mesh.
///
/// Triangles whose vertices all lie within `tolerance` of `height` form the
/// surface; edges used by exactly one such triangle form its boundary, which
/// is chained into closed loops with collinear runs merged. Loops nested
/// inside an odd number of other loops are holes.
pub fn extract_floor_boundary(mesh: &TriMesh, height: f64, tolerance: f64) -> Result<Vec<FloorBoundary>> {
    let mut flat: Vec<[usize; 3]> = Vec::new();
    for tri in mesh.triangles() {
        if tri.iter().all(|&v| (mesh.vertices()[v].z - height).abs() <= tolerance) {
            flat.push(*tri);
        }
    }
    if flat.is_empty() {
        return Err(Error::NoFloorSurface { height });
    }

    // Weld on exact 2D coordinates so boundary edges match up even when the
    // mesh duplicates vertices per face.
    let mut key_to_id: HashMap<[u64; 2], usize> = HashMap::new();
    let mut points: Vec<Point2> = Vec::new();
    let mut weld = |v: usize| -> usize {
        let p = mesh.vertices()[v];
        let key = [p.x.to_bits(), p.y.to_bits()];
        *key_to_id.entry(key).or_insert_with(|| {
            points.push(Point2::new(p.x, p.y));
            points.len() - 1
        })
    };

    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in &flat {
        let ids = [weld(tri[0]), weld(tri[1]), weld(tri[2])];
        for k in 0..3 {
            let (a, b) = (ids[k], ids[(k + 1) % 3]);
            if a == b {
                continue;
            }
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }

    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    for (&(a, b), &count) in &edge_count {
        if count == 1 {
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
    }
    for (v, neighbors) in &adjacency {
        if neighbors.len() != 2 {
            return Err(Error::InvalidMesh(format!(
                "floor boundary vertex ({:.3}, {:.3}) has {} boundary edges, expected 2",
                points[*v].x,
                points[*v].y,
                neighbors.len()
            )));
        }
    }

    let mut loops: Vec<Vec<usize>> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut starts: Vec<usize> = adjacency.keys().copied().collect();
    starts.sort_unstable();
    for start in starts {
        if !visited.insert(start) {
            continue;
        }
        let mut cycle = vec![start];
        let mut prev = start;
        let mut current = adjacency[&start][0].min(adjacency[&start][1]);
        while current != start {
            visited.insert(current);
            cycle.push(current);
            let next = adjacency[&current]
                .iter()
                .copied()
                .find(|&n| n != prev)
                .expect("boundary vertex with a single neighbor");
            prev = current;
            current = next;
        }
        loops.push(cycle);
    }

    let mut polygons = Vec::new();
    for cycle in loops {
        let verts: Vec<Point2> = merge_collinear(cycle.iter().map(|&v| points[v]).collect());
        polygons.push(Polygon2::new(verts)?);
    }

    let mut out = Vec::new();
    for (i, poly) in polygons.iter().enumerate() {
        let probe = poly.vertices()[0];
        let depth = polygons
            .iter()
            .enumerate()
            .filter(|&(j, other)| j != i && other.contains_point(&probe))
            .count();
        out.push(FloorBoundary {
            polygon: poly.clone(),
            is_hole: depth % 2 == 1,
        });
    }
    Ok(out)
}

fn merge_collinear(mut verts: Vec<Point2>) -> Vec<Point2> {
    loop {
        let n = verts.len();
        if n <= 3 {
            return verts;
        }
        let mut keep: Vec<Point2> = Vec::with_capacity(n);
        for i in 0..n {
            let prev = verts[(i + n - 1) % n];
            let here = verts[i];
            let next = verts[(i + 1) % n];
            let a = here - prev;
            let b = next - here;
            if (a.x * b.y - a.y * b.x).abs() > 1e-9 {
                keep.push(here);
            }
        }
        if keep.len() == n {
            return verts;
        }
        verts = keep;
    }
}
