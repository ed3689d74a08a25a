//! Occupancy grids and voxel ray traversal.
//!
//! [`VoxelGrid3`] is the dense 3D map built from surface-sampled scene
//! points; [`overlay_state`] stamps robot geometry into it one trajectory
//! state at a time; [`raycast_first_hit`] walks voxels along a segment for
//! line-of-sight queries; [`project_to_2d`] flattens a height band into the
//! 2D navigation grid.

use crate::geometry::{Aabb, OrientedBox, Point2, Point3, Vector3};
use crate::{Error, Result};

const MAX_CELLS: u64 = 1_000_000_000;

/// Index of one voxel within a [`VoxelGrid3`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridIndex {
    pub ix: usize,
    pub iy: usize,
    pub iz: usize,
}

impl GridIndex {
    pub fn new(ix: usize, iy: usize, iz: usize) -> Self {
        Self { ix, iy, iz }
    }
}

/// Dense 3D occupancy grid. `origin` is the minimum corner of voxel
/// (0, 0, 0); a voxel's world footprint is the half-open cube
/// `[origin + i*res, origin + (i+1)*res)`.
#[derive(Clone, Debug)]
pub struct VoxelGrid3 {
    origin: Point3,
    resolution: f64,
    dims: [usize; 3],
    occupancy: Vec<bool>,
}

impl VoxelGrid3 {
    pub fn new(origin: Point3, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "voxel resolution must be positive, got {resolution}"
            )));
        }
        let cells = dims.iter().map(|&d| d as u64).product::<u64>();
        if cells > MAX_CELLS {
            return Err(Error::GridTooLarge { cells, limit: MAX_CELLS });
        }
        if cells == 0 {
            return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            occupancy: vec![false; cells as usize],
        })
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Maximum world corner of the grid volume.
    pub fn world_max(&self) -> Point3 {
        self.origin + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution
    }

    fn linear(&self, i: GridIndex) -> usize {
        (i.iz * self.dims[1] + i.iy) * self.dims[0] + i.ix
    }

    pub fn in_bounds(&self, i: GridIndex) -> bool {
        i.ix < self.dims[0] && i.iy < self.dims[1] && i.iz < self.dims[2]
    }

    /// Voxel containing `p`, or `None` when `p` is outside the grid volume.
    pub fn index_of(&self, p: &Point3) -> Option<GridIndex> {
        let rel = (p - self.origin) / self.resolution;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = rel[a].floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(GridIndex::new(idx[0], idx[1], idx[2]))
    }

    pub fn center_of(&self, i: GridIndex) -> Point3 {
        self.origin
            + Vector3::new(i.ix as f64 + 0.5, i.iy as f64 + 0.5, i.iz as f64 + 0.5) * self.resolution
    }

    pub fn is_occupied(&self, i: GridIndex) -> bool {
        self.occupancy[self.linear(i)]
    }

    pub fn set_occupied(&mut self, i: GridIndex) {
        let l = self.linear(i);
        self.occupancy[l] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn occupied_indices(&self) -> impl Iterator<Item = GridIndex> + '_ {
        let [nx, ny, _] = self.dims;
        self.occupancy.iter().enumerate().filter(|(_, &o)| o).map(move |(l, _)| {
            let ix = l % nx;
            let iy = (l / nx) % ny;
            let iz = l / (nx * ny);
            GridIndex::new(ix, iy, iz)
        })
    }

    pub fn occupied_centers(&self) -> impl Iterator<Item = Point3> + '_ {
        self.occupied_indices().map(|i| self.center_of(i))
    }
}

/// Builds a grid over `bounds` and marks every voxel that receives at least
/// one point. Points outside `bounds` are skipped; the count of skipped
/// points is returned alongside the grid.
pub fn build_from_points(points: &[Point3], resolution: f64, bounds: &Aabb) -> Result<(VoxelGrid3, usize)> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "voxel resolution must be positive, got {resolution}"
        )));
    }
    let extent = bounds.extents();
    if extent.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("degenerate grid bounds".into()));
    }
    let mut dims = [0usize; 3];
    let mut cells: u64 = 1;
    for a in 0..3 {
        let n = (extent[a] / resolution).ceil().max(1.0);
        if n > MAX_CELLS as f64 {
            return Err(Error::GridTooLarge { cells: n as u64, limit: MAX_CELLS });
        }
        dims[a] = n as usize;
        cells = cells.saturating_mul(dims[a] as u64);
    }
    if cells > MAX_CELLS {
        return Err(Error::GridTooLarge { cells, limit: MAX_CELLS });
    }

    let mut grid = VoxelGrid3::new(bounds.min, resolution, dims)?;
    let mut outside = 0usize;
    for p in points {
        if !bounds.contains_point(p) {
            outside += 1;
            continue;
        }
        let rel = (p - bounds.min) / resolution;
        let idx = GridIndex::new(
            (rel.x.floor() as usize).min(dims[0] - 1),
            (rel.y.floor() as usize).min(dims[1] - 1),
            (rel.z.floor() as usize).min(dims[2] - 1),
        );
        grid.set_occupied(idx);
    }
    Ok((grid, outside))
}

/// Copy of `env` with the surface shells of `boxes` stamped in: a voxel
/// becomes occupied when its center lies within half a voxel diagonal of any
/// box's boundary. Interiors are left hollow; existing occupancy is never
/// cleared.
pub fn overlay_state(env: &VoxelGrid3, boxes: &[OrientedBox]) -> VoxelGrid3 {
    let mut out = env.clone();
    let half_diag = env.resolution * 0.5 * 3f64.sqrt();
    for b in boxes {
        let reach = b.aabb().expanded(half_diag + env.resolution);
        let lo = reach.min - env.origin;
        let hi = reach.max - env.origin;
        let range = |l: f64, h: f64, n: usize| {
            let a = ((l / env.resolution).floor().max(0.0)) as usize;
            let b = ((h / env.resolution).ceil().max(0.0) as usize).min(n);
            (a.min(n), b)
        };
        let (x0, x1) = range(lo.x, hi.x, env.dims[0]);
        let (y0, y1) = range(lo.y, hi.y, env.dims[1]);
        let (z0, z1) = range(lo.z, hi.z, env.dims[2]);
        for iz in z0..z1 {
            for iy in y0..y1 {
                for ix in x0..x1 {
                    let i = GridIndex::new(ix, iy, iz);
                    if !out.is_occupied(i) && b.surface_distance(&out.center_of(i)) <= half_diag {
                        out.set_occupied(i);
                    }
                }
            }
        }
    }
    out
}

/// Walks the voxels pierced by the segment from `origin` to `target` and
/// returns the first occupied one with its center point.
///
/// Traversal starts where the segment enters the grid and stops after the
/// voxel containing `target` (or where the segment leaves the grid);
/// `None` means no occupied voxel was crossed within that span. A segment
/// starting inside an occupied voxel hits immediately.
pub fn raycast_first_hit(grid: &VoxelGrid3, origin: &Point3, target: &Point3) -> Option<(GridIndex, Point3)> {
    let mut hit = None;
    traverse(grid, origin, target, |i| {
        if grid.is_occupied(i) {
            hit = Some((i, grid.center_of(i)));
            false
        } else {
            true
        }
    });
    hit
}

/// Every voxel the segment crosses, in traversal order. Consecutive entries
/// differ in exactly one coordinate by one (6-connected chain).
pub fn raycast_cells(grid: &VoxelGrid3, origin: &Point3, target: &Point3) -> Vec<GridIndex> {
    let mut cells = Vec::new();
    traverse(grid, origin, target, |i| {
        cells.push(i);
        true
    });
    cells
}

/// Incremental voxel stepping; calls `visit` for each crossed voxel until it
/// returns false. Boundary crossings through edges or corners step one axis
/// at a time in x, y, z order.
fn traverse(grid: &VoxelGrid3, origin: &Point3, target: &Point3, mut visit: impl FnMut(GridIndex) -> bool) {
    let d = target - origin;
    let gmin = grid.origin;
    let gmax = grid.world_max();

    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for a in 0..3 {
        if d[a] == 0.0 {
            if origin[a] < gmin[a] || origin[a] > gmax[a] {
                return;
            }
        } else {
            let ta = (gmin[a] - origin[a]) / d[a];
            let tb = (gmax[a] - origin[a]) / d[a];
            let (enter, exit) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(enter);
            t1 = t1.min(exit);
            if t0 > t1 {
                return;
            }
        }
    }

    let start = origin + d * t0;
    let res = grid.resolution;
    let mut idx = [0isize; 3];
    for a in 0..3 {
        let f = ((start[a] - gmin[a]) / res).floor() as isize;
        idx[a] = f.clamp(0, grid.dims[a] as isize - 1);
    }

    let target_idx = grid.index_of(target);

    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if d[a] > 0.0 {
            step[a] = 1;
            let boundary = gmin[a] + (idx[a] + 1) as f64 * res;
            t_max[a] = (boundary - origin[a]) / d[a];
            t_delta[a] = res / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            let boundary = gmin[a] + idx[a] as f64 * res;
            t_max[a] = (boundary - origin[a]) / d[a];
            t_delta[a] = res / -d[a];
        }
    }

    loop {
        let here = GridIndex::new(idx[0] as usize, idx[1] as usize, idx[2] as usize);
        if !visit(here) {
            return;
        }
        if Some(here) == target_idx {
            return;
        }
        let axis = (0..3).min_by(|&a, &b| t_max[a].total_cmp(&t_max[b])).unwrap();
        if t_max[axis] > 1.0 {
            return;
        }
        idx[axis] += step[axis];
        if idx[axis] < 0 || idx[axis] >= grid.dims[axis] as isize {
            return;
        }
        t_max[axis] += t_delta[axis];
    }
}

/// Dense 2D occupancy grid for base navigation.
#[derive(Clone, Debug)]
pub struct OccupancyGrid2 {
    origin: Point2,
    resolution: f64,
    dims: [usize; 2],
    occupancy: Vec<bool>,
}

impl OccupancyGrid2 {
    pub fn new(origin: Point2, resolution: f64, dims: [usize; 2]) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        let cells = dims[0] as u64 * dims[1] as u64;
        if cells > MAX_CELLS {
            return Err(Error::GridTooLarge { cells, limit: MAX_CELLS });
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            occupancy: vec![false; cells as usize],
        })
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    fn linear(&self, c: [usize; 2]) -> usize {
        c[1] * self.dims[0] + c[0]
    }

    pub fn in_bounds(&self, c: [usize; 2]) -> bool {
        c[0] < self.dims[0] && c[1] < self.dims[1]
    }

    pub fn index_of(&self, p: &Point2) -> Option<[usize; 2]> {
        let rel = (p - self.origin) / self.resolution;
        if rel.x < 0.0 || rel.y < 0.0 {
            return None;
        }
        let c = [rel.x.floor() as usize, rel.y.floor() as usize];
        self.in_bounds(c).then_some(c)
    }

    pub fn center_of(&self, c: [usize; 2]) -> Point2 {
        self.origin + nalgebra::Vector2::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5) * self.resolution
    }

    pub fn is_occupied(&self, c: [usize; 2]) -> bool {
        self.occupancy[self.linear(c)]
    }

    pub fn set_occupied(&mut self, c: [usize; 2]) {
        let l = self.linear(c);
        self.occupancy[l] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Copy with every occupied cell grown by a disk of the given radius
    /// (Euclidean, measured between cell centers).
    pub fn inflated(&self, radius: f64) -> OccupancyGrid2 {
        let mut out = self.clone();
        if radius <= 0.0 {
            return out;
        }
        let r_cells = (radius / self.resolution).ceil() as isize;
        let mut mask = Vec::new();
        for dy in -r_cells..=r_cells {
            for dx in -r_cells..=r_cells {
                let dist = ((dx * dx + dy * dy) as f64).sqrt() * self.resolution;
                if dist <= radius {
                    mask.push([dx, dy]);
                }
            }
        }
        for y in 0..self.dims[1] {
            for x in 0..self.dims[0] {
                if !self.is_occupied([x, y]) {
                    continue;
                }
                for m in &mask {
                    let nx = x as isize + m[0];
                    let ny = y as isize + m[1];
                    if nx >= 0 && ny >= 0 {
                        let c = [nx as usize, ny as usize];
                        if self.in_bounds(c) {
                            out.set_occupied(c);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Flattens the height band `[z_min, z_max]` into a 2D grid: a cell is
/// occupied when any voxel in its column with center z inside the band is.
pub fn project_to_2d(grid: &VoxelGrid3, z_min: f64, z_max: f64) -> Result<OccupancyGrid2> {
    if !(z_min < z_max) {
        return Err(Error::InvalidParameter(format!(
            "projection band is empty: z_min {z_min}, z_max {z_max}"
        )));
    }
    let mut out = OccupancyGrid2::new(
        Point2::new(grid.origin.x, grid.origin.y),
        grid.resolution,
        [grid.dims[0], grid.dims[1]],
    )?;
    for iz in 0..grid.dims[2] {
        let z = grid.origin.z + (iz as f64 + 0.5) * grid.resolution;
        if z < z_min || z > z_max {
            continue;
        }
        for iy in 0..grid.dims[1] {
            for ix in 0..grid.dims[0] {
                if grid.is_occupied(GridIndex::new(ix, iy, iz)) {
                    out.set_occupied([ix, iy]);
                }
            }
        }
    }
    Ok(out)
}

/// True when any occupied voxel center lies inside `region` (faces
/// inclusive).
pub fn region_occupied(grid: &VoxelGrid3, region: &Aabb) -> bool {
    let res = grid.resolution;
    let lo = region.min - grid.origin;
    let hi = region.max - grid.origin;
    let range = |l: f64, h: f64, n: usize| {
        let a = ((l / res - 0.5).ceil().max(0.0)) as usize;
        let b = (((h / res - 0.5).floor() + 1.0).max(0.0) as usize).min(n);
        (a.min(n), b)
    };
    let (x0, x1) = range(lo.x, hi.x, grid.dims[0]);
    let (y0, y1) = range(lo.y, hi.y, grid.dims[1]);
    let (z0, z1) = range(lo.z, hi.z, grid.dims[2]);
    for iz in z0..z1 {
        for iy in y0..y1 {
            for ix in x0..x1 {
                let i = GridIndex::new(ix, iy, iz);
                if grid.is_occupied(i) && region.contains_point(&grid.center_of(i)) {
                    return true;
                }
            }
        }
    }
    false
}
