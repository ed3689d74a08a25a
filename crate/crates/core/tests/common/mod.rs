//! Reference implementations the integration suites check production code
//! against. Everything here is derived independently: dense sampling instead
//! of incremental traversal, hand-rolled matrices instead of nalgebra
//! isometries, exhaustive search instead of heuristics.

use vantage::geometry::{Point3, Vector3};
use vantage::voxel::{GridIndex, VoxelGrid3};

/// First occupied voxel along the segment, found by dense sampling at a
/// tenth of the grid resolution instead of incremental traversal.
pub fn dense_march_first_hit(
    grid: &VoxelGrid3,
    origin: &Point3,
    target: &Point3,
) -> Option<GridIndex> {
    dense_march_cells(grid, origin, target)
        .into_iter()
        .find(|&c| grid.is_occupied(c))
}

/// Every voxel the segment crosses, in order, by dense sampling. Strides
/// that jump over a cell are bisected until consecutive samples land in the
/// same or a face-adjacent cell; entering or leaving the grid between two
/// samples is refined to the boundary so grazed border cells still appear.
pub fn dense_march_cells(grid: &VoxelGrid3, origin: &Point3, target: &Point3) -> Vec<GridIndex> {
    let seg = target - origin;
    let steps = ((seg.norm() / (grid.resolution() / 10.0)).ceil() as usize).max(1);
    let mut chain: Vec<GridIndex> = Vec::new();
    let mut last: Option<(f64, GridIndex)> = None;
    let mut left_grid_at: Option<f64> = None;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let Some(cell) = grid.index_of(&(origin + seg * t)) else {
            if let Some((t_in, cell_in)) = last {
                let t_exit = refine_boundary(grid, origin, &seg, t, t_in);
                if let Some(exit_cell) = grid.index_of(&(origin + seg * t_exit)) {
                    fill_gap(grid, origin, &seg, t_in, cell_in, t_exit, exit_cell, &mut chain);
                }
            }
            left_grid_at = Some(t);
            last = None;
            continue;
        };
        match (last, left_grid_at.take()) {
            // The segment starts inside the grid.
            (None, None) => push_cell(&mut chain, cell),
            // The previous sample was outside: recover the entry cell.
            (None, Some(t_out)) => {
                let t_entry = refine_boundary(grid, origin, &seg, t_out, t);
                let entry_cell = grid
                    .index_of(&(origin + seg * t_entry))
                    .expect("refinement ends on the inside");
                push_cell(&mut chain, entry_cell);
                fill_gap(grid, origin, &seg, t_entry, entry_cell, t, cell, &mut chain);
            }
            (Some((t_prev, prev)), _) if prev != cell => {
                fill_gap(grid, origin, &seg, t_prev, prev, t, cell, &mut chain);
            }
            _ => {}
        }
        last = Some((t, cell));
    }
    chain
}

/// Parameter where the segment crosses the grid boundary, found by
/// bisection between an outside sample `t_out` and an inside sample `t_in`.
/// Returns a parameter on the inside.
fn refine_boundary(grid: &VoxelGrid3, origin: &Point3, seg: &Vector3, t_out: f64, t_in: f64) -> f64 {
    let mut out = t_out;
    let mut inside = t_in;
    for _ in 0..80 {
        let mid = 0.5 * (out + inside);
        if grid.index_of(&(origin + seg * mid)).is_some() {
            inside = mid;
        } else {
            out = mid;
        }
    }
    inside
}

fn push_cell(chain: &mut Vec<GridIndex>, cell: GridIndex) {
    if chain.last() != Some(&cell) {
        chain.push(cell);
    }
}

fn manhattan(a: GridIndex, b: GridIndex) -> usize {
    a.ix.abs_diff(b.ix) + a.iy.abs_diff(b.iy) + a.iz.abs_diff(b.iz)
}

#[allow(clippy::too_many_arguments)]
fn fill_gap(
    grid: &VoxelGrid3,
    origin: &Point3,
    seg: &Vector3,
    t_lo: f64,
    lo: GridIndex,
    t_hi: f64,
    hi: GridIndex,
    chain: &mut Vec<GridIndex>,
) {
    if lo == hi {
        return;
    }
    if manhattan(lo, hi) <= 1 || t_hi - t_lo < 1e-13 {
        push_cell(chain, hi);
        return;
    }
    let t_mid = 0.5 * (t_lo + t_hi);
    let mid = grid
        .index_of(&(origin + seg * t_mid))
        .expect("the grid volume is convex, interior samples stay inside");
    fill_gap(grid, origin, seg, t_lo, lo, t_mid, mid, chain);
    fill_gap(grid, origin, seg, t_mid, mid, t_hi, hi, chain);
}
