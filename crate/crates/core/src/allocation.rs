//! Navigation costs on the projected floor grid and the robot-to-viewpoint
//! assignment built on them.
//!
//! Paths are planned with Dijkstra on the 8-connected cell graph: cardinal
//! steps cost one resolution, diagonal steps root-two resolutions, and a
//! diagonal move is forbidden when both cells it squeezes between are
//! occupied. Costs are accumulated as integer step counts and only turned
//! into meters for comparison, so two routes of the same step mix always
//! price identically and results are reproducible across traversal orders.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::geometry::Point2;
use crate::sampler::CandidateViewpoint;
use crate::voxel::OccupancyGrid2;
use crate::{Error, Result};

/// Robot-to-viewpoint mapping with its total path cost in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `robot_to_viewpoint[r]` is the viewpoint index assigned to robot `r`.
    pub robot_to_viewpoint: Vec<usize>,
    pub total_cost: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct StepCounts {
    cardinal: u32,
    diagonal: u32,
}

impl StepCounts {
    fn cost(&self, resolution: f64) -> f64 {
        self.cardinal as f64 * resolution + self.diagonal as f64 * (resolution * SQRT_2)
    }
}

struct QueueEntry {
    cost: f64,
    counts: StepCounts,
    cell: [usize; 2],
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the max-heap pops the cheapest cost, smallest cell.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

const CARDINAL: [[isize; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];
const DIAGONAL: [[isize; 2]; 4] = [[1, 1], [1, -1], [-1, 1], [-1, -1]];

fn offset(cell: [usize; 2], delta: [isize; 2], dims: [usize; 2]) -> Option<[usize; 2]> {
    let x = cell[0] as isize + delta[0];
    let y = cell[1] as isize + delta[1];
    (x >= 0 && y >= 0 && (x as usize) < dims[0] && (y as usize) < dims[1])
        .then_some([x as usize, y as usize])
}

/// True when stepping diagonally by `delta` from `cell` is blocked by both
/// cells the move passes between.
fn corner_cut(grid: &OccupancyGrid2, cell: [usize; 2], delta: [isize; 2]) -> bool {
    let a = offset(cell, [delta[0], 0], grid.dims());
    let b = offset(cell, [0, delta[1]], grid.dims());
    match (a, b) {
        (Some(a), Some(b)) => grid.is_occupied(a) && grid.is_occupied(b),
        _ => false,
    }
}

/// Cheapest 8-connected path between two free cells, as the list of cells
/// from `start` to `goal` inclusive; `None` when the goal is unreachable.
pub fn shortest_path(
    grid: &OccupancyGrid2,
    start: [usize; 2],
    goal: [usize; 2],
) -> Result<Option<Vec<[usize; 2]>>> {
    for cell in [start, goal] {
        if !grid.in_bounds(cell) {
            return Err(Error::CellOutOfBounds { x: cell[0], y: cell[1] });
        }
    }
    if grid.is_occupied(start) {
        return Err(Error::StartBlocked { x: start[0], y: start[1] });
    }
    if grid.is_occupied(goal) {
        return Err(Error::GoalBlocked { x: goal[0], y: goal[1] });
    }

    let [nx, ny] = grid.dims();
    let linear = |c: [usize; 2]| c[1] * nx + c[0];
    let resolution = grid.resolution();
    let mut best = vec![f64::INFINITY; nx * ny];
    let mut prev: Vec<Option<[usize; 2]>> = vec![None; nx * ny];
    let mut settled = vec![false; nx * ny];
    let mut heap = BinaryHeap::new();
    let origin_counts = StepCounts { cardinal: 0, diagonal: 0 };
    best[linear(start)] = 0.0;
    heap.push(QueueEntry { cost: 0.0, counts: origin_counts, cell: start });

    while let Some(QueueEntry { cost, counts, cell }) = heap.pop() {
        if settled[linear(cell)] {
            continue;
        }
        settled[linear(cell)] = true;
        if cell == goal {
            let mut path = vec![cell];
            let mut cursor = cell;
            while let Some(parent) = prev[linear(cursor)] {
                path.push(parent);
                cursor = parent;
            }
            path.reverse();
            return Ok(Some(path));
        }
        let moves = CARDINAL
            .iter()
            .map(|&d| (d, false))
            .chain(DIAGONAL.iter().map(|&d| (d, true)));
        for (delta, diagonal) in moves {
            let Some(next) = offset(cell, delta, grid.dims()) else {
                continue;
            };
            if grid.is_occupied(next) || settled[linear(next)] {
                continue;
            }
            if diagonal && corner_cut(grid, cell, delta) {
                continue;
            }
            let next_counts = StepCounts {
                cardinal: counts.cardinal + u32::from(!diagonal),
                diagonal: counts.diagonal + u32::from(diagonal),
            };
            let next_cost = next_counts.cost(resolution);
            if next_cost < best[linear(next)] {
                best[linear(next)] = next_cost;
                prev[linear(next)] = Some(cell);
                heap.push(QueueEntry { cost: next_cost, counts: next_counts, cell: next });
            }
        }
        let _ = cost;
    }
    Ok(None)
}

/// Length of a cell path in meters: the Euclidean distance between
/// consecutive cell centers, which is exactly one resolution per cardinal
/// step and root-two resolutions per diagonal step.
pub fn path_length(path: &[[usize; 2]], grid: &OccupancyGrid2) -> f64 {
    let resolution = grid.resolution();
    let mut counts = StepCounts { cardinal: 0, diagonal: 0 };
    let mut loose = 0.0;
    for pair in path.windows(2) {
        let dx = pair[0][0].abs_diff(pair[1][0]);
        let dy = pair[0][1].abs_diff(pair[1][1]);
        match (dx, dy) {
            (0, 0) => {}
            (1, 0) | (0, 1) => counts.cardinal += 1,
            (1, 1) => counts.diagonal += 1,
            _ => loose += (grid.center_of(pair[1]) - grid.center_of(pair[0])).norm(),
        }
    }
    counts.cost(resolution) + loose
}

/// Minimum-total-cost bijection between robots (rows) and viewpoints
/// (columns) of a square cost matrix, by exhaustive permutation search.
/// Ties go to the lexicographically smallest mapping. Intended for the
/// handful of supervising robots a site has, not large matrices.
pub fn assign(costs: &[Vec<f64>]) -> Result<Assignment> {
    let n = costs.len();
    if n == 0 || costs.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "assignment needs a square nonempty cost matrix, got {n} rows of lengths {:?}",
            costs.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let mut used = vec![false; n];
    let mut mapping = vec![0usize; n];
    let mut best: Option<Assignment> = None;
    search_assignments(costs, 0, 0.0, &mut used, &mut mapping, &mut best);
    best.ok_or(Error::ViewpointUnreachable)
}

fn search_assignments(
    costs: &[Vec<f64>],
    robot: usize,
    running: f64,
    used: &mut [bool],
    mapping: &mut [usize],
    best: &mut Option<Assignment>,
) {
    if robot == costs.len() {
        // Strict improvement keeps the first, lexicographically smallest
        // mapping on ties. Partial sums cannot prune here: a negative cost
        // later in the matrix may still undercut the current best.
        let improves = best.as_ref().map_or(true, |b| running < b.total_cost);
        if running.is_finite() && improves {
            *best = Some(Assignment {
                robot_to_viewpoint: mapping.to_vec(),
                total_cost: running,
            });
        }
        return;
    }
    for viewpoint in 0..costs.len() {
        if used[viewpoint] {
            continue;
        }
        used[viewpoint] = true;
        mapping[robot] = viewpoint;
        search_assignments(costs, robot + 1, running + costs[robot][viewpoint], used, mapping, best);
        used[viewpoint] = false;
    }
}

/// Robot chosen to take a lone viewpoint: the one with the cheapest path,
/// ties to the lowest robot index.
pub fn assign_single(costs: &[f64]) -> Result<usize> {
    let mut winner: Option<(usize, f64)> = None;
    for (robot, &cost) in costs.iter().enumerate() {
        if cost.is_finite() && winner.is_none_or(|(_, c)| cost < c) {
            winner = Some((robot, cost));
        }
    }
    winner.map(|(robot, _)| robot).ok_or(Error::ViewpointUnreachable)
}

/// Navigation goal cell for a chosen candidate: the cell containing its
/// base position. A coordinate exactly on a cell edge belongs to the cell
/// whose lower edge it is.
pub fn viewpoint_goal_cell(
    candidate: &CandidateViewpoint,
    grid: &OccupancyGrid2,
) -> Result<[usize; 2]> {
    let base = Point2::new(candidate.config.base.x, candidate.config.base.y);
    let cell = grid.index_of(&base).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "viewpoint base ({:.3}, {:.3}) lies outside the navigation grid",
            base.x, base.y
        ))
    })?;
    if grid.is_occupied(cell) {
        return Err(Error::GoalBlocked { x: cell[0], y: cell[1] });
    }
    Ok(cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraIntrinsics, CameraView};
    use crate::geometry::{Point3, Pose3};
    use crate::robot::{BasePose, JointConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty_grid(nx: usize, ny: usize, resolution: f64) -> OccupancyGrid2 {
        OccupancyGrid2::new(Point2::origin(), resolution, [nx, ny]).unwrap()
    }

    fn random_grid(rng: &mut ChaCha8Rng, nx: usize, ny: usize, fill: f64) -> OccupancyGrid2 {
        let mut grid = empty_grid(nx, ny, 0.25);
        for y in 0..ny {
            for x in 0..nx {
                if rng.gen_bool(fill) {
                    grid.set_occupied([x, y]);
                }
            }
        }
        grid
    }

    /// Uniform-cost search with a scan-for-minimum frontier, sharing only
    /// the step-count cost formula with the planner under test.
    fn ucs_cost(grid: &OccupancyGrid2, start: [usize; 2], goal: [usize; 2]) -> Option<f64> {
        if grid.is_occupied(start) || grid.is_occupied(goal) {
            return None;
        }
        let mut frontier: Vec<(StepCounts, [usize; 2])> =
            vec![(StepCounts { cardinal: 0, diagonal: 0 }, start)];
        let mut closed: std::collections::HashMap<[usize; 2], f64> = Default::default();
        let resolution = grid.resolution();
        while !frontier.is_empty() {
            let mut pick = 0;
            for i in 1..frontier.len() {
                let (ci, cell_i) = &frontier[i];
                let (cp, cell_p) = &frontier[pick];
                let (a, b) = (ci.cost(resolution), cp.cost(resolution));
                if a < b || (a == b && cell_i < cell_p) {
                    pick = i;
                }
            }
            let (counts, cell) = frontier.swap_remove(pick);
            let cost = counts.cost(resolution);
            if closed.contains_key(&cell) {
                continue;
            }
            closed.insert(cell, cost);
            if cell == goal {
                return Some(cost);
            }
            for dx in -1isize..=1 {
                for dy in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let Some(next) = offset(cell, [dx, dy], grid.dims()) else {
                        continue;
                    };
                    if grid.is_occupied(next) || closed.contains_key(&next) {
                        continue;
                    }
                    let diagonal = dx != 0 && dy != 0;
                    if diagonal {
                        let side_a = offset(cell, [dx, 0], grid.dims()).unwrap();
                        let side_b = offset(cell, [0, dy], grid.dims()).unwrap();
                        if grid.is_occupied(side_a) && grid.is_occupied(side_b) {
                            continue;
                        }
                    }
                    frontier.push((
                        StepCounts {
                            cardinal: counts.cardinal + u32::from(!diagonal),
                            diagonal: counts.diagonal + u32::from(diagonal),
                        },
                        next,
                    ));
                }
            }
        }
        None
    }

    #[test]
    fn straight_line_on_empty_grid() {
        let grid = empty_grid(10, 10, 0.25);
        let path = shortest_path(&grid, [0, 0], [0, 5]).unwrap().unwrap();
        assert_eq!(path.len(), 6);
        assert_eq!(path[0], [0, 0]);
        assert_eq!(path[5], [0, 5]);
        assert_eq!(path_length(&path, &grid), 1.25);
    }

    #[test]
    fn trivial_and_blocked_cases() {
        let mut grid = empty_grid(10, 10, 0.25);
        let same = shortest_path(&grid, [3, 3], [3, 3]).unwrap().unwrap();
        assert_eq!(same, vec![[3, 3]]);
        assert_eq!(path_length(&same, &grid), 0.0);

        // Wall the right column off completely.
        for y in 0..10 {
            grid.set_occupied([8, y]);
        }
        assert!(shortest_path(&grid, [0, 0], [9, 5]).unwrap().is_none());

        grid.set_occupied([2, 2]);
        assert!(matches!(
            shortest_path(&grid, [2, 2], [0, 0]),
            Err(Error::StartBlocked { x: 2, y: 2 })
        ));
        assert!(matches!(
            shortest_path(&grid, [0, 0], [2, 2]),
            Err(Error::GoalBlocked { x: 2, y: 2 })
        ));
        assert!(matches!(
            shortest_path(&grid, [0, 0], [10, 0]),
            Err(Error::CellOutOfBounds { x: 10, y: 0 })
        ));
    }

    #[test]
    fn corner_cutting_is_forbidden() {
        // Both cells flanking the diagonal occupied: no way through.
        let mut pinched = empty_grid(2, 2, 0.25);
        pinched.set_occupied([1, 0]);
        pinched.set_occupied([0, 1]);
        assert!(shortest_path(&pinched, [0, 0], [1, 1]).unwrap().is_none());

        // One flanking cell free: the diagonal squeezes past.
        let mut open = empty_grid(2, 2, 0.25);
        open.set_occupied([0, 1]);
        let path = shortest_path(&open, [0, 0], [1, 1]).unwrap().unwrap();
        assert_eq!(path, vec![[0, 0], [1, 1]]);
        assert_relative_eq!(path_length(&path, &open), 0.25 * SQRT_2);
    }

    #[test]
    fn planner_matches_uniform_cost_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..6 {
            let grid = random_grid(&mut rng, 20, 20, 0.25);
            for _ in 0..8 {
                let start = [rng.gen_range(0..20), rng.gen_range(0..20)];
                let goal = [rng.gen_range(0..20), rng.gen_range(0..20)];
                if grid.is_occupied(start) || grid.is_occupied(goal) {
                    continue;
                }
                let planned = shortest_path(&grid, start, goal).unwrap();
                let oracle = ucs_cost(&grid, start, goal);
                match (planned, oracle) {
                    (None, None) => {}
                    (Some(path), Some(cost)) => {
                        assert_eq!(path_length(&path, &grid), cost, "{start:?}->{goal:?}");
                    }
                    (got, want) => {
                        panic!("{start:?}->{goal:?}: reachability disagrees: {got:?} vs {want:?}")
                    }
                }
            }
        }
    }

    #[test]
    fn paths_are_adjacent_free_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let grid = random_grid(&mut rng, 15, 15, 0.2);
            for _ in 0..6 {
                let a = [rng.gen_range(0..15), rng.gen_range(0..15)];
                let b = [rng.gen_range(0..15), rng.gen_range(0..15)];
                if grid.is_occupied(a) || grid.is_occupied(b) {
                    continue;
                }
                let forward = shortest_path(&grid, a, b).unwrap();
                let backward = shortest_path(&grid, b, a).unwrap();
                match (&forward, &backward) {
                    (Some(f), Some(r)) => {
                        assert_eq!(path_length(f, &grid), path_length(r, &grid));
                        for cell in f {
                            assert!(!grid.is_occupied(*cell));
                        }
                        for pair in f.windows(2) {
                            let dx = pair[0][0].abs_diff(pair[1][0]);
                            let dy = pair[0][1].abs_diff(pair[1][1]);
                            assert!(dx <= 1 && dy <= 1 && dx + dy > 0);
                        }
                    }
                    (None, None) => {}
                    _ => panic!("reachability must be symmetric"),
                }
            }
        }
    }

    #[test]
    fn obstacles_never_shorten_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut grid = random_grid(&mut rng, 15, 15, 0.1);
        let start = [0, 0];
        let goal = [14, 14];
        if grid.is_occupied(start) || grid.is_occupied(goal) {
            grid = empty_grid(15, 15, 0.25);
        }
        let before = shortest_path(&grid, start, goal)
            .unwrap()
            .map(|p| path_length(&p, &grid));
        for _ in 0..10 {
            let cell = [rng.gen_range(0..15), rng.gen_range(0..15)];
            if cell == start || cell == goal {
                continue;
            }
            grid.set_occupied(cell);
        }
        let after = shortest_path(&grid, start, goal)
            .unwrap()
            .map(|p| path_length(&p, &grid));
        match (before, after) {
            (Some(b), Some(a)) => assert!(a >= b),
            (Some(_), None) | (None, None) => {}
            (None, Some(_)) => panic!("adding obstacles opened a path"),
        }
    }

    #[test]
    fn path_length_sums_segments() {
        let grid = empty_grid(20, 20, 0.25);
        assert_eq!(path_length(&[[4, 4]], &grid), 0.0);
        let cardinal: Vec<[usize; 2]> = (0..6).map(|i| [0, i]).collect();
        assert_eq!(path_length(&cardinal, &grid), 1.25);

        // Mixed path with a non-adjacent jump, against direct summation.
        let mixed = vec![[0, 0], [1, 1], [2, 1], [5, 9]];
        let direct: f64 = mixed
            .windows(2)
            .map(|w| (grid.center_of(w[1]) - grid.center_of(w[0])).norm())
            .sum();
        assert_relative_eq!(path_length(&mixed, &grid), direct, epsilon = 1e-12);
    }

    #[test]
    fn assignment_picks_cheapest_permutation() {
        let diagonal = assign(&[vec![1.0, 9.0], vec![9.0, 1.0]]).unwrap();
        assert_eq!(diagonal.robot_to_viewpoint, vec![0, 1]);
        assert_eq!(diagonal.total_cost, 2.0);

        let flat = assign(&[vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(flat.robot_to_viewpoint, vec![0, 1]);

        let crossed = assign(&[vec![f64::INFINITY, 1.0], vec![1.0, f64::INFINITY]]).unwrap();
        assert_eq!(crossed.robot_to_viewpoint, vec![1, 0]);
        assert_eq!(crossed.total_cost, 2.0);

        assert!(matches!(
            assign(&[vec![f64::INFINITY; 2], vec![f64::INFINITY; 2]]),
            Err(Error::ViewpointUnreachable)
        ));
        assert!(matches!(
            assign(&[vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(assign(&[]), Err(Error::DimensionMismatch(_))));
    }

    fn brute_force_assignment(costs: &[Vec<f64>]) -> Option<Assignment> {
        let n = costs.len();
        let mut all = Vec::new();
        permute(&mut (0..n).collect::<Vec<_>>(), 0, &mut all);
        all.sort();
        all.into_iter()
            .map(|mapping| {
                let total: f64 = mapping.iter().enumerate().map(|(r, &v)| costs[r][v]).sum();
                Assignment { robot_to_viewpoint: mapping, total_cost: total }
            })
            .filter(|a| a.total_cost.is_finite())
            .min_by(|a, b| a.total_cost.total_cmp(&b.total_cost))
    }

    fn permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, out);
            items.swap(k, i);
        }
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..=4);
            let costs: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if rng.gen_bool(0.15) {
                                f64::INFINITY
                            } else {
                                (rng.gen_range(0..40) as f64) / 4.0
                            }
                        })
                        .collect()
                })
                .collect();
            let expected = brute_force_assignment(&costs);
            match (assign(&costs), expected) {
                (Ok(got), Some(want)) => {
                    assert_eq!(got.total_cost, want.total_cost, "{costs:?}");
                    assert_eq!(got.robot_to_viewpoint, want.robot_to_viewpoint, "{costs:?}");
                }
                (Err(Error::ViewpointUnreachable), None) => {}
                (got, want) => panic!("{costs:?}: {got:?} vs {want:?}"),
            }
        }
    }

    #[test]
    fn single_viewpoint_goes_to_cheapest_robot() {
        assert_eq!(assign_single(&[3.0, 1.0, 2.0]).unwrap(), 1);
        assert_eq!(assign_single(&[2.0, 1.0, 1.0]).unwrap(), 1);
        assert_eq!(assign_single(&[f64::INFINITY, 4.0]).unwrap(), 1);
        assert!(matches!(
            assign_single(&[f64::INFINITY, f64::INFINITY]),
            Err(Error::ViewpointUnreachable)
        ));
        assert!(matches!(assign_single(&[]), Err(Error::ViewpointUnreachable)));
    }

    fn candidate_at(x: f64, y: f64) -> CandidateViewpoint {
        CandidateViewpoint {
            id: 0,
            view: CameraView::new(
                Pose3::new(Point3::new(x, y, 1.0), [0.0, 0.0, 0.0]),
                CameraIntrinsics::d435_depth(),
            ),
            config: JointConfig::new(BasePose::new(x, y, 0.0), vec![]),
            coverage: None,
            target_coverage: None,
            collision_free: None,
        }
    }

    #[test]
    fn goal_cell_uses_floor_indexing() {
        let grid = empty_grid(20, 20, 0.25);
        assert_eq!(viewpoint_goal_cell(&candidate_at(1.0, 1.0), &grid).unwrap(), [4, 4]);
        assert_eq!(
            viewpoint_goal_cell(&candidate_at(1.1, 0.74), &grid).unwrap(),
            [4, 2]
        );

        // Cell round trip: the center of every cell must map back to it.
        for x in (0..20).step_by(7) {
            for y in (0..20).step_by(7) {
                let center = grid.center_of([x, y]);
                let c = viewpoint_goal_cell(&candidate_at(center.x, center.y), &grid).unwrap();
                assert_eq!(c, [x, y]);
            }
        }

        let mut blocked = empty_grid(20, 20, 0.25);
        blocked.set_occupied([4, 4]);
        assert!(matches!(
            viewpoint_goal_cell(&candidate_at(1.0, 1.0), &blocked),
            Err(Error::GoalBlocked { x: 4, y: 4 })
        ));
        assert!(matches!(
            viewpoint_goal_cell(&candidate_at(-1.0, 1.0), &grid),
            Err(Error::InvalidParameter(_))
        ));
    }
}
