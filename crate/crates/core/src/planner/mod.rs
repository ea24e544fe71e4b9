//! Incremental D* Lite on the 8-connected grid.
//!
//! Every move costs 1 (diagonals included), so on an empty grid the path
//! cost is the Chebyshev distance, which is also the heuristic. A blocked
//! cell makes every edge touching it infinitely expensive. Cells the
//! planner knows nothing about are free.
//!
//! The search runs backwards from the goal: `g(s)` estimates the cost from
//! `s` to the goal and the robot descends `g` greedily.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::grid::{CellIndex, GeometryError, GridSpec};
use crate::prediction::OccupancyForecast;

pub type Cost = u64;

/// Unreachable.
pub const INF: Cost = u64::MAX / 4;

fn add(a: Cost, b: Cost) -> Cost {
    if a >= INF || b >= INF {
        INF
    } else {
        (a + b).min(INF)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error(transparent)]
    OutOfBounds(#[from] GeometryError),
    #[error("start cell {0} is blocked")]
    StartBlocked(CellIndex),
    #[error("no path from {start} to {goal}")]
    NoPath { start: CellIndex, goal: CellIndex },
    #[error("cell {0} is not adjacent to the current start")]
    NotAdjacent(CellIndex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    PathExists,
    NoPath,
}

/// Two-component D* Lite priority, compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Key(pub Cost, pub Cost);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObstacleDelta {
    pub newly_blocked: BTreeSet<CellIndex>,
    pub newly_freed: BTreeSet<CellIndex>,
}

impl ObstacleDelta {
    pub fn is_empty(&self) -> bool {
        self.newly_blocked.is_empty() && self.newly_freed.is_empty()
    }
}

/// Counters accumulated since construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlannerStats {
    pub expansions: u64,
    pub queue_pushes: u64,
    pub searches: u64,
}

#[derive(Debug, Clone)]
pub struct DStarLite {
    grid: GridSpec,
    g: Vec<Cost>,
    rhs: Vec<Cost>,
    blocked: Vec<bool>,
    heap: BinaryHeap<Reverse<(Key, usize)>>,
    /// Current key of every queued vertex; heap entries with another key are stale.
    queued: Vec<Option<Key>>,
    queue_len: usize,
    km: Cost,
    start: usize,
    last: usize,
    goal: usize,
    stats: PlannerStats,
}

impl DStarLite {
    /// Sets up a search from `start` to `goal`. `start` is never treated as blocked.
    pub fn new(
        grid: GridSpec,
        start: CellIndex,
        goal: CellIndex,
        blocked: impl IntoIterator<Item = CellIndex>,
    ) -> Result<Self, PlannerError> {
        let start = grid.checked_cell(i64::from(start.col), i64::from(start.row))?;
        let goal = grid.checked_cell(i64::from(goal.col), i64::from(goal.row))?;
        let n = grid.cell_count();
        let mut blocked_mask = vec![false; n];
        for c in blocked {
            let c = grid.checked_cell(i64::from(c.col), i64::from(c.row))?;
            blocked_mask[grid.linear(c)] = true;
        }
        let s = grid.linear(start);
        if blocked_mask[s] {
            return Err(PlannerError::StartBlocked(start));
        }
        let mut planner = Self {
            grid,
            g: vec![INF; n],
            rhs: vec![INF; n],
            blocked: blocked_mask,
            heap: BinaryHeap::new(),
            queued: vec![None; n],
            queue_len: 0,
            km: 0,
            start: s,
            last: s,
            goal: grid.linear(goal),
            stats: PlannerStats::default(),
        };
        let goal_idx = planner.goal;
        planner.rhs[goal_idx] = 0;
        let k = planner.key(goal_idx);
        planner.push(goal_idx, k);
        Ok(planner)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn start(&self) -> CellIndex {
        self.grid.from_linear(self.start)
    }

    pub fn goal(&self) -> CellIndex {
        self.grid.from_linear(self.goal)
    }

    pub fn at_goal(&self) -> bool {
        self.start == self.goal
    }

    pub fn stats(&self) -> PlannerStats {
        self.stats
    }

    pub fn queue_len(&self) -> usize {
        self.queue_len
    }

    pub fn key_modifier(&self) -> Cost {
        self.km
    }

    pub fn is_blocked(&self, cell: CellIndex) -> bool {
        self.blocked[self.grid.linear(cell)]
    }

    pub fn blocked_cells(&self) -> BTreeSet<CellIndex> {
        (0..self.blocked.len()).filter(|&i| self.blocked[i]).map(|i| self.grid.from_linear(i)).collect()
    }

    pub fn g(&self, cell: CellIndex) -> Cost {
        self.g[self.grid.linear(cell)]
    }

    pub fn rhs(&self, cell: CellIndex) -> Cost {
        self.rhs[self.grid.linear(cell)]
    }

    pub fn is_queued(&self, cell: CellIndex) -> bool {
        self.queued[self.grid.linear(cell)].is_some()
    }

    /// Cost of the current best path from the start, once the search has run.
    pub fn path_cost(&self) -> Option<Cost> {
        let c = self.g[self.start];
        (c < INF).then_some(c)
    }

    pub fn heuristic(&self, a: usize, b: usize) -> Cost {
        Cost::from(self.grid.from_linear(a).chebyshev(self.grid.from_linear(b)))
    }

    pub fn calculate_key(&self, cell: CellIndex) -> Key {
        self.key(self.grid.linear(cell))
    }

    fn key(&self, s: usize) -> Key {
        let m = self.g[s].min(self.rhs[s]);
        Key(add(add(m, self.heuristic(self.start, s)), self.km), m)
    }

    fn cost(&self, a: usize, b: usize) -> Cost {
        if self.blocked[a] || self.blocked[b] {
            INF
        } else {
            1
        }
    }

    fn neighbors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.grid.neighbors(self.grid.from_linear(s)).map(|c| self.grid.linear(c))
    }

    fn push(&mut self, s: usize, k: Key) {
        if self.queued[s].is_none() {
            self.queue_len += 1;
        }
        self.queued[s] = Some(k);
        self.heap.push(Reverse((k, s)));
        self.stats.queue_pushes += 1;
    }

    fn remove(&mut self, s: usize) {
        if self.queued[s].take().is_some() {
            self.queue_len -= 1;
        }
    }

    /// Drops stale heap entries and returns the live minimum.
    fn top(&mut self) -> Option<(Key, usize)> {
        while let Some(&Reverse((k, s))) = self.heap.peek() {
            if self.queued[s] == Some(k) {
                return Some((k, s));
            }
            self.heap.pop();
        }
        None
    }

    fn update_vertex(&mut self, u: usize) {
        if u != self.goal {
            let best = self.neighbors(u).map(|s| add(self.cost(u, s), self.g[s])).min().unwrap_or(INF);
            self.rhs[u] = best;
        }
        if self.g[u] != self.rhs[u] {
            let k = self.key(u);
            self.push(u, k);
        } else {
            self.remove(u);
        }
    }

    pub fn compute_shortest_path(&mut self) -> PathStatus {
        self.stats.searches += 1;
        loop {
            let start_key = self.key(self.start);
            let Some((k_old, u)) = self.top() else { break };
            if k_old >= start_key && self.rhs[self.start] == self.g[self.start] {
                break;
            }
            let k_new = self.key(u);
            if k_old < k_new {
                self.push(u, k_new);
            } else if self.g[u] > self.rhs[u] {
                self.stats.expansions += 1;
                self.g[u] = self.rhs[u];
                self.remove(u);
                let preds: Vec<usize> = self.neighbors(u).collect();
                for s in preds {
                    self.update_vertex(s);
                }
            } else {
                self.stats.expansions += 1;
                self.g[u] = INF;
                let preds: Vec<usize> = self.neighbors(u).chain(std::iter::once(u)).collect();
                for s in preds {
                    self.update_vertex(s);
                }
            }
        }
        if self.rhs[self.start] < INF {
            PathStatus::PathExists
        } else {
            PathStatus::NoPath
        }
    }

    /// Replaces the obstacle set. The current start cell is always kept free.
    pub fn set_blocked(&mut self, cells: &BTreeSet<CellIndex>) -> ObstacleDelta {
        let mut want = vec![false; self.blocked.len()];
        for c in cells {
            if self.grid.contains(i64::from(c.col), i64::from(c.row)) {
                want[self.grid.linear(*c)] = true;
            }
        }
        want[self.start] = false;
        let changed: Vec<usize> = (0..want.len()).filter(|&i| want[i] != self.blocked[i]).collect();
        let mut delta = ObstacleDelta::default();
        if changed.is_empty() {
            return delta;
        }
        self.km = add(self.km, self.heuristic(self.last, self.start));
        self.last = self.start;
        for &v in &changed {
            self.blocked[v] = want[v];
            let cell = self.grid.from_linear(v);
            if want[v] {
                delta.newly_blocked.insert(cell);
            } else {
                delta.newly_freed.insert(cell);
            }
        }
        let mut touched: Vec<usize> = changed.iter().flat_map(|&v| self.neighbors(v).chain(std::iter::once(v))).collect();
        touched.sort_unstable();
        touched.dedup();
        for u in touched {
            self.update_vertex(u);
        }
        delta
    }

    /// Rebuilds the obstacle view for this tick: the pedestrians' current
    /// cells plus every forecast horizon step. The robot's own cell is never
    /// blocked, and the goal is only blocked while a pedestrian stands on it
    /// or is forecast there for the very next step.
    pub fn update_obstacles(&mut self, forecast: &OccupancyForecast, true_current: &BTreeSet<CellIndex>) -> ObstacleDelta {
        let goal = self.goal();
        let mut cells = forecast.union();
        if !true_current.contains(&goal) && !forecast.step(0).contains(&goal) {
            cells.remove(&goal);
        }
        cells.extend(true_current.iter().copied());
        self.set_blocked(&cells)
    }

    /// Moves the search start to an adjacent cell after the robot stepped there.
    pub fn move_start(&mut self, cell: CellIndex) -> Result<(), PlannerError> {
        let c = self.grid.checked_cell(i64::from(cell.col), i64::from(cell.row))?;
        let idx = self.grid.linear(c);
        if idx == self.start {
            return Ok(());
        }
        if self.grid.from_linear(self.start).chebyshev(c) != 1 {
            return Err(PlannerError::NotAdjacent(c));
        }
        self.start = idx;
        if self.blocked[idx] {
            // the robot is standing here, so the cell must be passable
            self.blocked[idx] = false;
            self.km = add(self.km, self.heuristic(self.last, self.start));
            self.last = self.start;
            let touched: Vec<usize> = self.neighbors(idx).chain(std::iter::once(idx)).collect();
            for u in touched {
                self.update_vertex(u);
            }
        }
        Ok(())
    }

    /// Neighbor minimizing `1 + g`, first in N, NE, E, SE, S, SW, W, NW order on ties.
    pub fn next_move(&self) -> Result<CellIndex, PlannerError> {
        let here = self.start();
        let mut best: Option<(Cost, usize)> = None;
        for s in self.neighbors(self.start) {
            let c = add(self.cost(self.start, s), self.g[s]);
            if c < INF && best.is_none_or(|(b, _)| c < b) {
                best = Some((c, s));
            }
        }
        match best {
            Some((_, s)) => Ok(self.grid.from_linear(s)),
            None => Err(PlannerError::NoPath { start: here, goal: self.goal() }),
        }
    }

    /// Greedy descent of `g` from the start to the goal.
    pub fn extract_path(&self) -> Result<Vec<CellIndex>, PlannerError> {
        let mut path = vec![self.start()];
        if self.at_goal() {
            return Ok(path);
        }
        let mut at = self.start;
        let limit = self.g.len();
        while at != self.goal {
            let mut best: Option<(Cost, usize)> = None;
            for s in self.neighbors(at) {
                let c = add(self.cost(at, s), self.g[s]);
                if c < INF && best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, s));
                }
            }
            let Some((_, s)) = best else {
                return Err(PlannerError::NoPath { start: self.start(), goal: self.goal() });
            };
            at = s;
            path.push(self.grid.from_linear(s));
            if path.len() > limit {
                return Err(PlannerError::NoPath { start: self.start(), goal: self.goal() });
            }
        }
        Ok(path)
    }

    /// Full scan of the D* Lite bookkeeping invariants. Returns a description
    /// of the first violation found.
    pub fn audit(&self) -> Result<(), String> {
        let start_key = self.key(self.start);
        let mut queued = 0;
        for s in 0..self.g.len() {
            let cell = self.grid.from_linear(s);
            if s != self.goal {
                let expected = self.neighbors(s).map(|n| add(self.cost(s, n), self.g[n])).min().unwrap_or(INF);
                if expected != self.rhs[s] {
                    return Err(format!("rhs({cell}) = {} but neighbors give {expected}", self.rhs[s]));
                }
            } else if self.rhs[s] != 0 {
                return Err("rhs(goal) is not 0".into());
            }
            let inconsistent = self.g[s] != self.rhs[s];
            if inconsistent != self.queued[s].is_some() {
                return Err(format!("queue membership of {cell} disagrees with local consistency"));
            }
            if self.queued[s].is_some() {
                queued += 1;
            }
            if inconsistent && self.key(s) < start_key {
                return Err(format!("{cell} is inconsistent with key below the start's"));
            }
        }
        if queued != self.queue_len {
            return Err("queue length counter is off".into());
        }
        Ok(())
    }
}

/// Per-replanning-tick record exported with episode traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerTrace {
    pub tick: u64,
    pub cost: Option<Cost>,
    pub queue_len: usize,
    pub expansions: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SceneSpec;

    fn grid(cols: u32, rows: u32) -> GridSpec {
        let scene = SceneSpec::new(f64::from(cols) * 30.0, f64::from(rows) * 30.0, 1.0).unwrap();
        GridSpec::new(&scene, cols, rows).unwrap()
    }

    fn c(col: u32, row: u32) -> CellIndex {
        CellIndex::new(col, row)
    }

    #[test]
    fn start_equals_goal() {
        let mut p = DStarLite::new(grid(5, 5), c(2, 2), c(2, 2), []).unwrap();
        assert_eq!(p.compute_shortest_path(), PathStatus::PathExists);
        assert_eq!(p.path_cost(), Some(0));
        assert!(p.at_goal());
    }

    #[test]
    fn empty_grid_cost_is_chebyshev() {
        let mut p = DStarLite::new(grid(5, 5), c(0, 0), c(4, 4), []).unwrap();
        assert_eq!(p.compute_shortest_path(), PathStatus::PathExists);
        assert_eq!(p.path_cost(), Some(4));
        assert_eq!(p.extract_path().unwrap().len(), 5);
        p.audit().unwrap();
    }

    #[test]
    fn enclosed_goal_has_no_path() {
        let g = grid(7, 7);
        let ring: Vec<_> = g.neighbors(c(3, 3)).collect();
        let mut p = DStarLite::new(g, c(0, 0), c(3, 3), ring).unwrap();
        assert_eq!(p.compute_shortest_path(), PathStatus::NoPath);
        assert!(matches!(p.next_move(), Err(PlannerError::NoPath { .. })));
        p.audit().unwrap();
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(matches!(DStarLite::new(grid(5, 5), c(5, 0), c(1, 1), []), Err(PlannerError::OutOfBounds(_))));
        assert!(matches!(DStarLite::new(grid(5, 5), c(0, 0), c(1, 9), []), Err(PlannerError::OutOfBounds(_))));
        assert!(matches!(DStarLite::new(grid(5, 5), c(0, 0), c(1, 1), [c(0, 0)]), Err(PlannerError::StartBlocked(_))));
    }

    #[test]
    fn straight_corridor_move() {
        let g = grid(6, 3);
        let walls = [c(0, 0), c(1, 0), c(2, 0), c(3, 0), c(4, 0), c(5, 0), c(0, 2), c(1, 2), c(2, 2), c(3, 2), c(4, 2), c(5, 2)];
        let mut p = DStarLite::new(g, c(0, 1), c(5, 1), walls).unwrap();
        p.compute_shortest_path();
        assert_eq!(p.next_move().unwrap(), c(1, 1));
    }

    #[test]
    fn diagonal_tie_goes_to_enumeration_order() {
        // goal two rows up: N, NE and NW all reach it in 2 moves; N wins
        let mut p = DStarLite::new(grid(5, 5), c(2, 2), c(2, 0), []).unwrap();
        p.compute_shortest_path();
        assert_eq!(p.next_move().unwrap(), c(2, 1));
        // goal to the upper right: NE is the only optimal first move
        let mut p = DStarLite::new(grid(5, 5), c(0, 4), c(4, 0), []).unwrap();
        p.compute_shortest_path();
        assert_eq!(p.next_move().unwrap(), c(1, 3));
        // goal three columns east: NE, E and SE all tie; NE comes first
        let mut p = DStarLite::new(grid(5, 5), c(0, 2), c(3, 2), []).unwrap();
        p.compute_shortest_path();
        assert_eq!(p.next_move().unwrap(), c(1, 1));
    }

    #[test]
    fn identical_update_is_a_no_op() {
        let g = grid(10, 10);
        let mut p = DStarLite::new(g, c(0, 0), c(9, 9), []).unwrap();
        p.compute_shortest_path();
        let mut f = OccupancyForecast::new();
        f.insert(0, c(4, 4));
        let now: BTreeSet<_> = [c(5, 5)].into();
        assert!(!p.update_obstacles(&f, &now).is_empty());
        p.compute_shortest_path();
        let pushes = p.stats().queue_pushes;
        assert!(p.update_obstacles(&f, &now).is_empty());
        assert_eq!(p.stats().queue_pushes, pushes);
    }

    #[test]
    fn robot_cell_and_goal_exemptions() {
        let g = grid(10, 10);
        let mut p = DStarLite::new(g, c(1, 1), c(8, 8), []).unwrap();
        let mut f = OccupancyForecast::new();
        f.insert(0, c(1, 1));
        f.insert(2, c(8, 8));
        let delta = p.update_obstacles(&f, &BTreeSet::new());
        assert!(delta.is_empty());
        assert!(!p.is_blocked(c(1, 1)) && !p.is_blocked(c(8, 8)));
        // a pedestrian standing on the goal does block it
        p.update_obstacles(&f, &[c(8, 8)].into());
        assert!(p.is_blocked(c(8, 8)));
        assert_eq!(p.compute_shortest_path(), PathStatus::NoPath);
        // and so does a forecast for the very next step
        let mut next = OccupancyForecast::new();
        next.insert(0, c(8, 8));
        p.update_obstacles(&next, &BTreeSet::new());
        assert!(p.is_blocked(c(8, 8)));
    }

    #[test]
    fn replans_after_move_and_new_obstacle() {
        let g = grid(10, 10);
        let mut p = DStarLite::new(g, c(0, 5), c(9, 5), []).unwrap();
        p.compute_shortest_path();
        let next = p.next_move().unwrap();
        p.move_start(next).unwrap();
        let wall: BTreeSet<_> = (0..9).map(|r| c(5, r)).collect();
        p.set_blocked(&wall);
        assert_eq!(p.key_modifier(), 1);
        assert_eq!(p.compute_shortest_path(), PathStatus::PathExists);
        // from (1, y) to (9, 5) around the wall through (5, 9)
        let start = p.start();
        let expected = start.chebyshev(c(5, 9)) + c(5, 9).chebyshev(c(9, 5));
        assert_eq!(p.path_cost(), Some(u64::from(expected)));
        p.audit().unwrap();
        assert!(matches!(p.move_start(c(7, 7)), Err(PlannerError::NotAdjacent(_))));
    }
}
