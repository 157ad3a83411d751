//! Deterministic 8-connected Dijkstra search over the costmap.
//!
//! Edge weight is the step length (1 or √2 cell units) scaled by
//! `1 + cost(destination)/64`; cells at or above the inscribed cost are
//! impassable. Ties break on (distance, cell index), so the returned path
//! is identical across runs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use thiserror::Error;

use super::costmap::{Costmap, INSCRIBED};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("start cell is blocked")]
    BlockedStart,
    #[error("goal cell is blocked")]
    BlockedGoal,
    #[error("goal is unreachable from start")]
    Unreachable,
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// The 8-neighborhood with step lengths in cell units.
pub const NEIGHBORS: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT_2),
    (1, -1, SQRT_2),
    (-1, 1, SQRT_2),
    (-1, -1, SQRT_2),
];

/// Weight of entering a cell with the given cost over the given step length.
#[inline]
pub fn edge_weight(step_len: f64, dest_cost: u8) -> f64 {
    step_len * (1.0 + dest_cost as f64 / 64.0)
}

/// Minimum-cost cell path from start to goal, inclusive of both.
pub fn dijkstra_plan(
    costmap: &Costmap,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<Vec<(usize, usize)>, PlanError> {
    plan_with_cost(costmap, start, goal).map(|(path, _)| path)
}

/// Like [`dijkstra_plan`], also returning the total path cost.
pub fn plan_with_cost(
    costmap: &Costmap,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<(Vec<(usize, usize)>, f64), PlanError> {
    let (w, h) = (costmap.width, costmap.height);
    assert!(start.0 < w && start.1 < h && goal.0 < w && goal.1 < h);
    if costmap.is_blocked(start.0, start.1) {
        return Err(PlanError::BlockedStart);
    }
    if costmap.is_blocked(goal.0, goal.1) {
        return Err(PlanError::BlockedGoal);
    }
    let idx = |x: usize, y: usize| y * w + x;
    let start_i = idx(start.0, start.1);
    let goal_i = idx(goal.0, goal.1);

    let mut dist = vec![f64::INFINITY; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut settled = vec![false; w * h];
    let mut heap: BinaryHeap<Reverse<(OrderedFloat<f64>, usize)>> = BinaryHeap::new();
    dist[start_i] = 0.0;
    heap.push(Reverse((OrderedFloat(0.0), start_i)));

    while let Some(Reverse((OrderedFloat(d), i))) = heap.pop() {
        if settled[i] || d > dist[i] {
            continue;
        }
        settled[i] = true;
        if i == goal_i {
            break;
        }
        let (x, y) = (i % w, i / w);
        for &(dx, dy, step) in &NEIGHBORS {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if costmap.is_blocked(nx, ny) {
                continue;
            }
            let ni = idx(nx, ny);
            let nd = dist[i] + edge_weight(step, costmap.cost_at(nx, ny));
            if nd < dist[ni] {
                dist[ni] = nd;
                parent[ni] = i;
                heap.push(Reverse((OrderedFloat(nd), ni)));
            }
        }
    }

    if !dist[goal_i].is_finite() {
        return Err(PlanError::Unreachable);
    }
    let mut path = Vec::new();
    let mut i = goal_i;
    loop {
        path.push((i % w, i / w));
        if i == start_i {
            break;
        }
        i = parent[i];
    }
    path.reverse();
    Ok((path, dist[goal_i]))
}
