//! Timed-elastic-band local planner.
//!
//! The band is a sequence of poses with per-segment time intervals. Headings
//! are not free variables: they are chained from the segment directions so
//! that every pose pair is exactly arc-consistent (the chord bisects the two
//! headings), which keeps the nonholonomic residual at rounding level by
//! construction. The optimizer runs a deterministic alternating pose/time
//! coordinate descent with per-variable adaptive probe steps; every accepted
//! move strictly decreases the objective, so the final cost never exceeds
//! the seed cost.
//!
//! Objective terms: total time, obstacle hinge on the clearance margin,
//! kinematic (arc-consistency) residual, velocity/acceleration/yaw-rate
//! limit hinges, a forward-motion hinge that penalizes reverse longitudinal
//! velocity, and a soft goal-heading term.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::costmap::Costmap;
use crate::geometry::{wrap_angle, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TebError {
    #[error("no feasible trajectory: {reason}")]
    NoFeasibleTrajectory { reason: String },
    #[error("empty seed path")]
    EmptySeed,
}

/// Kinodynamic limits for the local planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerLimits {
    /// Speed ceiling (m/s).
    pub max_speed: f64,
    /// Forward-motion floor (m/s); longitudinal speeds below it are
    /// penalized, encoding the forward bias (0 = reverse discouraged but
    /// not forbidden).
    pub min_speed: f64,
    /// Acceleration ceiling (m/s²).
    pub max_accel: f64,
    /// Yaw-rate ceiling (rad/s).
    pub max_yaw_rate: f64,
    /// How far ahead of the robot the band reaches (m).
    pub lookahead: f64,
    /// Required clearance between the robot body and obstacles (m).
    pub clearance_margin: f64,
}

impl Default for PlannerLimits {
    fn default() -> Self {
        Self {
            max_speed: 1.0,
            min_speed: 0.0,
            max_accel: 1.0,
            max_yaw_rate: 1.0,
            lookahead: 1.75,
            clearance_margin: 0.15,
        }
    }
}

impl PlannerLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_speed > 0.0
            && self.min_speed >= 0.0
            && self.max_accel > 0.0
            && self.max_yaw_rate > 0.0
            && self.lookahead > 0.0
            && self.clearance_margin >= 0.0)
        {
            return Err("planner limits must be positive (min_speed/margin >= 0)".into());
        }
        Ok(())
    }
}

/// Optimizer weights and iteration bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TebConfig {
    pub weight_time: f64,
    pub weight_obstacle: f64,
    pub weight_kinematic: f64,
    pub weight_velocity: f64,
    pub weight_accel: f64,
    pub weight_yaw_rate: f64,
    pub weight_forward: f64,
    pub weight_goal_heading: f64,
    /// Extra activation distance above the clearance margin for the
    /// obstacle hinge (m); gives the optimizer room before the hard limit.
    pub obstacle_buffer: f64,
    /// Band size cap.
    pub max_poses: usize,
    /// Descent sweep cap.
    pub max_iterations: usize,
    /// Relative improvement per sweep below which descent stops.
    pub convergence_tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Retries with a relaxed (scaled-up) time grid when hard checks fail.
    pub relax_retries: usize,
}

impl Default for TebConfig {
    fn default() -> Self {
        Self {
            weight_time: 1.0,
            weight_obstacle: 150.0,
            weight_kinematic: 10.0,
            weight_velocity: 50.0,
            weight_accel: 10.0,
            weight_yaw_rate: 10.0,
            weight_forward: 100.0,
            weight_goal_heading: 0.5,
            obstacle_buffer: 0.10,
            max_poses: 40,
            max_iterations: 50,
            convergence_tol: 1e-4,
            dt_min: 1e-3,
            dt_max: 2.0,
            relax_retries: 3,
        }
    }
}

/// Fraction of each limit the soft hinges aim below, so the hard checks
/// pass with margin after descent.
const LIMIT_HEADROOM: f64 = 0.99;

/// Optimized time-parameterized trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedTrajectory {
    pub poses: Vec<Pose>,
    /// Time interval per consecutive pose pair (s); `len = poses.len() - 1`.
    pub dts: Vec<f64>,
    /// Arc-consistency residual per pose pair (m).
    pub residuals: Vec<f64>,
    /// Objective value of the seed band.
    pub seed_cost: f64,
    /// Objective value of the returned band.
    pub final_cost: f64,
    /// True when the feasibility rescue (time rescaling) was needed after
    /// descent; the returned band still satisfies the hard checks.
    pub fallback: bool,
    /// Sim time the plan was created (filled by the planning pipeline).
    pub created_at: f64,
    /// Robot speed at the band start, used for the first accel check.
    pub start_speed: f64,
}

impl TimedTrajectory {
    pub fn total_time(&self) -> f64 {
        self.dts.iter().sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.poses.len() < 2
    }
}

/// Lateral deviation of the chord from the mean-heading direction — zero
/// exactly when the pose pair lies on a circular arc.
pub fn pair_residual(a: &Pose, b: &Pose) -> f64 {
    let d = b.position() - a.position();
    if d.norm() < 1e-12 {
        return 0.0;
    }
    let mean = a.heading + wrap_angle(b.heading - a.heading) / 2.0;
    -d.x * mean.sin() + d.y * mean.cos()
}

/// Signed longitudinal velocity of segment `a -> b` over `dt`.
pub fn segment_velocity(a: &Pose, b: &Pose, dt: f64) -> f64 {
    let d = b.position() - a.position();
    let mean = a.heading + wrap_angle(b.heading - a.heading) / 2.0;
    (d.x * mean.cos() + d.y * mean.sin()) / dt
}

/// Headings chained from segment directions: each chord bisects the heading
/// pair, which is the exact unicycle arc relation. Reverse segments keep
/// the heading continuous (the wrap keeps deltas in (−π, π]).
fn chain_headings(positions: &[Vector2<f64>], start_heading: f64) -> Vec<f64> {
    let n = positions.len();
    let mut headings = vec![start_heading; n];
    for i in 0..n - 1 {
        let d = positions[i + 1] - positions[i];
        if d.norm() < 1e-12 {
            headings[i + 1] = headings[i];
        } else {
            let gamma = d.y.atan2(d.x);
            headings[i + 1] = headings[i] + wrap_angle(2.0 * gamma - 2.0 * headings[i]);
        }
    }
    headings
}

struct Band<'a> {
    positions: Vec<Vector2<f64>>,
    /// log(dt) per segment.
    log_dts: Vec<f64>,
    start_heading: f64,
    goal_heading: f64,
    start_speed: f64,
    costmap: &'a Costmap,
    limits: &'a PlannerLimits,
    config: &'a TebConfig,
}

impl Band<'_> {
    fn n_segments(&self) -> usize {
        self.positions.len() - 1
    }

    fn dts(&self) -> Vec<f64> {
        self.log_dts.iter().map(|s| s.exp()).collect()
    }

    /// Full objective over the band.
    fn cost(&self) -> f64 {
        let headings = chain_headings(&self.positions, self.start_heading);
        self.cost_with_headings(&headings)
    }

    fn cost_with_headings(&self, headings: &[f64]) -> f64 {
        let cfg = self.config;
        let lim = self.limits;
        let n = self.n_segments();
        let dts = self.dts();
        let hinge = |v: f64| v.max(0.0);

        let mut total = 0.0;

        // Total transition time.
        total += cfg.weight_time * dts.iter().sum::<f64>();

        // Obstacle hinge per interior pose (endpoints are pinned).
        let activation = lim.clearance_margin + cfg.obstacle_buffer + self.costmap.robot_radius;
        for p in &self.positions[1..self.positions.len() - 1] {
            let d = self.costmap.distance_at(*p);
            total += cfg.weight_obstacle * hinge(activation - d).powi(2);
        }

        // Per-segment kinematic, velocity, yaw-rate, and forward terms.
        let mut velocities = Vec::with_capacity(n);
        for i in 0..n {
            let d = self.positions[i + 1] - self.positions[i];
            let chord = d.norm();
            let mean = headings[i] + wrap_angle(headings[i + 1] - headings[i]) / 2.0;
            let lateral = -d.x * mean.sin() + d.y * mean.cos();
            let v_long = (d.x * mean.cos() + d.y * mean.sin()) / dts[i];
            velocities.push(v_long);

            total += cfg.weight_kinematic * lateral * lateral;
            total += cfg.weight_velocity
                * hinge(chord / dts[i] - LIMIT_HEADROOM * lim.max_speed).powi(2);
            let yaw_rate = wrap_angle(headings[i + 1] - headings[i]).abs() / dts[i];
            total += cfg.weight_yaw_rate
                * hinge(yaw_rate - LIMIT_HEADROOM * lim.max_yaw_rate).powi(2);
            total += cfg.weight_forward * hinge(lim.min_speed - v_long).powi(2);
        }

        // Acceleration hinges between neighbouring segments plus the start.
        let accel_cost = |dv: f64, dt: f64| {
            let a = (dv / dt).abs();
            cfg.weight_accel * hinge(a - LIMIT_HEADROOM * lim.max_accel).powi(2)
        };
        if n > 0 {
            total += accel_cost(velocities[0] - self.start_speed, dts[0]);
        }
        for i in 0..n.saturating_sub(1) {
            total += accel_cost(
                velocities[i + 1] - velocities[i],
                (dts[i] + dts[i + 1]) / 2.0,
            );
        }

        // Soft goal heading.
        total += cfg.weight_goal_heading
            * wrap_angle(headings[n] - self.goal_heading).powi(2);

        total
    }

    /// One alternating pose/time descent sweep. Probes each coordinate at
    /// ±step, keeps strictly improving moves, and adapts the per-variable
    /// step. Returns the cost after the sweep.
    fn sweep(
        &mut self,
        pos_steps: &mut [Vector2<f64>],
        dt_steps: &mut [f64],
        mut current: f64,
    ) -> f64 {
        let n_interior = self.positions.len() - 2;
        // Pose pass.
        for i in 0..n_interior {
            let idx = i + 1;
            for axis in 0..2 {
                let step = if axis == 0 {
                    pos_steps[i].x
                } else {
                    pos_steps[i].y
                };
                let original = self.positions[idx][axis];
                let mut best = current;
                let mut best_val = original;
                for probe in [original + step, original - step] {
                    self.positions[idx][axis] = probe;
                    let c = self.cost();
                    if c < best {
                        best = c;
                        best_val = probe;
                    }
                }
                self.positions[idx][axis] = best_val;
                let adapted = if best < current {
                    (step * 1.5).min(0.3)
                } else {
                    (step * 0.5).max(1e-5)
                };
                if axis == 0 {
                    pos_steps[i].x = adapted;
                } else {
                    pos_steps[i].y = adapted;
                }
                current = best;
            }
        }
        // Time pass.
        let (s_min, s_max) = (self.config.dt_min.ln(), self.config.dt_max.ln());
        for i in 0..self.n_segments() {
            let step = dt_steps[i];
            let original = self.log_dts[i];
            let mut best = current;
            let mut best_val = original;
            for probe in [
                (original + step).clamp(s_min, s_max),
                (original - step).clamp(s_min, s_max),
            ] {
                if probe == original {
                    continue;
                }
                self.log_dts[i] = probe;
                let c = self.cost();
                if c < best {
                    best = c;
                    best_val = probe;
                }
            }
            self.log_dts[i] = best_val;
            dt_steps[i] = if best < current {
                (step * 1.5).min(1.0)
            } else {
                (step * 0.5).max(1e-6)
            };
            current = best;
        }
        current
    }

    fn to_trajectory(&self) -> (Vec<Pose>, Vec<f64>) {
        let headings = chain_headings(&self.positions, self.start_heading);
        let poses: Vec<Pose> = self
            .positions
            .iter()
            .zip(headings.iter())
            .map(|(p, h)| Pose::new(p.x, p.y, *h))
            .collect();
        (poses, self.dts())
    }
}

/// Independent post-hoc verification of the hard trajectory contracts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryCheck {
    pub max_residual: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    /// Minimum body clearance above the robot radius (m).
    pub min_clearance: f64,
}

impl TrajectoryCheck {
    pub fn passes(&self, limits: &PlannerLimits) -> bool {
        self.max_residual < 1e-6
            && self.max_speed <= limits.max_speed
            && self.max_accel <= limits.max_accel
            && self.min_clearance >= limits.clearance_margin
    }
}

/// Recompute the hard-check quantities from the returned poses and times.
pub fn verify_trajectory(
    poses: &[Pose],
    dts: &[f64],
    start_speed: f64,
    costmap: &Costmap,
) -> TrajectoryCheck {
    let mut check = TrajectoryCheck {
        max_residual: 0.0,
        max_speed: 0.0,
        max_accel: 0.0,
        min_clearance: f64::INFINITY,
    };
    let mut velocities = Vec::with_capacity(dts.len());
    for i in 0..dts.len() {
        let r = pair_residual(&poses[i], &poses[i + 1]).abs();
        check.max_residual = check.max_residual.max(r);
        let chord = (poses[i + 1].position() - poses[i].position()).norm();
        check.max_speed = check.max_speed.max(chord / dts[i]);
        velocities.push(segment_velocity(&poses[i], &poses[i + 1], dts[i]));
    }
    if !dts.is_empty() {
        check.max_accel = ((velocities[0] - start_speed) / dts[0]).abs();
    }
    for i in 0..dts.len().saturating_sub(1) {
        let a = ((velocities[i + 1] - velocities[i]) / ((dts[i] + dts[i + 1]) / 2.0)).abs();
        check.max_accel = check.max_accel.max(a);
    }
    for p in poses {
        let c = costmap.distance_at(p.position()) - costmap.robot_radius;
        check.min_clearance = check.min_clearance.min(c);
    }
    check
}

/// Optimize a timed trajectory along a seed path.
///
/// The band start is pinned to `start` (current estimated pose) with
/// `start_speed`; the final position is pinned to the seed's last point;
/// the final heading is soft. Descent runs until the relative improvement
/// per sweep drops below the tolerance or the sweep cap, then the hard
/// checks run; velocity/acceleration violations trigger a deterministic
/// time-rescaling rescue (flagged `fallback`), clearance violations trigger
/// relaxed-retry descents and finally an error.
pub fn teb_optimize(
    seed_path: &[Vector2<f64>],
    limits: &PlannerLimits,
    costmap: &Costmap,
    start: Pose,
    start_speed: f64,
    goal_heading: f64,
    config: &TebConfig,
) -> Result<TimedTrajectory, TebError> {
    if seed_path.is_empty() {
        return Err(TebError::EmptySeed);
    }

    // Degenerate band: already at the goal.
    let goal = seed_path[seed_path.len() - 1];
    if (goal - start.position()).norm() < 1e-6 || seed_path.len() == 1 {
        return Ok(TimedTrajectory {
            poses: vec![start],
            dts: Vec::new(),
            residuals: Vec::new(),
            seed_cost: 0.0,
            final_cost: 0.0,
            fallback: false,
            created_at: 0.0,
            start_speed,
        });
    }

    let positions = seed_positions(seed_path, start.position(), config.max_poses);
    let seed_dts: Vec<f64> = positions
        .windows(2)
        .map(|w| {
            let chord = (w[1] - w[0]).norm();
            (chord / (0.5 * limits.max_speed)).max(config.dt_min)
        })
        .collect();

    let mut band = Band {
        positions,
        log_dts: seed_dts.iter().map(|d| d.ln()).collect(),
        start_heading: start.heading,
        goal_heading,
        start_speed,
        costmap,
        limits,
        config,
    };
    let seed_cost = band.cost();

    let mut final_cost = descend(&mut band, seed_cost);
    let mut fallback = false;

    for attempt in 0..=config.relax_retries {
        let (poses, dts) = band.to_trajectory();
        let check = verify_trajectory(&poses, &dts, start_speed, costmap);
        if check.passes(limits) {
            return Ok(finish(band, poses, dts, seed_cost, final_cost, fallback, start_speed));
        }
        if check.min_clearance < limits.clearance_margin {
            if attempt == config.relax_retries {
                return Err(TebError::NoFeasibleTrajectory {
                    reason: format!(
                        "clearance {:.3} m below margin {:.3} m after retries",
                        check.min_clearance, limits.clearance_margin
                    ),
                });
            }
            // Relax the time grid and descend again with the obstacle term
            // dominating (more iterations spent pushing the band away).
            for s in band.log_dts.iter_mut() {
                *s = (*s + 0.2_f64.ln().abs()).min(config.dt_max.ln());
            }
            final_cost = descend(&mut band, band.cost());
            continue;
        }
        // Velocity or acceleration violation: deterministic time rescaling.
        fallback = true;
        rescale_times(&mut band, limits, config);
        final_cost = band.cost();
        let (poses, dts) = band.to_trajectory();
        let check = verify_trajectory(&poses, &dts, start_speed, costmap);
        if check.passes(limits) {
            return Ok(finish(band, poses, dts, seed_cost, final_cost, fallback, start_speed));
        }
        if attempt == config.relax_retries {
            return Err(TebError::NoFeasibleTrajectory {
                reason: format!(
                    "limits violated after rescaling: speed {:.3}, accel {:.3}, clearance {:.3}",
                    check.max_speed, check.max_accel, check.min_clearance
                ),
            });
        }
    }
    unreachable!("retry loop returns or errors");
}

fn finish(
    band: Band<'_>,
    poses: Vec<Pose>,
    dts: Vec<f64>,
    seed_cost: f64,
    final_cost: f64,
    fallback: bool,
    start_speed: f64,
) -> TimedTrajectory {
    let residuals: Vec<f64> = poses
        .windows(2)
        .map(|w| pair_residual(&w[0], &w[1]).abs())
        .collect();
    let _ = band;
    TimedTrajectory {
        poses,
        dts,
        residuals,
        seed_cost,
        final_cost,
        fallback,
        created_at: 0.0,
        start_speed,
    }
}

fn descend(band: &mut Band<'_>, start_cost: f64) -> f64 {
    let n_interior = band.positions.len().saturating_sub(2);
    let mut pos_steps =
        vec![Vector2::new(band.costmap.resolution, band.costmap.resolution); n_interior];
    let mut dt_steps = vec![0.3f64; band.n_segments()];
    let mut cost = start_cost;
    for _ in 0..band.config.max_iterations {
        let next = band.sweep(&mut pos_steps, &mut dt_steps, cost);
        let improvement = (cost - next) / cost.abs().max(1e-12);
        cost = next;
        if improvement < band.config.convergence_tol {
            break;
        }
    }
    cost
}

/// Deterministic feasibility rescue: floor each dt at the speed limit,
/// then stretch neighbouring intervals until the acceleration chain fits.
fn rescale_times(band: &mut Band<'_>, limits: &PlannerLimits, config: &TebConfig) {
    let chords: Vec<f64> = band
        .positions
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .collect();
    let mut dts = band.dts();
    for (dt, chord) in dts.iter_mut().zip(chords.iter()) {
        *dt = dt.max(chord / (LIMIT_HEADROOM * limits.max_speed));
    }
    for _ in 0..100 {
        let headings = chain_headings(&band.positions, band.start_heading);
        let poses: Vec<Pose> = band
            .positions
            .iter()
            .zip(headings.iter())
            .map(|(p, h)| Pose::new(p.x, p.y, *h))
            .collect();
        let velocities: Vec<f64> = (0..dts.len())
            .map(|i| segment_velocity(&poses[i], &poses[i + 1], dts[i]))
            .collect();
        let mut worst: Option<usize> = None;
        let mut worst_a = LIMIT_HEADROOM * limits.max_accel;
        if !dts.is_empty() {
            let a0 = ((velocities[0] - band.start_speed) / dts[0]).abs();
            if a0 > worst_a {
                worst_a = a0;
                worst = Some(0);
            }
        }
        for i in 0..dts.len().saturating_sub(1) {
            let a = ((velocities[i + 1] - velocities[i]) / ((dts[i] + dts[i + 1]) / 2.0)).abs();
            if a > worst_a {
                worst_a = a;
                worst = Some(i + 1);
            }
        }
        match worst {
            None => break,
            Some(0) => dts[0] *= 1.1,
            Some(i) => {
                dts[i - 1] *= 1.05;
                dts[i] *= 1.05;
            }
        }
    }
    band.log_dts = dts
        .iter()
        .map(|d| d.clamp(config.dt_min, config.dt_max).ln())
        .collect();
}

/// Resample the seed polyline into at most `max_poses` points, first point
/// replaced by the robot position.
fn seed_positions(
    seed_path: &[Vector2<f64>],
    start: Vector2<f64>,
    max_poses: usize,
) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = Vec::with_capacity(seed_path.len() + 1);
    pts.push(start);
    for p in seed_path {
        if (p - pts[pts.len() - 1]).norm() > 1e-9 {
            pts.push(*p);
        }
    }
    if pts.len() <= max_poses.max(2) {
        return pts;
    }
    // Even arc-length resampling down to the cap, endpoints preserved.
    let mut cum = vec![0.0f64];
    for w in pts.windows(2) {
        cum.push(cum[cum.len() - 1] + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let n = max_poses;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-12);
        let f = ((target - cum[seg]) / span).clamp(0.0, 1.0);
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * f);
    }
    out
}

/// Set-points extracted from the first trajectory segment, or a safety stop
/// when the plan is stale or trivial.
pub fn plan_to_setpoints(
    traj: &TimedTrajectory,
    now: f64,
    planner_period: f64,
    limits: &PlannerLimits,
) -> (f64, f64) {
    if traj.is_trivial() || now - traj.created_at > 3.0 * planner_period {
        return (0.0, 0.0);
    }
    let dt = traj.dts[0];
    let v = segment_velocity(&traj.poses[0], &traj.poses[1], dt)
        .clamp(-limits.max_speed, limits.max_speed)
        .clamp(-crate::control::MAX_SPEED_COMMAND, crate::control::MAX_SPEED_COMMAND);
    let yaw_rate = (wrap_angle(traj.poses[1].heading - traj.poses[0].heading) / dt)
        .clamp(-limits.max_yaw_rate, limits.max_yaw_rate)
        .clamp(
            -crate::control::MAX_YAW_RATE_COMMAND,
            crate::control::MAX_YAW_RATE_COMMAND,
        );
    (v, yaw_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::costmap::build_costmap;
    use crate::planner::grid::{CellState, OccupancyGrid};
    use approx::assert_relative_eq;

    fn open_costmap() -> Costmap {
        let g = OccupancyGrid::free(100, 60, 0.05, Vector2::new(-0.5, -1.5));
        build_costmap(&g, 0.6, 10.0, 0.25)
    }

    fn straight_seed(len: f64, n: usize) -> Vec<Vector2<f64>> {
        (0..n)
            .map(|i| Vector2::new(len * i as f64 / (n - 1) as f64, 0.0))
            .collect()
    }

    #[test]
    fn start_at_goal_returns_trivial_zero_cost() {
        let cm = open_costmap();
        let limits = PlannerLimits::default();
        let traj = teb_optimize(
            &[Vector2::new(0.0, 0.0)],
            &limits,
            &cm,
            Pose::new(0.0, 0.0, 0.0),
            0.0,
            0.0,
            &TebConfig::default(),
        )
        .unwrap();
        assert!(traj.is_trivial());
        assert_eq!(traj.final_cost, 0.0);
        assert_eq!(traj.total_time(), 0.0);
    }

    #[test]
    fn empty_corridor_reaches_time_optimal_cruise() {
        let cm = open_costmap();
        let limits = PlannerLimits {
            max_speed: 1.0,
            max_accel: 20.0,
            max_yaw_rate: 2.0,
            ..Default::default()
        };
        let traj = teb_optimize(
            &straight_seed(1.75, 21),
            &limits,
            &cm,
            Pose::new(0.0, 0.0, 0.0),
            1.0,
            0.0,
            &TebConfig::default(),
        )
        .unwrap();
        let optimal = 1.75 / limits.max_speed;
        let total = traj.total_time();
        assert!(
            (total - optimal).abs() / optimal < 0.05,
            "total time {total:.3} vs optimal {optimal:.3}"
        );
        assert!(traj.final_cost <= traj.seed_cost);
    }

    #[test]
    fn hard_contracts_hold_on_accepted_trajectories() {
        let cm = open_costmap();
        let limits = PlannerLimits::default();
        let traj = teb_optimize(
            &straight_seed(1.75, 21),
            &limits,
            &cm,
            Pose::new(0.0, 0.0, 0.1),
            0.3,
            0.0,
            &TebConfig::default(),
        )
        .unwrap();
        let check = verify_trajectory(&traj.poses, &traj.dts, 0.3, &cm);
        assert!(check.max_residual < 1e-6, "residual {}", check.max_residual);
        assert!(check.max_speed <= limits.max_speed);
        assert!(check.max_accel <= limits.max_accel);
        assert!(check.min_clearance >= limits.clearance_margin);
        assert!(traj.dts.iter().all(|&dt| dt > 0.0));
    }

    #[test]
    fn obstacle_in_corridor_keeps_clearance() {
        let mut g = OccupancyGrid::free(100, 60, 0.05, Vector2::new(-0.5, -1.5));
        // Block a post near the corridor center.
        for (x, y) in [(20, 30), (21, 30), (20, 29), (21, 29)] {
            g.set(x, y, CellState::Occupied);
        }
        let cm = build_costmap(&g, 0.6, 10.0, 0.15);
        let limits = PlannerLimits {
            clearance_margin: 0.1,
            max_yaw_rate: 2.0,
            ..Default::default()
        };
        // Seed passes right next to the post (post center ≈ (0.55, 0.0)).
        let traj = teb_optimize(
            &straight_seed(1.75, 21),
            &limits,
            &cm,
            Pose::new(0.0, 0.0, 0.0),
            0.5,
            0.0,
            &TebConfig::default(),
        )
        .unwrap();
        let check = verify_trajectory(&traj.poses, &traj.dts, 0.5, &cm);
        assert!(
            check.min_clearance >= limits.clearance_margin,
            "clearance {:.3}",
            check.min_clearance
        );
        assert!(traj.final_cost <= traj.seed_cost);
    }

    #[test]
    fn descent_is_monotone_on_perturbed_seeds() {
        let cm = open_costmap();
        let limits = PlannerLimits::default();
        for k in 0..8 {
            let mut seed = straight_seed(1.6, 18);
            for (i, p) in seed.iter_mut().enumerate() {
                p.y += 0.08 * ((i as f64 * 0.9 + k as f64) % 3.0 - 1.0);
            }
            let traj = teb_optimize(
                &seed,
                &limits,
                &cm,
                Pose::new(0.0, 0.0, 0.0),
                0.4,
                0.0,
                &TebConfig::default(),
            )
            .unwrap();
            assert!(
                traj.final_cost <= traj.seed_cost,
                "seed {k}: {} > {}",
                traj.final_cost,
                traj.seed_cost
            );
        }
    }

    #[test]
    fn residuals_are_rounding_level_by_construction() {
        let cm = open_costmap();
        let limits = PlannerLimits {
            max_yaw_rate: 2.0,
            ..Default::default()
        };
        // A curved seed.
        let seed: Vec<Vector2<f64>> = (0..20)
            .map(|i| {
                let s = i as f64 / 19.0 * 1.5;
                Vector2::new(s, 0.3 * (s * 2.0).sin())
            })
            .collect();
        let traj = teb_optimize(
            &seed,
            &limits,
            &cm,
            Pose::new(0.0, 0.0, 0.5),
            0.3,
            0.0,
            &TebConfig::default(),
        )
        .unwrap();
        for r in &traj.residuals {
            assert!(*r < 1e-9, "residual {r}");
        }
    }

    #[test]
    fn setpoints_from_first_segment() {
        let traj = TimedTrajectory {
            poses: vec![Pose::new(0.0, 0.0, 0.0), Pose::new(0.1, 0.0, 0.0)],
            dts: vec![0.1],
            residuals: vec![0.0],
            seed_cost: 1.0,
            final_cost: 1.0,
            fallback: false,
            created_at: 0.0,
            start_speed: 0.0,
        };
        let limits = PlannerLimits {
            max_speed: 2.0,
            ..Default::default()
        };
        let (v, w) = plan_to_setpoints(&traj, 0.05, 0.1, &limits);
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        assert_eq!(w, 0.0);
    }

    #[test]
    fn left_arc_gives_positive_yaw_rate() {
        let traj = TimedTrajectory {
            poses: vec![Pose::new(0.0, 0.0, 0.0), Pose::new(0.1, 0.01, 0.2)],
            dts: vec![0.1],
            residuals: vec![0.0],
            seed_cost: 1.0,
            final_cost: 1.0,
            fallback: false,
            created_at: 0.0,
            start_speed: 0.0,
        };
        let (_, w) = plan_to_setpoints(&traj, 0.0, 0.1, &PlannerLimits::default());
        assert!(w > 0.0);
    }

    #[test]
    fn stale_plan_commands_a_stop() {
        let traj = TimedTrajectory {
            poses: vec![Pose::new(0.0, 0.0, 0.0), Pose::new(0.1, 0.0, 0.0)],
            dts: vec![0.1],
            residuals: vec![0.0],
            seed_cost: 1.0,
            final_cost: 1.0,
            fallback: false,
            created_at: 0.0,
            start_speed: 0.0,
        };
        let limits = PlannerLimits::default();
        assert_eq!(plan_to_setpoints(&traj, 0.31, 0.1, &limits), (0.0, 0.0));
        assert_ne!(plan_to_setpoints(&traj, 0.29, 0.1, &limits), (0.0, 0.0));
    }

    #[test]
    fn infeasible_when_walled_in() {
        // Obstacles tight around the whole band: clearance can't be met.
        let mut g = OccupancyGrid::free(60, 40, 0.05, Vector2::new(-0.5, -1.0));
        for x in 0..60 {
            for y in 0..40 {
                let p = OccupancyGrid::free(1, 1, 1.0, Vector2::zeros());
                let _ = p;
                let cx = -0.5 + (x as f64 + 0.5) * 0.05;
                let cy = -1.0 + (y as f64 + 0.5) * 0.05;
                if cy.abs() > 0.08 && (0.2..=1.4).contains(&cx) {
                    g.set(x, y, CellState::Occupied);
                }
            }
        }
        let cm = build_costmap(&g, 0.6, 10.0, 0.2);
        let limits = PlannerLimits {
            clearance_margin: 0.2,
            ..Default::default()
        };
        let r = teb_optimize(
            &straight_seed(1.5, 16),
            &limits,
            &cm,
            Pose::new(0.0, 0.0, 0.0),
            0.3,
            0.0,
            &TebConfig::default(),
        );
        assert!(matches!(r, Err(TebError::NoFeasibleTrajectory { .. })));
    }
}
