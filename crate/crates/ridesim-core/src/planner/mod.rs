//! Autonomy layer: occupancy mapping, costmap inflation, Dijkstra global
//! planning, and the timed-elastic-band local planner, glued into one
//! replanning pipeline.
//!
//! The pipeline is a pure function of (map snapshot, pose snapshot, goal);
//! results land in a latest-value mailbox that the control loop reads
//! without blocking. The lockstep runner invokes a full cycle at the
//! planner period.

pub mod costmap;
pub mod dijkstra;
pub mod grid;
pub mod teb;

pub use costmap::{build_costmap, Costmap, INSCRIBED, LETHAL};
pub use dijkstra::{dijkstra_plan, plan_with_cost, PlanError};
pub use grid::{CellState, OccupancyGrid};
pub use teb::{
    pair_residual, plan_to_setpoints, segment_velocity, teb_optimize, verify_trajectory,
    PlannerLimits, TebConfig, TebError, TimedTrajectory, TrajectoryCheck,
};

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::world::{EstimatedOdometry, World};

/// Full configuration of the autonomy pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Occupancy/costmap resolution (m/cell).
    pub resolution: f64,
    /// Costmap inflation radius (m).
    pub inflation_radius: f64,
    /// Costmap exponential decay rate (1/m).
    pub decay_rate: f64,
    /// Robot body radius (m).
    pub robot_radius: f64,
    /// Replanning period (s); 10 Hz default.
    pub period: f64,
    /// Range sensor: beam count, field of view (rad), range (m), noise std.
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub scan_noise_std: f64,
    pub limits: PlannerLimits,
    pub teb: TebConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            inflation_radius: 0.6,
            decay_rate: 10.0,
            robot_radius: 0.25,
            period: 0.1,
            n_beams: 180,
            fov: std::f64::consts::TAU,
            max_range: 4.0,
            scan_noise_std: 0.0,
            limits: PlannerLimits::default(),
            teb: TebConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.resolution > 0.0) {
            return Err("planner.resolution must be > 0".into());
        }
        if !(self.period > 0.0 && self.period <= 1.0) {
            return Err("planner.period must be in (0, 1] s".into());
        }
        if self.n_beams == 0 {
            return Err("planner.n_beams must be >= 1".into());
        }
        if !(self.max_range > 0.0) {
            return Err("planner.max_range must be > 0".into());
        }
        if !(self.scan_noise_std >= 0.0) {
            return Err("planner.scan_noise_std must be >= 0".into());
        }
        self.limits.validate()
    }
}

/// Why a planning cycle produced no fresh trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum CycleOutcome {
    Planned,
    GoalReached,
    GlobalFailed(PlanError),
    LocalFailed(TebError),
}

/// Latest-value mailbox: the single writer replaces the plan, readers take
/// cheap snapshots. The control loop never blocks on the planner.
#[derive(Debug, Default, Clone)]
pub struct PlanMailbox {
    latest: Option<TimedTrajectory>,
}

impl PlanMailbox {
    pub fn publish(&mut self, plan: TimedTrajectory) {
        self.latest = Some(plan);
    }

    pub fn latest(&self) -> Option<&TimedTrajectory> {
        self.latest.as_ref()
    }
}

/// The replanning pipeline with its persistent map.
#[derive(Debug, Clone)]
pub struct Planner {
    pub config: PlannerConfig,
    pub grid: OccupancyGrid,
    pub mailbox: PlanMailbox,
    scan_rng: ChaCha8Rng,
    pub cycles: usize,
    pub failures: usize,
    /// Worst wall-clock time of one full cycle (ms). Compute metric only;
    /// never part of deterministic outputs.
    pub budget_ms_max: f64,
}

impl Planner {
    /// `origin`/`width_m`/`height_m` bound the mapped region.
    pub fn new(config: PlannerConfig, origin: Vector2<f64>, width_m: f64, height_m: f64, seed: u64) -> Self {
        let width = (width_m / config.resolution).ceil() as usize;
        let height = (height_m / config.resolution).ceil() as usize;
        Self {
            grid: OccupancyGrid::unknown(width.max(1), height.max(1), config.resolution, origin),
            mailbox: PlanMailbox::default(),
            scan_rng: ChaCha8Rng::seed_from_u64(seed),
            cycles: 0,
            failures: 0,
            budget_ms_max: 0.0,
            config,
        }
    }

    /// One full sense-map-plan cycle.
    ///
    /// Scans from the true torso pose, registers at the estimated pose,
    /// rebuilds the costmap, plans globally to the goal, truncates the
    /// global path at the lookahead, and optimizes the local band. On
    /// success the mailbox gets the fresh plan stamped `now`; on failure the
    /// stale plan ages out into a safety stop.
    pub fn cycle(
        &mut self,
        world: &World,
        estimate: &EstimatedOdometry,
        goal: Vector2<f64>,
        goal_tolerance: f64,
        now: f64,
    ) -> CycleOutcome {
        let started = std::time::Instant::now();
        let outcome = self.cycle_inner(world, estimate, goal, goal_tolerance, now);
        let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        if elapsed_ms > self.budget_ms_max {
            self.budget_ms_max = elapsed_ms;
        }
        self.cycles += 1;
        if matches!(
            outcome,
            CycleOutcome::GlobalFailed(_) | CycleOutcome::LocalFailed(_)
        ) {
            self.failures += 1;
        }
        outcome
    }

    fn cycle_inner(
        &mut self,
        world: &World,
        estimate: &EstimatedOdometry,
        goal: Vector2<f64>,
        goal_tolerance: f64,
        now: f64,
    ) -> CycleOutcome {
        let cfg = self.config.clone();
        let scan = world.simulate_scan(
            world.torso_pose(),
            cfg.n_beams,
            cfg.fov,
            cfg.max_range,
            cfg.scan_noise_std,
            &mut self.scan_rng,
        );
        self.grid.update_from_scan(&scan, estimate.pose);

        if (estimate.pose.position() - goal).norm() <= goal_tolerance {
            let mut plan = TimedTrajectory {
                poses: vec![estimate.pose],
                dts: Vec::new(),
                residuals: Vec::new(),
                seed_cost: 0.0,
                final_cost: 0.0,
                fallback: false,
                created_at: now,
                start_speed: estimate.speed,
            };
            plan.created_at = now;
            self.mailbox.publish(plan);
            return CycleOutcome::GoalReached;
        }

        let costmap = build_costmap(
            &self.grid,
            cfg.inflation_radius,
            cfg.decay_rate,
            cfg.robot_radius,
        );

        let start_cell = match self.usable_cell(&costmap, estimate.pose.position()) {
            Some(c) => c,
            None => return CycleOutcome::GlobalFailed(PlanError::BlockedStart),
        };
        let goal_cell = match self.usable_cell(&costmap, goal) {
            Some(c) => c,
            None => return CycleOutcome::GlobalFailed(PlanError::BlockedGoal),
        };

        let cell_path = match dijkstra_plan(&costmap, start_cell, goal_cell) {
            Ok(p) => p,
            Err(e) => return CycleOutcome::GlobalFailed(e),
        };

        let (seed, goal_heading) =
            truncate_at_lookahead(&costmap, &cell_path, estimate.pose, cfg.limits.lookahead);

        match teb_optimize(
            &seed,
            &cfg.limits,
            &costmap,
            estimate.pose,
            estimate.speed,
            goal_heading,
            &cfg.teb,
        ) {
            Ok(mut plan) => {
                plan.created_at = now;
                self.mailbox.publish(plan);
                CycleOutcome::Planned
            }
            Err(e) => CycleOutcome::LocalFailed(e),
        }
    }

    /// Current set-points from the latest plan; zeros when stale or absent.
    pub fn setpoints(&self, now: f64) -> (f64, f64) {
        match self.mailbox.latest() {
            Some(plan) => plan_to_setpoints(plan, now, self.config.period, &self.config.limits),
            None => (0.0, 0.0),
        }
    }

    /// The cell at `p`, or the nearest non-blocked cell within twice the
    /// robot radius (the robot's own cell can sit inside the inflation
    /// ring).
    fn usable_cell(&self, costmap: &Costmap, p: Vector2<f64>) -> Option<(usize, usize)> {
        let (cx, cy) = costmap.world_to_cell(p)?;
        if !costmap.is_blocked(cx, cy) {
            return Some((cx, cy));
        }
        let radius_cells = (2.0 * costmap.robot_radius / costmap.resolution).ceil() as i64;
        let mut best: Option<(i64, (usize, usize))> = None;
        for dy in -radius_cells..=radius_cells {
            for dx in -radius_cells..=radius_cells {
                let nx = cx as i64 + dx;
                let ny = cy as i64 + dy;
                if nx < 0 || ny < 0 || nx >= costmap.width as i64 || ny >= costmap.height as i64 {
                    continue;
                }
                if costmap.is_blocked(nx as usize, ny as usize) {
                    continue;
                }
                let d2 = dx * dx + dy * dy;
                let candidate = (d2, (nx as usize, ny as usize));
                if best.is_none() || candidate < best.unwrap() {
                    best = Some(candidate);
                }
            }
        }
        best.map(|(_, c)| c)
    }
}

/// World-frame seed points along the global path, cut at the lookahead
/// distance, plus the heading of the final segment.
pub fn truncate_at_lookahead(
    costmap: &Costmap,
    cell_path: &[(usize, usize)],
    start: Pose,
    lookahead: f64,
) -> (Vec<Vector2<f64>>, f64) {
    let mut points: Vec<Vector2<f64>> = vec![start.position()];
    let mut travelled = 0.0;
    for &(x, y) in cell_path {
        let p = costmap.cell_center(x, y);
        let step = (p - points[points.len() - 1]).norm();
        if step < 1e-9 {
            continue;
        }
        if travelled + step >= lookahead {
            let remain = lookahead - travelled;
            let dir = (p - points[points.len() - 1]) / step;
            let last = points[points.len() - 1] + dir * remain;
            points.push(last);
            break;
        }
        travelled += step;
        points.push(p);
    }
    let goal_heading = if points.len() >= 2 {
        let d = points[points.len() - 1] - points[points.len() - 2];
        d.y.atan2(d.x)
    } else {
        start.heading
    };
    (points, goal_heading)
}
