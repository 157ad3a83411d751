//! Scenario world: co-simulation of both platforms and the rider on flat
//! ground, a static obstacle field, disturbance injection, the simulated
//! planar range sensor, and the noise-injected odometry estimator.
//!
//! A single owner advances the world tick by tick; everything else works on
//! immutable snapshots. All randomness is seeded, so identical (scenario,
//! seed) pairs produce bit-identical trajectories.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlCommand;
use crate::geometry::{rotate, ConvexPolygon, Pose};
use crate::platform::{
    self, PlatformFault, PlatformInput, PlatformParams, PlatformState,
};
use crate::rider::{
    self, channels_to_contacts, foot_kinematics, FootChannel, RiderFault, RiderParams,
    RiderState, LEFT, RIGHT,
};

/// Fatal simulation faults. Any of these ends the run with a state record.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimFault {
    #[error("t={t:.3}s: {fault} (platform {side})")]
    Platform {
        t: f64,
        side: &'static str,
        fault: PlatformFault,
    },
    #[error("t={t:.3}s: {fault}")]
    Rider { t: f64, fault: RiderFault },
}

impl SimFault {
    pub fn kind(&self) -> &'static str {
        match self {
            SimFault::Platform {
                fault: PlatformFault::TipOver { .. },
                ..
            } => "tip_over",
            SimFault::Platform {
                fault: PlatformFault::NumericalDivergence,
                ..
            } => "numerical_divergence",
            SimFault::Rider {
                fault: RiderFault::Fell { .. },
                ..
            } => "rider_fell",
            SimFault::Rider { .. } => "numerical_divergence",
        }
    }

    pub fn time(&self) -> f64 {
        match self {
            SimFault::Platform { t, .. } | SimFault::Rider { t, .. } => *t,
        }
    }
}

/// Where an impulse lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceTarget {
    PlatformLeft,
    PlatformRight,
    Rider,
}

/// A world-frame impulse applied exactly once at the first tick at or after
/// the trigger time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub target: DisturbanceTarget,
    /// Impulse (N·s) in the world frame.
    pub impulse: [f64; 2],
    /// Trigger time (s).
    pub t: f64,
}

/// One static obstacle. Low obstacles sit under the rider's body plane:
/// the feet must avoid them but the torso passes over, and they are below
/// the scan plane of the range sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub polygon: ConvexPolygon,
    pub low: bool,
}

impl Obstacle {
    pub fn tall(polygon: ConvexPolygon) -> Self {
        Self {
            polygon,
            low: false,
        }
    }

    pub fn low(polygon: ConvexPolygon) -> Self {
        Self {
            polygon,
            low: true,
        }
    }
}

/// Simulated planar range scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub origin: Pose,
    /// Absolute beam angles in the world frame (rad).
    pub angles: Vec<f64>,
    /// Measured ranges (m); `max_range` where the beam hit nothing.
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl RangeScan {
    /// World-frame hit point of beam `i` (also defined for max-range beams).
    pub fn hit_point(&self, i: usize) -> Vector2<f64> {
        self.origin.position()
            + Vector2::new(self.angles[i].cos(), self.angles[i].sin()) * self.ranges[i]
    }

    pub fn is_hit(&self, i: usize) -> bool {
        self.ranges[i] < self.max_range - 1e-12
    }
}

/// The full simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub platforms: [PlatformState; 2],
    pub rider: RiderState,
    pub feet: [FootChannel; 2],
    pub obstacles: Vec<Obstacle>,
    pub time: f64,
    pub platform_params: PlatformParams,
    pub rider_params: RiderParams,
    disturbances: Vec<Disturbance>,
    applied: Vec<bool>,
    /// Worst no-side-slip residual seen over the whole run.
    pub max_nonholonomic_residual: f64,
}

impl World {
    pub fn new(
        platform_params: PlatformParams,
        rider_params: RiderParams,
        platforms: [PlatformState; 2],
        obstacles: Vec<Obstacle>,
        mut disturbances: Vec<Disturbance>,
    ) -> Self {
        disturbances.sort_by(|a, b| a.t.total_cmp(&b.t));
        let applied = vec![false; disturbances.len()];
        let mut world = Self {
            platforms,
            rider: RiderState::default(),
            feet: [FootChannel::default(); 2],
            obstacles,
            time: 0.0,
            platform_params,
            rider_params,
            disturbances,
            applied,
            max_nonholonomic_residual: 0.0,
        };
        world.rider.yaw = (world.platforms[LEFT].yaw + world.platforms[RIGHT].yaw) / 2.0;
        world.refresh_feet_kinematics();
        world
    }

    /// Default starting arrangement: platforms abreast at ±stance width.
    pub fn at_rest(platform_params: PlatformParams, rider_params: RiderParams) -> Self {
        let w = rider_params.stance_half_width;
        Self::new(
            platform_params,
            rider_params,
            [
                PlatformState::at(0.0, w, 0.0),
                PlatformState::at(0.0, -w, 0.0),
            ],
            Vec::new(),
            Vec::new(),
        )
    }

    fn refresh_feet_kinematics(&mut self) {
        let feet_pos = foot_kinematics(
            &self.platforms[LEFT],
            &self.platforms[RIGHT],
            self.rider.yaw,
        );
        for i in [LEFT, RIGHT] {
            self.feet[i].hip_yaw = self.platforms[i].yaw - self.rider.yaw;
            self.feet[i].foot_x = feet_pos[i].x;
            self.feet[i].foot_y = feet_pos[i].y;
        }
    }

    /// Feet midpoint in the world frame.
    pub fn midpoint(&self) -> Vector2<f64> {
        Vector2::new(
            (self.platforms[LEFT].x + self.platforms[RIGHT].x) / 2.0,
            (self.platforms[LEFT].y + self.platforms[RIGHT].y) / 2.0,
        )
    }

    /// Torso pose: feet midpoint plus torso yaw.
    pub fn torso_pose(&self) -> Pose {
        let mid = self.midpoint();
        Pose::new(mid.x, mid.y, self.rider.yaw)
    }

    /// Ground-truth odometry of the torso: forward speed is the mean
    /// platform speed projected on the torso heading.
    pub fn ground_truth_odometry(&self) -> EstimatedOdometry {
        let phi = self.rider.yaw;
        let speed = (self.platforms[LEFT].speed * (self.platforms[LEFT].yaw - phi).cos()
            + self.platforms[RIGHT].speed * (self.platforms[RIGHT].yaw - phi).cos())
            / 2.0;
        EstimatedOdometry {
            pose: self.torso_pose(),
            speed,
            yaw_rate: self.rider.yaw_rate,
        }
    }

    /// Longitudinal gap between the feet in the torso frame (m).
    pub fn foot_gap(&self) -> f64 {
        self.feet[LEFT].foot_x - self.feet[RIGHT].foot_x
    }

    /// Measured stance half-width: half the lateral spread of the feet.
    pub fn stance_half_width(&self) -> f64 {
        (self.feet[LEFT].foot_y - self.feet[RIGHT].foot_y) / 2.0
    }

    fn apply_due_disturbances(&mut self) {
        for i in 0..self.disturbances.len() {
            if self.applied[i] || self.time + 1e-12 < self.disturbances[i].t {
                continue;
            }
            self.applied[i] = true;
            let d = self.disturbances[i];
            let impulse = Vector2::new(d.impulse[0], d.impulse[1]);
            match d.target {
                DisturbanceTarget::PlatformLeft | DisturbanceTarget::PlatformRight => {
                    let side = if d.target == DisturbanceTarget::PlatformLeft {
                        LEFT
                    } else {
                        RIGHT
                    };
                    let heading = Vector2::new(
                        self.platforms[side].yaw.cos(),
                        self.platforms[side].yaw.sin(),
                    );
                    // The platform only moves along its heading; the lateral
                    // component is absorbed by the no-side-slip constraint.
                    let dv = impulse.dot(&heading) / self.platform_params.mass;
                    self.platforms[side].speed += dv;
                    // The feet midpoint velocity jumps by half of that; the
                    // COM keeps its inertia, so the relative offset rate
                    // jumps the opposite way.
                    let mid_dv_world = heading * (dv / 2.0);
                    self.rider.com_vel -= rotate(mid_dv_world, -self.rider.yaw);
                }
                DisturbanceTarget::Rider => {
                    self.rider.com_vel +=
                        rotate(impulse, -self.rider.yaw) / self.rider_params.mass;
                }
            }
        }
    }

    /// Advance the whole world one control tick.
    ///
    /// Order: due disturbances, command channels to platform inputs, base
    /// acceleration snapshot, platform steps, rider COM step, torso/feet
    /// kinematics, time advance.
    pub fn step(&mut self, cmd: &ControlCommand, dt: f64) -> Result<(), SimFault> {
        self.apply_due_disturbances();

        self.rider.com_target = cmd.com_target;
        for i in [LEFT, RIGHT] {
            self.feet[i].toe_torque = cmd.legs[i].toe;
            self.feet[i].hip_torque = cmd.legs[i].hip_yaw;
        }
        let inputs = channels_to_contacts(
            &self.feet,
            &self.rider_params,
            self.rider.com,
            &self.platform_params,
        );

        let base_accel = self.base_acceleration(&inputs);

        let side_name = ["left", "right"];
        for i in [LEFT, RIGHT] {
            self.platforms[i] =
                platform::step(&self.platforms[i], &inputs[i], &self.platform_params, dt)
                    .map_err(|fault| SimFault::Platform {
                        t: self.time,
                        side: side_name[i],
                        fault,
                    })?;
            let residual = platform::nonholonomic_residual(
                &self.platforms[i],
                &inputs[i],
                &self.platform_params,
            )
            .abs();
            if residual > self.max_nonholonomic_residual {
                self.max_nonholonomic_residual = residual;
            }
        }

        self.rider = rider::com_dynamics_step(&self.rider, &self.rider_params, base_accel, dt)
            .map_err(|fault| SimFault::Rider {
                t: self.time,
                fault,
            })?;

        // Torso yaw rigidly follows the mean platform heading.
        self.rider.yaw = (self.platforms[LEFT].yaw + self.platforms[RIGHT].yaw) / 2.0;
        self.rider.yaw_rate =
            (self.platforms[LEFT].yaw_rate + self.platforms[RIGHT].yaw_rate) / 2.0;

        let feet_pos = foot_kinematics(
            &self.platforms[LEFT],
            &self.platforms[RIGHT],
            self.rider.yaw,
        );
        for i in [LEFT, RIGHT] {
            let platform = self.platforms[i];
            rider::update_foot(
                &mut self.feet[i],
                &platform,
                self.rider.yaw,
                self.rider.yaw_rate,
                feet_pos[i],
                &self.rider_params,
                dt,
            );
        }

        self.time += dt;
        Ok(())
    }

    /// Acceleration of the feet midpoint in the torso frame, evaluated from
    /// the platform vector field before stepping.
    fn base_acceleration(&self, inputs: &[PlatformInput; 2]) -> Vector2<f64> {
        let mut accel_world = Vector2::zeros();
        for i in [LEFT, RIGHT] {
            let s = &self.platforms[i];
            let d = match platform::platform_derivative(s, &inputs[i], &self.platform_params) {
                Ok(d) => d,
                Err(_) => return Vector2::zeros(), // divergence surfaces in step()
            };
            let heading = Vector2::new(s.yaw.cos(), s.yaw.sin());
            let normal = Vector2::new(-s.yaw.sin(), s.yaw.cos());
            accel_world += heading * d.accel + normal * (s.speed * s.yaw_rate);
        }
        rotate(accel_world / 2.0, -self.rider.yaw)
    }

    /// Exact planar range scan against the obstacle polygons. `fov` of a
    /// full turn spreads beams evenly without duplicating the wrap; smaller
    /// fields span symmetrically about the sensor heading. Optional additive
    /// Gaussian range noise.
    pub fn simulate_scan(
        &self,
        sensor: Pose,
        n_beams: usize,
        fov: f64,
        max_range: f64,
        noise_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> RangeScan {
        assert!(n_beams >= 1 && max_range > 0.0);
        let full_circle = fov >= std::f64::consts::TAU - 1e-9;
        let angles: Vec<f64> = (0..n_beams)
            .map(|i| {
                if full_circle {
                    sensor.heading - std::f64::consts::PI
                        + std::f64::consts::TAU * i as f64 / n_beams as f64
                } else if n_beams == 1 {
                    sensor.heading
                } else {
                    sensor.heading - fov / 2.0 + fov * i as f64 / (n_beams - 1) as f64
                }
            })
            .collect();
        let origin = sensor.position();
        let ranges = angles
            .iter()
            .map(|&a| {
                let dir = Vector2::new(a.cos(), a.sin());
                let mut best = max_range;
                // Low obstacles sit under the scan plane.
                for obstacle in self.obstacles.iter().filter(|o| !o.low) {
                    if let Some(t) = obstacle.polygon.ray_intersection(origin, dir) {
                        if t < best {
                            best = t;
                        }
                    }
                }
                if noise_std > 0.0 && best < max_range {
                    let z: f64 = rng.sample(StandardNormal);
                    best = (best + z * noise_std).clamp(1e-3, max_range);
                }
                best
            })
            .collect();
        RangeScan {
            origin: sensor,
            angles,
            ranges,
            max_range,
        }
    }

    /// Exact distance from a world point to the nearest body-level (tall)
    /// obstacle boundary (0 inside). Infinite when there are none.
    pub fn obstacle_distance(&self, p: Vector2<f64>) -> f64 {
        self.obstacles
            .iter()
            .filter(|o| !o.low)
            .map(|o| o.polygon.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance to the nearest obstacle of any height; what the feet see.
    pub fn foot_obstacle_distance(&self, p: Vector2<f64>) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.polygon.distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Estimator output: the stand-in for visual-inertial odometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedOdometry {
    pub pose: Pose,
    pub speed: f64,
    pub yaw_rate: f64,
}

/// Noise and filtering configuration for the odometry estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Bypass the estimator entirely (exact feedback; unit scenarios only).
    pub ground_truth: bool,
    /// Position noise std (m).
    pub std_position: f64,
    /// Heading noise std (rad).
    pub std_heading: f64,
    /// Speed noise std (m/s).
    pub std_speed: f64,
    /// Yaw-rate noise std (rad/s).
    pub std_yaw_rate: f64,
    /// First-order low-pass time constant on speed and yaw rate (s).
    pub filter_time_constant: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ground_truth: false,
            std_position: 0.005,
            std_heading: 0.005,
            std_speed: 0.02,
            std_yaw_rate: 0.01,
            filter_time_constant: 0.05,
        }
    }
}

/// Seeded noise-injected ground truth with low-pass filtered rates.
#[derive(Debug, Clone)]
pub struct Estimator {
    config: EstimatorConfig,
    rng: ChaCha8Rng,
    speed_filter: Option<f64>,
    yaw_rate_filter: Option<f64>,
}

impl Estimator {
    pub fn new(config: EstimatorConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            speed_filter: None,
            yaw_rate_filter: None,
        }
    }

    /// One estimator tick. Noise samples are drawn in a fixed channel order
    /// (x, y, heading, speed, yaw rate) so the stream is reproducible.
    pub fn step(&mut self, truth: &EstimatedOdometry, dt: f64) -> EstimatedOdometry {
        if self.config.ground_truth {
            return *truth;
        }
        let mut draw = |std: f64| {
            let z: f64 = self.rng.sample(StandardNormal);
            z * std
        };
        let pose = Pose::new(
            truth.pose.x + draw(self.config.std_position),
            truth.pose.y + draw(self.config.std_position),
            truth.pose.heading + draw(self.config.std_heading),
        );
        let raw_speed = truth.speed + draw(self.config.std_speed);
        let raw_yaw_rate = truth.yaw_rate + draw(self.config.std_yaw_rate);

        let alpha = 1.0 - (-dt / self.config.filter_time_constant).exp();
        let speed = match self.speed_filter {
            Some(prev) => prev + (raw_speed - prev) * alpha,
            None => raw_speed,
        };
        let yaw_rate = match self.yaw_rate_filter {
            Some(prev) => prev + (raw_yaw_rate - prev) * alpha,
            None => raw_yaw_rate,
        };
        self.speed_filter = Some(speed);
        self.yaw_rate_filter = Some(yaw_rate);

        EstimatedOdometry {
            pose,
            speed,
            yaw_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlCommand;
    use approx::assert_relative_eq;

    const DT: f64 = 1e-3;

    fn quiet_world() -> World {
        World::at_rest(PlatformParams::default(), RiderParams::default())
    }

    #[test]
    fn zero_command_world_only_advances_time() {
        let mut w = quiet_world();
        let before = w.clone();
        for _ in 0..100 {
            w.step(&ControlCommand::default(), DT).unwrap();
        }
        assert_relative_eq!(w.time, 0.1, epsilon = 1e-12);
        assert_eq!(w.platforms, before.platforms);
        assert_eq!(w.rider.com, before.rider.com);
    }

    #[test]
    fn platform_impulse_changes_speed_by_impulse_over_mass() {
        let mut w = World::new(
            PlatformParams::default(),
            RiderParams::default(),
            [
                PlatformState::at(0.0, 0.2, 0.0),
                PlatformState::at(0.0, -0.2, 0.0),
            ],
            Vec::new(),
            vec![Disturbance {
                target: DisturbanceTarget::PlatformLeft,
                impulse: [6.0, 0.0],
                t: 0.0,
            }],
        );
        let v_before = w.platforms[LEFT].speed;
        w.step(&ControlCommand::default(), DT).unwrap();
        // Speed jumped by 6 N·s / 3 kg = 2 m/s at the trigger tick (the
        // free step afterwards barely changes it).
        assert_relative_eq!(w.platforms[LEFT].speed, v_before + 2.0, epsilon = 1e-9);
    }

    #[test]
    fn disturbance_applies_exactly_once() {
        let mut w = World::new(
            PlatformParams::default(),
            RiderParams::default(),
            [
                PlatformState::at(0.0, 0.2, 0.0),
                PlatformState::at(0.0, -0.2, 0.0),
            ],
            Vec::new(),
            vec![Disturbance {
                target: DisturbanceTarget::PlatformRight,
                impulse: [3.0, 0.0],
                t: 0.005,
            }],
        );
        for _ in 0..20 {
            w.step(&ControlCommand::default(), DT).unwrap();
        }
        assert_relative_eq!(w.platforms[RIGHT].speed, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_world_scan_returns_max_range() {
        let w = quiet_world();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scan = w.simulate_scan(Pose::new(0.0, 0.0, 0.0), 24, std::f64::consts::TAU, 4.0, 0.0, &mut rng);
        assert!(scan.ranges.iter().all(|&r| r == 4.0));
    }

    #[test]
    fn forward_beam_hits_box_face() {
        let mut w = quiet_world();
        w.obstacles.push(Obstacle::tall(ConvexPolygon::rect(
            Vector2::new(2.0, 0.0),
            Vector2::new(1.0, 1.0),
        )));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scan = w.simulate_scan(Pose::new(0.0, 0.0, 0.0), 1, 0.0, 4.0, 0.0, &mut rng);
        assert_relative_eq!(scan.ranges[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn obstacle_behind_does_not_affect_forward_beam() {
        let mut w = quiet_world();
        w.obstacles.push(Obstacle::tall(ConvexPolygon::rect(
            Vector2::new(-2.0, 0.0),
            Vector2::new(1.0, 1.0),
        )));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scan = w.simulate_scan(Pose::new(0.0, 0.0, 0.0), 1, 0.0, 4.0, 0.0, &mut rng);
        assert_eq!(scan.ranges[0], 4.0);
    }

    #[test]
    fn scan_hits_lie_on_obstacle_boundaries() {
        let mut w = quiet_world();
        w.obstacles.push(Obstacle::tall(ConvexPolygon::rect(
            Vector2::new(1.5, 0.4),
            Vector2::new(0.8, 0.6),
        )));
        w.obstacles.push(Obstacle::tall(ConvexPolygon::rect(
            Vector2::new(-1.0, -1.2),
            Vector2::new(0.5, 1.0),
        )));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scan = w.simulate_scan(
            Pose::new(0.1, -0.2, 0.7),
            90,
            std::f64::consts::TAU,
            5.0,
            0.0,
            &mut rng,
        );
        for i in 0..scan.angles.len() {
            let p = scan.hit_point(i);
            if scan.is_hit(i) {
                let d = w.obstacle_distance(p);
                assert!(d < 1e-9, "hit point off boundary by {d:.2e}");
            } else {
                // Max-range beams must cross no obstacle.
                for s in 0..100 {
                    let q = scan.origin.position()
                        + (p - scan.origin.position()) * (s as f64 / 100.0);
                    assert!(w.obstacles.iter().all(|o| !o.polygon.contains(q)));
                }
            }
        }
    }

    #[test]
    fn estimator_ground_truth_mode_is_exact() {
        let mut est = Estimator::new(
            EstimatorConfig {
                ground_truth: true,
                ..Default::default()
            },
            7,
        );
        let truth = EstimatedOdometry {
            pose: Pose::new(1.0, 2.0, 0.3),
            speed: 0.8,
            yaw_rate: -0.1,
        };
        assert_eq!(est.step(&truth, DT), truth);
    }

    #[test]
    fn zero_noise_pose_is_exact_and_rates_settle_exactly() {
        let cfg = EstimatorConfig {
            std_position: 0.0,
            std_heading: 0.0,
            std_speed: 0.0,
            std_yaw_rate: 0.0,
            ..Default::default()
        };
        let mut est = Estimator::new(cfg, 3);
        let truth = EstimatedOdometry {
            pose: Pose::new(0.5, -0.25, 1.1),
            speed: 1.25,
            yaw_rate: 0.4,
        };
        let mut out = est.step(&truth, DT);
        assert_eq!(out.pose, truth.pose);
        // Held constant, the filtered channels converge to the exact truth.
        for _ in 0..5000 {
            out = est.step(&truth, DT);
        }
        assert_relative_eq!(out.speed, truth.speed, epsilon = 1e-12);
        assert_relative_eq!(out.yaw_rate, truth.yaw_rate, epsilon = 1e-12);
    }

    #[test]
    fn noise_is_zero_mean_over_many_ticks() {
        let cfg = EstimatorConfig {
            std_speed: 0.02,
            ..Default::default()
        };
        let mut est = Estimator::new(cfg, 42);
        let truth = EstimatedOdometry {
            pose: Pose::new(0.0, 0.0, 0.0),
            speed: 1.0,
            yaw_rate: 0.0,
        };
        let n = 10_000;
        let mut sum = 0.0;
        // Look at the raw (unfiltered) pose channel to keep samples iid.
        let mut pose_sum = 0.0;
        for _ in 0..n {
            let out = est.step(&truth, DT);
            sum += out.speed - truth.speed;
            pose_sum += out.pose.x - truth.pose.x;
        }
        let bound = 3.0 * 0.005 / (n as f64).sqrt();
        assert!(
            (pose_sum / n as f64).abs() < bound,
            "pose noise mean {} exceeds 3σ/√n {}",
            pose_sum / n as f64,
            bound
        );
        // Filtered speed error also averages near zero (looser bound: the
        // filter correlates successive samples).
        assert!((sum / n as f64).abs() < 10.0 * bound);
    }

    #[test]
    fn filter_reaches_95_percent_in_three_time_constants() {
        let cfg = EstimatorConfig {
            std_position: 0.0,
            std_heading: 0.0,
            std_speed: 0.0,
            std_yaw_rate: 0.0,
            filter_time_constant: 0.05,
            ..Default::default()
        };
        let mut est = Estimator::new(cfg, 0);
        let zero = EstimatedOdometry {
            pose: Pose::new(0.0, 0.0, 0.0),
            speed: 0.0,
            yaw_rate: 0.0,
        };
        // Initialize the filter at zero, then step the truth to 1.
        est.step(&zero, DT);
        let one = EstimatedOdometry {
            pose: Pose::new(0.0, 0.0, 0.0),
            speed: 1.0,
            yaw_rate: 0.0,
        };
        let mut out = zero;
        for _ in 0..150 {
            out = est.step(&one, DT);
        }
        assert!(
            (out.speed - 0.95).abs() < 0.01,
            "step response at 3τ is {:.4}",
            out.speed
        );
    }

    #[test]
    fn same_seed_same_noise_stream() {
        let cfg = EstimatorConfig::default();
        let truth = EstimatedOdometry {
            pose: Pose::new(0.0, 0.0, 0.0),
            speed: 1.0,
            yaw_rate: 0.2,
        };
        let mut a = Estimator::new(cfg.clone(), 9);
        let mut b = Estimator::new(cfg, 9);
        for _ in 0..100 {
            assert_eq!(a.step(&truth, DT), b.step(&truth, DT));
        }
    }
}
