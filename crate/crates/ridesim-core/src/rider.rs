//! Reduced-order model of the bipedal rider standing on the two platforms.
//!
//! The rider is a linear inverted pendulum about the feet midpoint with a PD
//! balance regulator driving the COM offset toward a commanded offset; the
//! torso frame has its origin at the feet midpoint and its heading at the
//! torso yaw. Each foot is rigidly attached to its platform and carries two
//! actuated channels: a toe pitch torque and a hip yaw torque, which map to
//! the platform pitch/yaw inputs together with the gravitational moment of
//! the rider's weight shift.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::rotate;
use crate::platform::{ContactForce, PlatformFault, PlatformInput, PlatformParams, PlatformState};
use crate::GRAVITY;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RiderFault {
    #[error("rider fell: |com offset| = {com_norm:.3} m reached the pendulum length")]
    Fell { com_norm: f64 },
    #[error("numerical divergence: non-finite rider state")]
    NumericalDivergence,
}

/// Rider model parameters.
///
/// The balance PD gains default to a pole placement that tracks the COM
/// command critically damped at `1/com_time_constant`; explicit values in a
/// scenario file override the placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiderParams {
    /// Rider mass (kg).
    pub mass: f64,
    /// Height of the COM above the platform plane (m); the pendulum length.
    pub com_height: f64,
    /// Target time constant of the COM tracking loop (s).
    pub com_time_constant: f64,
    /// Nominal stance half-width (m).
    pub stance_half_width: f64,
    /// Balance PD proportional gain per axis (N·m/m).
    pub kp_balance: [f64; 2],
    /// Balance PD derivative gain per axis (N·m·s/m).
    pub kd_balance: [f64; 2],
    /// Toe joint compliance: deflection per unit commanded torque (rad/(N·m)).
    pub toe_compliance: f64,
    /// Time constant of the toe pitch response (s).
    pub toe_time_constant: f64,
    /// Hip yaw joint range (rad); desired hip yaw angles clamp here.
    pub hip_yaw_range: f64,
}

impl Default for RiderParams {
    fn default() -> Self {
        Self::with_derived_gains(32.0, 0.9, 0.15)
    }
}

impl RiderParams {
    /// Build params with balance gains placed from the physical constants:
    /// critically damped tracking at `1/com_time_constant`, with the
    /// pendulum's unstable gravity term cancelled and overcome.
    pub fn with_derived_gains(mass: f64, com_height: f64, com_time_constant: f64) -> Self {
        let omega = 1.0 / com_time_constant;
        let kp = mass * (com_height * omega * omega + GRAVITY);
        let kd = 2.0 * mass * com_height * omega;
        Self {
            mass,
            com_height,
            com_time_constant,
            stance_half_width: 0.2,
            kp_balance: [kp, kp],
            kd_balance: [kd, kd],
            toe_compliance: 0.02,
            toe_time_constant: 0.05,
            hip_yaw_range: 0.4,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("mass", self.mass),
            ("com_height", self.com_height),
            ("com_time_constant", self.com_time_constant),
            ("stance_half_width", self.stance_half_width),
            ("toe_compliance", self.toe_compliance),
            ("toe_time_constant", self.toe_time_constant),
            ("hip_yaw_range", self.hip_yaw_range),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("rider.{name} must be finite and > 0, got {v}"));
            }
        }
        for axis in 0..2 {
            if !(self.kp_balance[axis].is_finite() && self.kp_balance[axis] >= 0.0) {
                return Err("rider.kp_balance must be finite and >= 0".into());
            }
            if !(self.kd_balance[axis].is_finite() && self.kd_balance[axis] >= 0.0) {
                return Err("rider.kd_balance must be finite and >= 0".into());
            }
        }
        Ok(())
    }
}

/// Rider torso state. The COM offset is measured from the feet midpoint in
/// the torso frame, with the commanded offset tracked by the balance PD.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiderState {
    /// COM offset from the feet midpoint, torso frame (m).
    pub com: Vector2<f64>,
    /// COM offset rate (m/s).
    pub com_vel: Vector2<f64>,
    /// Torso yaw (rad, unwrapped).
    pub yaw: f64,
    /// Torso yaw rate (rad/s).
    pub yaw_rate: f64,
    /// Commanded COM offset (m).
    pub com_target: Vector2<f64>,
}

impl RiderState {
    pub fn is_finite(&self) -> bool {
        self.com.iter().all(|v| v.is_finite())
            && self.com_vel.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.yaw_rate.is_finite()
            && self.com_target.iter().all(|v| v.is_finite())
    }
}

/// Per-foot actuated channels and kinematic signals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootChannel {
    /// Toe pitch torque command (N·m).
    pub toe_torque: f64,
    /// Hip yaw torque command (N·m).
    pub hip_torque: f64,
    /// Toe pitch angle (rad).
    pub toe_pitch: f64,
    /// Toe pitch rate (rad/s).
    pub toe_pitch_rate: f64,
    /// Hip yaw angle (rad): platform heading minus torso heading.
    pub hip_yaw: f64,
    /// Foot position in the torso frame (m).
    pub foot_x: f64,
    pub foot_y: f64,
}

/// Index order for the per-side arrays throughout the crate.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Rigid transform of both platform origins into the torso frame (origin at
/// the feet midpoint, x-axis along the torso yaw).
pub fn foot_kinematics(
    left: &PlatformState,
    right: &PlatformState,
    torso_yaw: f64,
) -> [Vector2<f64>; 2] {
    let pl = Vector2::new(left.x, left.y);
    let pr = Vector2::new(right.x, right.y);
    let mid = (pl + pr) / 2.0;
    [
        rotate(pl - mid, -torso_yaw),
        rotate(pr - mid, -torso_yaw),
    ]
}

#[derive(Debug, Clone, Copy)]
struct ComDerivative {
    vel: Vector2<f64>,
    accel: Vector2<f64>,
}

fn com_derivative(
    com: Vector2<f64>,
    com_vel: Vector2<f64>,
    target: Vector2<f64>,
    base_accel: Vector2<f64>,
    p: &RiderParams,
) -> ComDerivative {
    let ml = p.mass * p.com_height;
    let accel = Vector2::new(
        GRAVITY / p.com_height * com.x - base_accel.x
            + (-p.kp_balance[0] * (com.x - target.x) - p.kd_balance[0] * com_vel.x) / ml,
        GRAVITY / p.com_height * com.y - base_accel.y
            + (-p.kp_balance[1] * (com.y - target.y) - p.kd_balance[1] * com_vel.y) / ml,
    );
    ComDerivative {
        vel: com_vel,
        accel,
    }
}

/// Advance the COM pendulum one step (RK4, matching the platform step size).
///
/// `base_accel` is the acceleration of the feet midpoint expressed in the
/// torso frame; it enters the offset dynamics as an inertial term. Faults
/// when the offset reaches the pendulum length.
pub fn com_dynamics_step(
    state: &RiderState,
    params: &RiderParams,
    base_accel: Vector2<f64>,
    dt: f64,
) -> Result<RiderState, RiderFault> {
    if !state.is_finite() || !base_accel.iter().all(|v| v.is_finite()) {
        return Err(RiderFault::NumericalDivergence);
    }
    let f = |com: Vector2<f64>, vel: Vector2<f64>| {
        com_derivative(com, vel, state.com_target, base_accel, params)
    };
    let k1 = f(state.com, state.com_vel);
    let k2 = f(
        state.com + k1.vel * (dt / 2.0),
        state.com_vel + k1.accel * (dt / 2.0),
    );
    let k3 = f(
        state.com + k2.vel * (dt / 2.0),
        state.com_vel + k2.accel * (dt / 2.0),
    );
    let k4 = f(state.com + k3.vel * dt, state.com_vel + k3.accel * dt);

    let com = state.com + (k1.vel + k2.vel * 2.0 + k3.vel * 2.0 + k4.vel) * (dt / 6.0);
    let com_vel =
        state.com_vel + (k1.accel + k2.accel * 2.0 + k3.accel * 2.0 + k4.accel) * (dt / 6.0);

    if !com.iter().all(|v| v.is_finite()) || !com_vel.iter().all(|v| v.is_finite()) {
        return Err(RiderFault::NumericalDivergence);
    }
    if com.norm() >= params.com_height {
        return Err(RiderFault::Fell {
            com_norm: com.norm(),
        });
    }
    Ok(RiderState {
        com,
        com_vel,
        ..*state
    })
}

/// Map the per-foot torque channels plus the rider's weight shift onto the
/// two platform inputs.
///
/// Per platform: the pitch channel is the toe torque plus the gravitational
/// moment of half the rider's weight acting at the COM's longitudinal offset
/// from that foot; the yaw channel is the hip torque. Both are saturated
/// with the platform torque limit, matching the contact-moment convention.
pub fn channels_to_contacts(
    feet: &[FootChannel; 2],
    rider: &RiderParams,
    com: Vector2<f64>,
    platform: &PlatformParams,
) -> [PlatformInput; 2] {
    let half_weight = rider.mass * GRAVITY / 2.0;
    [LEFT, RIGHT].map(|i| {
        PlatformInput::new(
            feet[i].toe_torque + half_weight * (com.x - feet[i].foot_x),
            feet[i].hip_torque,
        )
        .saturated(platform.torque_limit)
    })
}

/// The same mapping expressed through explicit foot contacts: half the
/// rider's weight supported at the COM-projected lever arm of each foot.
/// Used as the cross-check oracle for `channels_to_contacts`.
pub fn weight_shift_contacts(
    rider: &RiderParams,
    com: Vector2<f64>,
    foot_x: f64,
    platform: &PlatformParams,
) -> Result<PlatformInput, PlatformFault> {
    let support = Vector3::new(0.0, 0.0, rider.mass * GRAVITY / 2.0);
    let arm = Vector3::new(com.x - foot_x, 0.0, 0.0);
    crate::platform::contact_to_inputs(&[ContactForce::new(arm, support)], platform)
}

/// Advance one foot's joint signals.
///
/// The toe pitch relaxes first-order toward the platform pitch plus a
/// compliance deflection proportional to the commanded toe torque, so the
/// toe-gap controller has a live angle and rate. The hip yaw angle is the
/// platform heading relative to the torso.
pub fn update_foot(
    foot: &mut FootChannel,
    platform: &PlatformState,
    torso_yaw: f64,
    torso_yaw_rate: f64,
    foot_pos: Vector2<f64>,
    params: &RiderParams,
    dt: f64,
) {
    let target = platform.pitch + params.toe_compliance * foot.toe_torque;
    let alpha = 1.0 - (-dt / params.toe_time_constant).exp();
    foot.toe_pitch += (target - foot.toe_pitch) * alpha;
    foot.toe_pitch_rate = (target - foot.toe_pitch) / params.toe_time_constant;
    foot.hip_yaw = platform.yaw - torso_yaw;
    let _ = torso_yaw_rate;
    foot.foot_x = foot_pos.x;
    foot.foot_y = foot_pos.y;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const DT: f64 = 1e-3;

    #[test]
    fn symmetric_platforms_map_to_identity() {
        let l = PlatformState::at(0.0, 0.2, 0.0);
        let r = PlatformState::at(0.0, -0.2, 0.0);
        let feet = foot_kinematics(&l, &r, 0.0);
        assert_relative_eq!(feet[LEFT].x, 0.0);
        assert_relative_eq!(feet[LEFT].y, 0.2);
        assert_relative_eq!(feet[RIGHT].y, -0.2);
    }

    #[test]
    fn forward_platform_offset_appears_in_foot_gap() {
        let l = PlatformState::at(0.1, 0.2, 0.0);
        let r = PlatformState::at(0.0, -0.2, 0.0);
        let feet = foot_kinematics(&l, &r, 0.0);
        assert_relative_eq!(feet[LEFT].x - feet[RIGHT].x, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn quarter_turn_rotates_offsets_into_torso_frame() {
        // A world-frame forward offset seen from a torso facing +y appears
        // as a negative lateral offset.
        let l = PlatformState::at(0.1, 0.0, 0.0);
        let r = PlatformState::at(-0.1, 0.0, 0.0);
        let feet = foot_kinematics(&l, &r, std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(feet[LEFT].x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(feet[LEFT].y, -0.1, epsilon = 1e-12);
    }

    #[test]
    fn com_equilibrium_is_preserved() {
        let p = RiderParams::default();
        let s = RiderState::default();
        let next = com_dynamics_step(&s, &p, Vector2::zeros(), DT).unwrap();
        assert_eq!(s, next);
    }

    #[test]
    fn displaced_com_recovers_within_two_seconds() {
        let p = RiderParams::default();
        let mut s = RiderState {
            com: Vector2::new(0.02, 0.0),
            ..Default::default()
        };
        for _ in 0..2000 {
            s = com_dynamics_step(&s, &p, Vector2::zeros(), DT).unwrap();
        }
        assert!(
            s.com.norm() < 2e-3,
            "com offset {:.4} m after 2 s",
            s.com.norm()
        );
    }

    #[test]
    fn zero_gains_diverge_monotonically() {
        let p = RiderParams {
            kp_balance: [0.0, 0.0],
            kd_balance: [0.0, 0.0],
            ..Default::default()
        };
        let mut s = RiderState {
            com: Vector2::new(0.01, 0.0),
            ..Default::default()
        };
        let mut prev = s.com.x;
        for _ in 0..1500 {
            match com_dynamics_step(&s, &p, Vector2::zeros(), DT) {
                Ok(next) => {
                    assert!(next.com.x >= prev, "unstable pendulum must not return");
                    prev = next.com.x;
                    s = next;
                }
                Err(RiderFault::Fell { .. }) => return, // diverged to the fall bound
                Err(e) => panic!("unexpected fault {e:?}"),
            }
        }
        assert!(s.com.x > 0.01);
    }

    #[test]
    fn fall_faults_with_record() {
        let p = RiderParams::default();
        let s = RiderState {
            com: Vector2::new(0.899, 0.0),
            com_vel: Vector2::new(5.0, 0.0),
            ..Default::default()
        };
        let r = com_dynamics_step(&s, &p, Vector2::zeros(), DT);
        assert!(matches!(r, Err(RiderFault::Fell { .. })));
    }

    #[test]
    fn balanced_com_with_centered_feet_gives_zero_pitch_torque() {
        let rider = RiderParams::default();
        let platform = PlatformParams::default();
        let feet = [FootChannel::default(), FootChannel::default()];
        let u = channels_to_contacts(&feet, &rider, Vector2::zeros(), &platform);
        assert_eq!(u[LEFT].pitch_torque, 0.0);
        assert_eq!(u[RIGHT].pitch_torque, 0.0);
    }

    #[test]
    fn forward_weight_shift_matches_direct_evaluation() {
        let rider = RiderParams::default();
        let platform = PlatformParams::default();
        let feet = [FootChannel::default(), FootChannel::default()];
        let com = Vector2::new(0.02, 0.0);
        let u = channels_to_contacts(&feet, &rider, com, &platform);
        let expected = 32.0 * GRAVITY * 0.02 / 2.0;
        assert_relative_eq!(u[LEFT].pitch_torque, expected, epsilon = 1e-12);
        assert_relative_eq!(u[RIGHT].pitch_torque, expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 3.1392, epsilon = 1e-4);
    }

    #[test]
    fn differential_toe_torque_passes_through() {
        let rider = RiderParams::default();
        let platform = PlatformParams::default();
        let mut feet = [FootChannel::default(), FootChannel::default()];
        feet[LEFT].toe_torque = 1.0;
        feet[RIGHT].toe_torque = -1.0;
        let u = channels_to_contacts(&feet, &rider, Vector2::zeros(), &platform);
        assert_relative_eq!(u[LEFT].pitch_torque, 1.0);
        assert_relative_eq!(u[RIGHT].pitch_torque, -1.0);
    }

    #[test]
    fn weight_shift_agrees_with_contact_oracle() {
        // Pure COM shift through the channel mapping must equal the explicit
        // two-contact moment computation.
        let rider = RiderParams::default();
        let platform = PlatformParams::default();
        for com_x in [-0.04, -0.01, 0.0, 0.02, 0.05] {
            for foot_x in [-0.03, 0.0, 0.04] {
                let mut feet = [FootChannel::default(), FootChannel::default()];
                feet[LEFT].foot_x = foot_x;
                feet[RIGHT].foot_x = foot_x;
                let com = Vector2::new(com_x, 0.0);
                let via_channels = channels_to_contacts(&feet, &rider, com, &platform);
                let via_contacts =
                    weight_shift_contacts(&rider, com, foot_x, &platform).unwrap();
                assert_relative_eq!(
                    via_channels[LEFT].pitch_torque,
                    via_contacts.pitch_torque,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn balance_holds_from_any_small_offset() {
        let p = RiderParams::default();
        for x0 in [-0.03, -0.015, 0.01, 0.03] {
            for y0 in [-0.03, 0.0, 0.02] {
                let offset = Vector2::new(x0, y0);
                if offset.norm() > 0.03 {
                    continue;
                }
                let mut s = RiderState {
                    com: offset,
                    ..Default::default()
                };
                for _ in 0..3000 {
                    s = com_dynamics_step(&s, &p, Vector2::zeros(), DT)
                        .expect("rider must not fall from a small offset");
                }
                assert!(s.com.norm() < 1e-3, "|com| = {:.4} after 3 s", s.com.norm());
            }
        }
    }

    #[test]
    fn toe_pitch_tracks_platform_plus_compliance() {
        let p = RiderParams::default();
        let platform = PlatformState {
            pitch: 0.1,
            ..Default::default()
        };
        let mut foot = FootChannel {
            toe_torque: 2.0,
            ..Default::default()
        };
        for _ in 0..1000 {
            update_foot(&mut foot, &platform, 0.0, 0.0, Vector2::zeros(), &p, DT);
        }
        let target = 0.1 + p.toe_compliance * 2.0;
        assert_relative_eq!(foot.toe_pitch, target, epsilon = 1e-6);
        assert!(foot.toe_pitch_rate.abs() < 1e-4);
    }
}
