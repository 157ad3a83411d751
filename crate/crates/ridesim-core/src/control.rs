//! The controller hierarchy: foot x/y regulation, speed tracking, turning
//! with lean, and the torque-integration layer that merges everything with
//! the nominal balance channels.
//!
//! All controllers are pure functions of the current measurements and the
//! gains. Sign conventions fixed here (and exercised by the closed-loop
//! tests): the toe-gap torque is added to the left toe and subtracted from
//! the right; the turn toe torque is added to the right (outer wheel of a
//! CCW turn) and subtracted from the left.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::rider::{FootChannel, LEFT, RIGHT};
use crate::GRAVITY;

/// Command clamps shared by every set-point source.
pub const MAX_SPEED_COMMAND: f64 = 2.0;
pub const MAX_YAW_RATE_COMMAND: f64 = 1.5;
/// Clamp on the commanded longitudinal COM offset (m).
pub const COM_TARGET_LIMIT: f64 = 0.05;

/// Controller gains. Empirically tuned defaults; every field can be
/// overridden per scenario (see docs/gains.md for the tuning notes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    /// Outer x-loop: desired toe-pitch gap per meter of foot gap (rad/m).
    pub kp_foot_gap: f64,
    /// Inner x-loop: toe torque per radian of toe-gap error (N·m/rad).
    pub kp_toe_gap: f64,
    /// Inner x-loop damping (N·m·s/rad).
    pub kd_toe_gap: f64,
    /// Outer y-loop: desired hip yaw per meter of stance error (rad/m).
    pub kp_stance: f64,
    /// Inner y-loop: hip torque per radian of hip-yaw error (N·m/rad).
    pub kp_hip: f64,
    /// Speed loop: commanded COM offset per m/s of speed error (m·s/m).
    pub kp_speed: f64,
    /// Turn loop: hip torque per rad/s of yaw-rate error (N·m·s/rad).
    pub kp_yaw_rate: f64,
    /// Turn loop: differential toe torque per rad/s of yaw-rate error.
    pub kp_turn_toe: f64,
    /// Lean: fraction of the coordinated-turn tilt converted to a lateral
    /// COM command (dimensionless).
    pub kp_lean: f64,
    /// Toe-rate damping added to each toe torque (N·m·s/rad).
    pub kd_toe: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            kp_foot_gap: 1.0,
            kp_toe_gap: 5.0,
            kd_toe_gap: 0.5,
            kp_stance: 2.0,
            kp_hip: 20.0,
            kp_speed: 0.06,
            kp_yaw_rate: 12.0,
            kp_turn_toe: 2.0,
            kp_lean: 0.5,
            kd_toe: 0.05,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("kp_foot_gap", self.kp_foot_gap),
            ("kp_toe_gap", self.kp_toe_gap),
            ("kd_toe_gap", self.kd_toe_gap),
            ("kp_stance", self.kp_stance),
            ("kp_hip", self.kp_hip),
            ("kp_speed", self.kp_speed),
            ("kp_yaw_rate", self.kp_yaw_rate),
            ("kp_turn_toe", self.kp_turn_toe),
            ("kp_lean", self.kp_lean),
            ("kd_toe", self.kd_toe),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("gains.{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Current set-points for the speed/turn/stance loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    /// Desired forward speed (m/s).
    pub speed: f64,
    /// Desired yaw rate (rad/s).
    pub yaw_rate: f64,
    /// Desired stance half-width (m).
    pub stance_half_width: f64,
}

impl Setpoints {
    pub fn rest(stance_half_width: f64) -> Self {
        Self {
            speed: 0.0,
            yaw_rate: 0.0,
            stance_half_width,
        }
    }

    /// Apply the command clamps.
    pub fn clamped(self) -> Self {
        Self {
            speed: self.speed.clamp(-MAX_SPEED_COMMAND, MAX_SPEED_COMMAND),
            yaw_rate: self
                .yaw_rate
                .clamp(-MAX_YAW_RATE_COMMAND, MAX_YAW_RATE_COMMAND),
            stance_half_width: self.stance_half_width,
        }
    }
}

/// Nominal balance-controller torques for one leg. The reduced rider keeps
/// balance through the COM regulator, so the closed-loop pipeline feeds
/// zeros here; the fields exist so the integration layer composes exactly
/// like the full ten-channel stack.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegTorques {
    pub hip_roll: f64,  // u1
    pub hip_yaw: f64,   // u2
    pub hip_pitch: f64, // u3
    pub knee: f64,      // u4
    pub toe: f64,       // u5
}

/// Full per-tick command: per-leg torques plus the commanded COM offset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub legs: [LegTorques; 2],
    pub com_target: Vector2<f64>,
}

/// Output of the turning controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TurnOutput {
    /// Hip yaw torque applied to both legs (N·m).
    pub hip_torque: f64,
    /// Differential toe torque: added right, subtracted left (N·m).
    pub toe_torque: f64,
    /// Commanded lateral COM offset (m).
    pub com_target_y: f64,
}

/// X-axis controller: regulates the longitudinal gap between the feet.
///
/// The outer loop converts the foot gap into a desired toe-pitch
/// difference; the inner PD converts the toe-pitch error into a
/// differential toe torque (added left, subtracted right).
pub fn x_controller(
    foot_x: [f64; 2],
    toe_pitch: [f64; 2],
    toe_pitch_rate: [f64; 2],
    gains: &Gains,
) -> f64 {
    let gap = foot_x[LEFT] - foot_x[RIGHT];
    let desired_gap = -gains.kp_foot_gap * gap;
    let error = (toe_pitch[LEFT] - toe_pitch[RIGHT]) - desired_gap;
    let error_rate = toe_pitch_rate[LEFT] - toe_pitch_rate[RIGHT];
    -gains.kp_toe_gap * error - gains.kd_toe_gap * error_rate
}

/// Y-axis controller: holds each toe at ±stance_half_width laterally.
///
/// Outer loop: stance error to desired hip yaw (clamped to the joint
/// range); inner loop: hip-yaw error to hip torque. Returns per-side hip
/// torques `[left, right]`.
pub fn y_controller(
    foot_y: [f64; 2],
    hip_yaw: [f64; 2],
    stance_half_width: f64,
    hip_yaw_range: f64,
    gains: &Gains,
) -> [f64; 2] {
    let errors = [
        foot_y[LEFT] - stance_half_width,
        foot_y[RIGHT] + stance_half_width,
    ];
    [LEFT, RIGHT].map(|i| {
        let desired = (-gains.kp_stance * errors[i]).clamp(-hip_yaw_range, hip_yaw_range);
        -gains.kp_hip * (hip_yaw[i] - desired)
    })
}

/// Speed controller: commanded longitudinal COM offset proportional to the
/// speed error, clamped to the COM command limit.
pub fn velocity_controller(speed_est: f64, speed_cmd: f64, gains: &Gains) -> f64 {
    (-gains.kp_speed * (speed_est - speed_cmd)).clamp(-COM_TARGET_LIMIT, COM_TARGET_LIMIT)
}

/// Turning controller: hip torque on both legs, differential toe torque,
/// and the coordinated-turn lean command.
pub fn turning_controller(
    yaw_rate_est: f64,
    yaw_rate_cmd: f64,
    speed_est: f64,
    com_height: f64,
    gains: &Gains,
) -> TurnOutput {
    let error = yaw_rate_est - yaw_rate_cmd;
    let tilt = (yaw_rate_est * speed_est / GRAVITY).atan();
    TurnOutput {
        hip_torque: -gains.kp_yaw_rate * error,
        toe_torque: -gains.kp_turn_toe * error,
        com_target_y: -gains.kp_lean * com_height * tilt,
    }
}

/// Merge the nominal balance channels with every sub-controller output.
///
/// Hip yaw gets the per-side stance torque plus the common turn torque.
/// The toe channel composes the toe-gap torque (+left/−right), the turn
/// torque (+right/−left), and per-toe rate damping. The lateral COM command
/// rides in `com_target` (the reduced rider consumes it directly instead of
/// a leg-length change). Saturation is applied last.
#[allow(clippy::too_many_arguments)]
pub fn integrate_torques(
    nominal: &[LegTorques; 2],
    toe_gap_torque: f64,
    stance_torques: [f64; 2],
    turn: &TurnOutput,
    com_target_x: f64,
    toe_pitch_rate: [f64; 2],
    gains: &Gains,
    torque_limit: f64,
) -> ControlCommand {
    let sat = |v: f64| v.clamp(-torque_limit, torque_limit);
    let side_sign = [1.0, -1.0]; // +left / −right
    let legs = [LEFT, RIGHT].map(|i| {
        let damping = -gains.kd_toe * toe_pitch_rate[i];
        LegTorques {
            hip_roll: sat(nominal[i].hip_roll),
            hip_yaw: sat(nominal[i].hip_yaw + stance_torques[i] + turn.hip_torque),
            hip_pitch: sat(nominal[i].hip_pitch),
            knee: sat(nominal[i].knee),
            toe: sat(
                nominal[i].toe + side_sign[i] * toe_gap_torque - side_sign[i] * turn.toe_torque
                    + damping,
            ),
        }
    });
    ControlCommand {
        legs,
        com_target: Vector2::new(com_target_x, turn.com_target_y),
    }
}

/// Measurements consumed by one control tick. Joint signals are
/// proprioceptive (exact); speed and yaw rate come from the estimator.
#[derive(Debug, Clone, Copy)]
pub struct Measurements {
    pub foot_x: [f64; 2],
    pub foot_y: [f64; 2],
    pub toe_pitch: [f64; 2],
    pub toe_pitch_rate: [f64; 2],
    pub hip_yaw: [f64; 2],
    pub speed_est: f64,
    pub yaw_rate_est: f64,
}

impl Measurements {
    pub fn from_feet(feet: &[FootChannel; 2], speed_est: f64, yaw_rate_est: f64) -> Self {
        Self {
            foot_x: [feet[LEFT].foot_x, feet[RIGHT].foot_x],
            foot_y: [feet[LEFT].foot_y, feet[RIGHT].foot_y],
            toe_pitch: [feet[LEFT].toe_pitch, feet[RIGHT].toe_pitch],
            toe_pitch_rate: [feet[LEFT].toe_pitch_rate, feet[RIGHT].toe_pitch_rate],
            hip_yaw: [feet[LEFT].hip_yaw, feet[RIGHT].hip_yaw],
            speed_est,
            yaw_rate_est,
        }
    }
}

/// The full stack evaluated once per control tick.
#[derive(Debug, Clone)]
pub struct ControlStack {
    pub gains: Gains,
    pub hip_yaw_range: f64,
    pub com_height: f64,
    pub torque_limit: f64,
}

impl ControlStack {
    pub fn new(gains: Gains, hip_yaw_range: f64, com_height: f64, torque_limit: f64) -> Self {
        Self {
            gains,
            hip_yaw_range,
            com_height,
            torque_limit,
        }
    }

    pub fn tick(&self, m: &Measurements, sp: &Setpoints) -> ControlCommand {
        let sp = sp.clamped();
        let toe_gap = x_controller(m.foot_x, m.toe_pitch, m.toe_pitch_rate, &self.gains);
        let stance = y_controller(
            m.foot_y,
            m.hip_yaw,
            sp.stance_half_width,
            self.hip_yaw_range,
            &self.gains,
        );
        let com_x = velocity_controller(m.speed_est, sp.speed, &self.gains);
        let turn = turning_controller(
            m.yaw_rate_est,
            sp.yaw_rate,
            m.speed_est,
            self.com_height,
            &self.gains,
        );
        integrate_torques(
            &[LegTorques::default(); 2],
            toe_gap,
            stance,
            &turn,
            com_x,
            m.toe_pitch_rate,
            &self.gains,
            self.torque_limit,
        )
    }
}
