//! Closed-loop dynamics of one self-balancing wheeled platform and the
//! contact-torque mapping from rider forces to platform inputs.
//!
//! The platform carries an internal controller that regulates pitch to zero;
//! its closed-loop behavior is captured by a linear pitch loop
//! (stiffness + damping), a damped free yaw, unicycle translation, and a
//! pitch-proportional thrust. The rider can only push on it through foot
//! contacts, which enter as a pitch torque and a yaw torque.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Faults raised by platform integration.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlatformFault {
    #[error("numerical divergence: non-finite platform state or input")]
    NumericalDivergence,
    #[error("platform tipped over: |pitch| = {pitch:.3} rad exceeds pi/2")]
    TipOver { pitch: f64 },
}

/// Physical and internal-controller parameters of one platform.
///
/// No system identification exists for the real device; these defaults give
/// a fast, well-damped pitch loop (natural frequency ≈ 31.6 rad/s, damping
/// ratio ≈ 0.79) consistent with a highly sensitive platform. All values
/// can be overridden per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformParams {
    /// Platform mass (kg).
    pub mass: f64,
    /// Moment of inertia about the pitch axis (kg·m²).
    pub pitch_inertia: f64,
    /// Moment of inertia about the yaw axis (kg·m²).
    pub yaw_inertia: f64,
    /// Internal-controller pitch stiffness (N·m/rad).
    pub pitch_stiffness: f64,
    /// Internal-controller pitch damping (N·m·s/rad).
    pub pitch_damping: f64,
    /// Ground-contact yaw damping (N·m·s/rad).
    pub yaw_damping: f64,
    /// Thrust gain: longitudinal force per radian of pitch (N/rad).
    pub thrust_gain: f64,
    /// Torque saturation applied to both input channels (N·m).
    pub torque_limit: f64,
    /// Wheel radius (m). Metadata only; not used by the planar dynamics.
    pub wheel_radius: f64,
}

impl Default for PlatformParams {
    fn default() -> Self {
        Self {
            mass: 3.0,
            pitch_inertia: 0.02,
            yaw_inertia: 0.01,
            pitch_stiffness: 20.0,
            pitch_damping: 1.0,
            yaw_damping: 0.5,
            thrust_gain: 200.0,
            torque_limit: 15.0,
            wheel_radius: 0.1,
        }
    }
}

impl PlatformParams {
    /// All parameters strictly positive; pitch loop asymptotically stable.
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("mass", self.mass),
            ("pitch_inertia", self.pitch_inertia),
            ("yaw_inertia", self.yaw_inertia),
            ("pitch_stiffness", self.pitch_stiffness),
            ("pitch_damping", self.pitch_damping),
            ("yaw_damping", self.yaw_damping),
            ("thrust_gain", self.thrust_gain),
            ("torque_limit", self.torque_limit),
            ("wheel_radius", self.wheel_radius),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("platform.{name} must be finite and > 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Undamped natural frequency of the pitch loop (rad/s).
    pub fn pitch_natural_frequency(&self) -> f64 {
        (self.pitch_stiffness / self.pitch_inertia).sqrt()
    }

    /// Damping ratio of the pitch loop.
    pub fn pitch_damping_ratio(&self) -> f64 {
        self.pitch_damping / (2.0 * (self.pitch_stiffness * self.pitch_inertia).sqrt())
    }
}

/// Instantaneous state of one platform.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlatformState {
    /// Pitch angle (rad), positive nose-up toward forward thrust.
    pub pitch: f64,
    /// Pitch rate (rad/s).
    pub pitch_rate: f64,
    /// Yaw / heading (rad, CCW from world +x). Unwrapped.
    pub yaw: f64,
    /// Yaw rate (rad/s).
    pub yaw_rate: f64,
    /// World-frame position (m).
    pub x: f64,
    pub y: f64,
    /// Scalar speed along the heading (m/s).
    pub speed: f64,
}

impl PlatformState {
    pub fn at(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.pitch,
            self.pitch_rate,
            self.yaw,
            self.yaw_rate,
            self.x,
            self.y,
            self.speed,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    fn axpy(&self, scale: f64, d: &PlatformDerivative) -> Self {
        Self {
            pitch: self.pitch + scale * d.pitch_rate,
            pitch_rate: self.pitch_rate + scale * d.pitch_accel,
            yaw: self.yaw + scale * d.yaw_rate,
            yaw_rate: self.yaw_rate + scale * d.yaw_accel,
            x: self.x + scale * d.x_rate,
            y: self.y + scale * d.y_rate,
            speed: self.speed + scale * d.accel,
        }
    }
}

/// Time-derivative of [`PlatformState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformDerivative {
    pub pitch_rate: f64,
    pub pitch_accel: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
    pub x_rate: f64,
    pub y_rate: f64,
    pub accel: f64,
}

/// Torque inputs transmitted from the rider's foot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlatformInput {
    /// Pitch torque (N·m).
    pub pitch_torque: f64,
    /// Yaw torque (N·m).
    pub yaw_torque: f64,
}

impl PlatformInput {
    pub fn new(pitch_torque: f64, yaw_torque: f64) -> Self {
        Self {
            pitch_torque,
            yaw_torque,
        }
    }

    /// Clamp both channels to ±`limit`. Saturation happens before the
    /// torques ever reach the dynamics.
    pub fn saturated(self, limit: f64) -> Self {
        Self {
            pitch_torque: self.pitch_torque.clamp(-limit, limit),
            yaw_torque: self.yaw_torque.clamp(-limit, limit),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pitch_torque.is_finite() && self.yaw_torque.is_finite()
    }
}

/// One foot-contact force on the rider, expressed in the platform frame.
///
/// `point` is the contact location relative to the platform origin; `force`
/// is the force applied ON the rider, so the platform receives the reaction
/// `-force`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactForce {
    pub point: Vector3<f64>,
    pub force: Vector3<f64>,
}

/// Half-extents of the platform footprint (m); contact points are expected
/// to stay inside this box.
pub const FOOTPRINT_HALF_EXTENTS: [f64; 3] = [0.18, 0.08, 0.06];

impl ContactForce {
    pub fn new(point: Vector3<f64>, force: Vector3<f64>) -> Self {
        Self { point, force }
    }

    pub fn is_finite(&self) -> bool {
        self.point.iter().chain(self.force.iter()).all(|v| v.is_finite())
    }

    pub fn within_footprint(&self) -> bool {
        self.point
            .iter()
            .zip(FOOTPRINT_HALF_EXTENTS.iter())
            .all(|(p, h)| p.abs() <= *h + 1e-9)
    }
}

/// Time-derivative of the platform state under the given input.
///
/// Pitch obeys the internal stabilizing loop (stiffness + damping driven by
/// the contact pitch torque), yaw is damped with no restoring term,
/// translation follows the unicycle kinematics, and the speed derivative is
/// proportional to pitch.
pub fn platform_derivative(
    state: &PlatformState,
    input: &PlatformInput,
    params: &PlatformParams,
) -> Result<PlatformDerivative, PlatformFault> {
    if !state.is_finite() || !input.is_finite() {
        return Err(PlatformFault::NumericalDivergence);
    }
    Ok(derivative_unchecked(state, input, params))
}

fn derivative_unchecked(
    state: &PlatformState,
    input: &PlatformInput,
    params: &PlatformParams,
) -> PlatformDerivative {
    PlatformDerivative {
        pitch_rate: state.pitch_rate,
        pitch_accel: (-params.pitch_stiffness * state.pitch
            - params.pitch_damping * state.pitch_rate
            + input.pitch_torque)
            / params.pitch_inertia,
        yaw_rate: state.yaw_rate,
        yaw_accel: (-params.yaw_damping * state.yaw_rate + input.yaw_torque)
            / params.yaw_inertia,
        x_rate: state.speed * state.yaw.cos(),
        y_rate: state.speed * state.yaw.sin(),
        accel: params.thrust_gain * state.pitch / params.mass,
    }
}

/// Net platform input from a set of foot contacts.
///
/// Each contact applies the reaction `-force` on the platform at `point`;
/// the pitch channel is the y-component of the summed moment, the yaw
/// channel its z-component. The result is saturated to the torque limit.
pub fn contact_to_inputs(
    contacts: &[ContactForce],
    params: &PlatformParams,
) -> Result<PlatformInput, PlatformFault> {
    let mut moment = Vector3::zeros();
    for c in contacts {
        if !c.is_finite() {
            return Err(PlatformFault::NumericalDivergence);
        }
        moment += c.point.cross(&(-c.force));
    }
    Ok(PlatformInput::new(moment.y, moment.z).saturated(params.torque_limit))
}

/// Largest step the fixed-step integrator accepts (s).
pub const MAX_STEP: f64 = 2e-3;

/// Advance the platform one fixed step with classic fourth-order
/// Runge–Kutta. The input is saturated, then held constant over the step.
/// Identical inputs produce bit-identical outputs.
pub fn step(
    state: &PlatformState,
    input: &PlatformInput,
    params: &PlatformParams,
    dt: f64,
) -> Result<PlatformState, PlatformFault> {
    assert!(
        dt > 0.0 && dt <= MAX_STEP,
        "platform step size must be in (0, {MAX_STEP}], got {dt}"
    );
    if !state.is_finite() || !input.is_finite() {
        return Err(PlatformFault::NumericalDivergence);
    }
    let u = input.saturated(params.torque_limit);

    let k1 = derivative_unchecked(state, &u, params);
    let k2 = derivative_unchecked(&state.axpy(dt / 2.0, &k1), &u, params);
    let k3 = derivative_unchecked(&state.axpy(dt / 2.0, &k2), &u, params);
    let k4 = derivative_unchecked(&state.axpy(dt, &k3), &u, params);

    let next = PlatformState {
        pitch: state.pitch
            + dt / 6.0 * (k1.pitch_rate + 2.0 * k2.pitch_rate + 2.0 * k3.pitch_rate + k4.pitch_rate),
        pitch_rate: state.pitch_rate
            + dt / 6.0
                * (k1.pitch_accel + 2.0 * k2.pitch_accel + 2.0 * k3.pitch_accel + k4.pitch_accel),
        yaw: state.yaw
            + dt / 6.0 * (k1.yaw_rate + 2.0 * k2.yaw_rate + 2.0 * k3.yaw_rate + k4.yaw_rate),
        yaw_rate: state.yaw_rate
            + dt / 6.0 * (k1.yaw_accel + 2.0 * k2.yaw_accel + 2.0 * k3.yaw_accel + k4.yaw_accel),
        x: state.x + dt / 6.0 * (k1.x_rate + 2.0 * k2.x_rate + 2.0 * k3.x_rate + k4.x_rate),
        y: state.y + dt / 6.0 * (k1.y_rate + 2.0 * k2.y_rate + 2.0 * k3.y_rate + k4.y_rate),
        speed: state.speed + dt / 6.0 * (k1.accel + 2.0 * k2.accel + 2.0 * k3.accel + k4.accel),
    };

    if !next.is_finite() {
        return Err(PlatformFault::NumericalDivergence);
    }
    if next.pitch.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(PlatformFault::TipOver { pitch: next.pitch });
    }
    Ok(next)
}

/// Residual of the no-side-slip constraint at the current state: the lateral
/// component of the translational velocity. Identically zero for the
/// unicycle vector field up to floating-point rounding.
pub fn nonholonomic_residual(
    state: &PlatformState,
    input: &PlatformInput,
    params: &PlatformParams,
) -> f64 {
    let d = derivative_unchecked(state, input, params);
    d.x_rate * state.yaw.sin() - d.y_rate * state.yaw.cos()
}
