//! Continuous-time pendulum models.
//!
//! Two models live here. The flange/pendulum transition used by the learning
//! environment is linearized about the upright equilibrium and stepped with
//! explicit Euler. The free-oscillation model is the full nonlinear damped
//! pendulum about the hanging equilibrium, integrated with fixed-step RK4 for
//! system identification.
//!
//! Angles are radians throughout. `phi` is measured from the upright position,
//! `theta` from the hanging position, with `theta + phi = pi`.

use std::f64::consts::PI;

use thiserror::Error;

/// Failure bound on the pendulum angle, degrees.
pub const PHI_LIMIT_DEG: f64 = 11.0;
/// Failure bound on the flange displacement, metres.
pub const X_LIMIT: f64 = 0.22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid pendulum parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("duration {duration} must exceed step {h}")]
    BadDuration { duration: f64, h: f64 },
}

/// Physical constants of the pendulum and the rotating part of the encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Moment of inertia about the rotation axis, kg m^2.
    pub inertia: f64,
    /// Viscous friction coefficient, N m s/rad.
    pub damping: f64,
    /// Mass, kg.
    pub mass: f64,
    /// Gravity, m/s^2.
    pub gravity: f64,
    /// Distance from the centre of mass to the rotation axis, m.
    pub length: f64,
}

impl Default for PendulumParams {
    /// Stand-in values chosen so the small-angle period is 0.75 s.
    fn default() -> Self {
        let mass = 0.05;
        let gravity = 9.81;
        let length = 0.05;
        Self {
            inertia: mass * gravity * length / 70.18,
            damping: 6e-5,
            mass,
            gravity,
            length,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("I", self.inertia),
            ("m", self.mass),
            ("g", self.gravity),
            ("l", self.length),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParam { name, value });
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(ModelError::InvalidParam {
                name: "b",
                value: self.damping,
            });
        }
        Ok(())
    }

    /// Gravity torque coefficient `m g l`, N m.
    pub fn mgl(&self) -> f64 {
        self.mass * self.gravity * self.length
    }

    /// Coupling of flange acceleration into pendulum angular acceleration, `m l / I`.
    pub fn coupling(&self) -> f64 {
        self.mass * self.length / self.inertia
    }

    /// Total energy of a free-oscillation state, zero at rest hanging down.
    pub fn energy(&self, theta: f64, theta_dot: f64) -> f64 {
        0.5 * self.inertia * theta_dot * theta_dot + self.mgl() * (1.0 - theta.cos())
    }

    /// State matrix `A` and input column `B` of the linearized upright model.
    pub fn state_space(&self) -> ([[f64; 4]; 4], [f64; 4]) {
        let a = [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, self.mgl() / self.inertia, -self.damping / self.inertia],
        ];
        let b = [0.0, 1.0, 0.0, -self.coupling()];
        (a, b)
    }
}

/// Flange and pendulum state `[x, x_dot, phi, phi_dot]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContinuousState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl ContinuousState {
    pub fn new(x: f64, x_dot: f64, phi: f64, phi_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            phi,
            phi_dot,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.phi, self.phi_dot]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// One explicit Euler step of the linearized flange/pendulum model driven by
/// the achieved flange acceleration `u_actual`.
pub fn linearized_step(
    s: &ContinuousState,
    u_actual: f64,
    p: &PendulumParams,
    h: f64,
) -> Result<ContinuousState, ModelError> {
    if !s.is_finite() {
        return Err(ModelError::NonFinite("state"));
    }
    if !u_actual.is_finite() {
        return Err(ModelError::NonFinite("acceleration"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(ModelError::BadStep(h));
    }
    p.validate()?;

    let (a, b) = p.state_space();
    let v = s.as_array();
    let mut next = v;
    for (row, out) in next.iter_mut().enumerate() {
        let deriv: f64 = a[row].iter().zip(&v).map(|(aij, vj)| aij * vj).sum::<f64>() + b[row] * u_actual;
        *out += h * deriv;
    }
    Ok(ContinuousState::from_array(next))
}

/// Angular acceleration of the freely oscillating damped pendulum.
pub fn free_oscillation_rhs(theta: f64, theta_dot: f64, p: &PendulumParams) -> f64 {
    -(p.damping * theta_dot + p.mgl() * theta.sin()) / p.inertia
}

/// One RK4 step of the free-oscillation ODE.
pub(crate) fn rk4_step(theta: f64, omega: f64, h: f64, p: &PendulumParams) -> (f64, f64) {
    let f = |th: f64, om: f64| (om, free_oscillation_rhs(th, om, p));
    let (k1t, k1o) = f(theta, omega);
    let (k2t, k2o) = f(theta + 0.5 * h * k1t, omega + 0.5 * h * k1o);
    let (k3t, k3o) = f(theta + 0.5 * h * k2t, omega + 0.5 * h * k2o);
    let (k4t, k4o) = f(theta + h * k3t, omega + h * k3o);
    (
        theta + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
        omega + h / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o),
    )
}

/// A single encoder reading: time and angle from the hanging position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationSample {
    pub t: f64,
    pub theta: f64,
}

/// Result of a free-oscillation simulation. `coarse_step` is set when `h`
/// exceeds a twentieth of the natural period; the trace is still returned.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationTrace {
    pub samples: Vec<OscillationSample>,
    pub coarse_step: bool,
}

/// Fixed-step RK4 trajectory of the damped pendulum, sampled at every step.
pub fn simulate_free_oscillation(
    p: &PendulumParams,
    theta0: f64,
    theta_dot0: f64,
    h: f64,
    duration: f64,
) -> Result<OscillationTrace, ModelError> {
    p.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(ModelError::BadStep(h));
    }
    if !(duration.is_finite() && duration > h) {
        return Err(ModelError::BadDuration { duration, h });
    }
    if !(theta0.is_finite() && theta_dot0.is_finite()) {
        return Err(ModelError::NonFinite("initial condition"));
    }
    let n = (duration / h).floor() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    let (mut theta, mut omega) = (theta0, theta_dot0);
    samples.push(OscillationSample { t: 0.0, theta });
    for i in 1..=n {
        (theta, omega) = rk4_step(theta, omega, h, p);
        samples.push(OscillationSample {
            t: i as f64 * h,
            theta,
        });
    }
    Ok(OscillationTrace {
        samples,
        coarse_step: h > natural_period(p) / 20.0,
    })
}

/// Small-angle period about the hanging equilibrium.
pub fn natural_period(p: &PendulumParams) -> f64 {
    2.0 * PI * (p.inertia / p.mgl()).sqrt()
}

/// True when the pendulum angle or the flange displacement reaches its limit.
pub fn is_failure(s: &ContinuousState) -> bool {
    s.phi.abs() >= PHI_LIMIT_DEG.to_radians() || s.x.abs() >= X_LIMIT
}

/// Convert between the hanging-angle and upright-angle conventions.
pub fn theta_to_phi(theta: f64) -> f64 {
    PI - theta
}
