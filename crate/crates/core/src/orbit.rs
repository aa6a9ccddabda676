//! Planar satellite dynamics about a circular nominal orbit.
//!
//! The deviation state is `x = [r − R, ṙ, R(θ − ωt), R(θ̇ − ω)]`. Linearizing
//! the inverse-square equations about `r = R, θ = ωt` gives the constant
//! matrix from [`build_a`]; [`discretize`] turns it into the sampled
//! transition used by the filters.

use thiserror::Error;

use crate::smallmat::{Matrix4, RowVector4, Vector4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid orbit parameters: {0}")]
    InvalidParams(String),
}

/// Nominal circular orbit and sample period.
///
/// `g0` is always `R³ω²`, the value for which `r = R, θ̇ = ω` is a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitParams {
    radius: f64,
    omega: f64,
    g0: f64,
    h: f64,
}

impl OrbitParams {
    pub fn new(radius: f64, omega: f64, h: f64) -> Result<Self, OrbitError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(OrbitError::InvalidParams(format!("R must be > 0, got {radius}")));
        }
        if omega == 0.0 || !omega.is_finite() {
            return Err(OrbitError::InvalidParams(format!("omega must be nonzero, got {omega}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(OrbitError::InvalidParams(format!("h must be > 0, got {h}")));
        }
        Ok(OrbitParams { radius, omega, g0: radius.powi(3) * omega * omega, h })
    }

    /// Like [`OrbitParams::new`] but checks a caller-supplied `g0` against `R³ω²`.
    pub fn with_g0(radius: f64, omega: f64, g0: f64, h: f64) -> Result<Self, OrbitError> {
        let p = Self::new(radius, omega, h)?;
        if (g0 - p.g0).abs() > 1e-12 * p.g0.abs().max(1.0) {
            return Err(OrbitError::InvalidParams(format!(
                "G0 = {g0} is inconsistent with a circular orbit (R^3 omega^2 = {})",
                p.g0
            )));
        }
        Ok(p)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams { radius: 1.0, omega: 1.0, g0: 1.0, h: 0.01 }
    }
}

/// Full polar state of the satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarState {
    pub r: f64,
    pub r_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

/// Time derivative of a [`PolarState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarRate {
    pub r_dot: f64,
    pub r_ddot: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
}

impl PolarState {
    /// The nominal circular solution at time `t`.
    pub fn nominal(p: &OrbitParams, t: f64) -> Self {
        PolarState { r: p.radius, r_dot: 0.0, theta: p.omega * t, theta_dot: p.omega }
    }

    fn offset(&self, d: &PolarRate, dt: f64) -> PolarState {
        PolarState {
            r: self.r + dt * d.r_dot,
            r_dot: self.r_dot + dt * d.r_ddot,
            theta: self.theta + dt * d.theta_dot,
            theta_dot: self.theta_dot + dt * d.theta_ddot,
        }
    }
}

/// Which scalar quantity is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MeasurementType {
    /// Range deviation `x1`, variance `phi`.
    #[default]
    Type1,
    /// Scaled angle deviation `x3`, variance `psi`.
    Type2,
}

impl MeasurementType {
    pub const ALL: [MeasurementType; 2] = [MeasurementType::Type1, MeasurementType::Type2];

    pub fn label(&self) -> &'static str {
        match self {
            MeasurementType::Type1 => "type1",
            MeasurementType::Type2 => "type2",
        }
    }
}

impl std::str::FromStr for MeasurementType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "1" => Ok(MeasurementType::Type1),
            "type2" | "2" => Ok(MeasurementType::Type2),
            other => Err(format!("unknown measurement type `{other}` (expected type1 or type2)")),
        }
    }
}

impl std::fmt::Display for MeasurementType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Variances of the two measurement channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    /// range channel
    pub phi: f64,
    /// angle channel
    pub psi: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        MeasurementNoise { phi: 0.1, psi: 0.5 }
    }
}

/// Right-hand side of the planar two-body equations.
pub fn nonlinear_derivative(s: &PolarState, p: &OrbitParams) -> Result<PolarRate, OrbitError> {
    if !(s.r > 0.0) {
        return Err(OrbitError::NonPositiveRadius(s.r));
    }
    Ok(PolarRate {
        r_dot: s.r_dot,
        r_ddot: s.r * s.theta_dot * s.theta_dot - p.g0 / (s.r * s.r),
        theta_dot: s.theta_dot,
        theta_ddot: -2.0 * s.theta_dot * s.r_dot / s.r,
    })
}

/// One classic fourth-order Runge-Kutta step.
pub fn rk4_step(s: &PolarState, p: &OrbitParams, dt: f64) -> Result<PolarState, OrbitError> {
    let k1 = nonlinear_derivative(s, p)?;
    let k2 = nonlinear_derivative(&s.offset(&k1, dt / 2.0), p)?;
    let k3 = nonlinear_derivative(&s.offset(&k2, dt / 2.0), p)?;
    let k4 = nonlinear_derivative(&s.offset(&k3, dt), p)?;
    let w = dt / 6.0;
    Ok(PolarState {
        r: s.r + w * (k1.r_dot + 2.0 * k2.r_dot + 2.0 * k3.r_dot + k4.r_dot),
        r_dot: s.r_dot + w * (k1.r_ddot + 2.0 * k2.r_ddot + 2.0 * k3.r_ddot + k4.r_ddot),
        theta: s.theta + w * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot),
        theta_dot: s.theta_dot
            + w * (k1.theta_ddot + 2.0 * k2.theta_ddot + 2.0 * k3.theta_ddot + k4.theta_ddot),
    })
}

pub fn to_deviation(s: &PolarState, t: f64, p: &OrbitParams) -> Vector4 {
    let (rr, w) = (p.radius, p.omega);
    Vector4::new([s.r - rr, s.r_dot, rr * (s.theta - w * t), rr * (s.theta_dot - w)])
}

/// Inverse of [`to_deviation`].
pub fn from_deviation(x: &Vector4, t: f64, p: &OrbitParams) -> PolarState {
    let (rr, w) = (p.radius, p.omega);
    PolarState { r: rr + x[0], r_dot: x[1], theta: w * t + x[2] / rr, theta_dot: w + x[3] / rr }
}

/// Continuous-time Jacobian of the deviation dynamics.
pub fn build_a(p: &OrbitParams) -> Matrix4 {
    build_a_for_rate(p.omega)
}

/// [`build_a`] for an arbitrary rate, including the degenerate `ω = 0`.
pub fn build_a_for_rate(w: f64) -> Matrix4 {
    Matrix4::new([
        [0.0, 1.0, 0.0, 0.0],
        [3.0 * w * w, 0.0, 0.0, 2.0 * w],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, -2.0 * w, 0.0, 0.0],
    ])
}

/// Zero-order sampled transition `F = exp(A h)`.
pub fn discretize(a: &Matrix4, h: f64) -> Matrix4 {
    a.scale(h).expm()
}

/// Observation row and channel variance for a measurement type.
pub fn measurement_matrix(t: MeasurementType, noise: &MeasurementNoise) -> (RowVector4, f64) {
    match t {
        MeasurementType::Type1 => (RowVector4::new([1.0, 0.0, 0.0, 0.0]), noise.phi),
        MeasurementType::Type2 => (RowVector4::new([0.0, 0.0, 1.0, 0.0]), noise.psi),
    }
}
