//! Parametric forward models, the rollout operator, and parameter transforms.
//!
//! Models integrate their ODE with one explicit-Euler step per call. Physical
//! parameters are passed decoded; inference runs in the encoded space of
//! [`ParamVec`].

use crate::dyn_inference::Observation;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Per-coordinate parameter transform between physical and inference space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    pub fn encode(self, physical: f64) -> f64 {
        match self {
            Transform::Identity => physical,
            Transform::Log => physical.ln(),
        }
    }

    pub fn decode(self, encoded: f64) -> f64 {
        match self {
            Transform::Identity => encoded,
            Transform::Log => encoded.exp(),
        }
    }

    /// d(physical)/d(encoded) at an encoded value.
    pub fn jacobian(self, encoded: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => encoded.exp(),
        }
    }
}

/// Simulator parameters held in encoded (inference) space.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec {
    values: Vec<f64>,
    transforms: Vec<Transform>,
}

impl ParamVec {
    pub fn from_encoded(values: Vec<f64>, transforms: Vec<Transform>) -> Result<Self> {
        if values.len() != transforms.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter values for {} transforms",
                values.len(),
                transforms.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { values, transforms })
    }

    pub fn from_physical(physical: &[f64], transforms: &[Transform]) -> Result<Self> {
        if physical.len() != transforms.len() {
            return Err(Error::InvalidArgument("parameter/transform length mismatch".into()));
        }
        for (p, t) in physical.iter().zip(transforms) {
            if *t == Transform::Log && !(*p > 0.0) {
                return Err(Error::Domain(format!("log-space parameter must be positive, got {p}")));
            }
        }
        let values = physical.iter().zip(transforms).map(|(p, t)| t.encode(*p)).collect();
        Self::from_encoded(values, transforms.to_vec())
    }

    /// All-identity parameters.
    pub fn identity(physical: &[f64]) -> Result<Self> {
        Self::from_encoded(physical.to_vec(), vec![Transform::Identity; physical.len()])
    }

    pub fn encoded(&self) -> &[f64] {
        &self.values
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn decode(&self) -> Vec<f64> {
        self.values.iter().zip(&self.transforms).map(|(v, t)| t.decode(*v)).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A parametric transition function `x' = f_phi(x, u)`.
pub trait Dynamics: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn param_names(&self) -> &'static [&'static str];
    fn state_names(&self) -> &'static [&'static str];
    fn control_names(&self) -> &'static [&'static str];
    /// Inclusive actuator bounds per control dimension.
    fn control_bounds(&self) -> &[(f64, f64)];
    /// Physical-range check on decoded parameters.
    fn check_params(&self, physical: &[f64]) -> Result<()>;
    /// One Euler step with an already clamped control.
    fn integrate(&self, s: &[f64], u: &[f64], physical: &[f64], dt: f64, next: &mut [f64]);
    /// State coordinates that are angles; residuals on them are wrapped.
    fn angle_coords(&self) -> &'static [usize] {
        &[]
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

pub fn clamp_control(model: &dyn Dynamics, u: &[f64], out: &mut [f64]) {
    for ((o, v), (lo, hi)) in out.iter_mut().zip(u).zip(model.control_bounds()) {
        *o = v.clamp(*lo, *hi);
    }
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite {what}")))
    }
}

fn check_dims(model: &dyn Dynamics, s: &[f64], u: &[f64], phi: &ParamVec) -> Result<()> {
    if s.len() != model.state_dim() || u.len() != model.control_dim() || phi.len() != model.param_names().len() {
        return Err(Error::InvalidArgument(format!(
            "{}: expected state {}, control {}, params {}; got {}, {}, {}",
            model.name(),
            model.state_dim(),
            model.control_dim(),
            model.param_names().len(),
            s.len(),
            u.len(),
            phi.len()
        )));
    }
    Ok(())
}

/// One transition of `model` from `s` under `u` (clamped to bounds).
pub fn step(model: &dyn Dynamics, s: &[f64], u: &[f64], phi: &ParamVec, dt: f64) -> Result<Vec<f64>> {
    check_dims(model, s, u, phi)?;
    check_finite("state", s)?;
    check_finite("control", u)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let physical = phi.decode();
    model.check_params(&physical)?;
    let mut uc = vec![0.0; u.len()];
    clamp_control(model, u, &mut uc);
    let mut next = vec![0.0; s.len()];
    model.integrate(s, &uc, &physical, dt, &mut next);
    Ok(next)
}

/// States `x_0..x_H` and the controls that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

/// Applies `step` recursively. `controls` holds `H` rows of the model's
/// control dimension.
pub fn rollout(
    model: &dyn Dynamics,
    x0: &[f64],
    controls: &[Vec<f64>],
    phi: &ParamVec,
    dt: f64,
) -> Result<Trajectory> {
    if controls.is_empty() {
        return Err(Error::InvalidArgument("rollout horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.to_vec());
    for u in controls {
        let next = step(model, states.last().unwrap(), u, phi, dt)?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}

/// Gaussian log-likelihood (up to a constant) of one observed transition:
/// `log N(x_t; f_phi(x_{t-1}, u_{t-1}), diag(obs_var))`.
pub fn log_likelihood(
    model: &dyn Dynamics,
    obs: &Observation,
    phi: &ParamVec,
    obs_var: &[f64],
    dt: f64,
) -> Result<f64> {
    let predicted = step(model, &obs.x_prev, &obs.u_prev, phi, dt)?;
    if obs_var.len() != predicted.len() {
        return Err(Error::InvalidArgument("observation covariance dimension mismatch".into()));
    }
    let angles = model.angle_coords();
    let mut ll = 0.0;
    for (d, (p, x)) in predicted.iter().zip(&obs.x_curr).enumerate() {
        let mut r = x - p;
        if angles.contains(&d) {
            r = wrap_angle(r);
        }
        ll -= 0.5 * r * r / obs_var[d];
    }
    Ok(ll)
}

/// Central finite-difference gradient of [`log_likelihood`] with respect to
/// the encoded parameters. Per-coordinate step is `max(1e-4, 1e-4 |phi_d|)`.
pub fn likelihood_grad_fd(
    model: &dyn Dynamics,
    obs: &Observation,
    phi: &ParamVec,
    obs_var: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    if obs_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("observation covariance must be positive".into()));
    }
    let base = phi.encoded();
    let mut grad = Vec::with_capacity(base.len());
    for d in 0..base.len() {
        let h = (1e-4 * base[d].abs()).max(1e-4);
        let probe = |offset: f64| -> Result<f64> {
            let mut v = base.to_vec();
            v[d] += offset;
            let p = ParamVec::from_encoded(v, phi.transforms().to_vec())?;
            log_likelihood(model, obs, &p, obs_var, dt)
        };
        let (plus, minus) = match (probe(h), probe(-h)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                return Err(Error::ProbeFailure {
                    coordinate: d,
                    detail: e.to_string(),
                })
            }
        };
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Rigid-rod pendulum with torque at the pivot; angle is measured from
/// upright, so pi hangs down. State `[angle, angular velocity]`, params `[mass, length]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pendulum {
    pub gravity: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub torque_bounds: [(f64, f64); 1],
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            max_speed: 5.0,
            max_accel: 10.0,
            torque_bounds: [(-5.0, 5.0)],
        }
    }
}

impl Pendulum {
    pub fn energy(&self, s: &[f64], mass: f64, length: f64) -> f64 {
        mass * length * length / 6.0 * s[1] * s[1] + mass * self.gravity * length / 2.0 * s[0].cos()
    }
}

impl Dynamics for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["mass", "length"]
    }
    fn state_names(&self) -> &'static [&'static str] {
        &["angle", "angular_velocity"]
    }
    fn control_names(&self) -> &'static [&'static str] {
        &["torque"]
    }
    fn control_bounds(&self) -> &[(f64, f64)] {
        &self.torque_bounds
    }
    fn check_params(&self, p: &[f64]) -> Result<()> {
        positive("pendulum mass", p[0])?;
        positive("pendulum length", p[1])
    }
    fn integrate(&self, s: &[f64], u: &[f64], p: &[f64], dt: f64, next: &mut [f64]) {
        let (m, l) = (p[0], p[1]);
        let accel = 1.5 * self.gravity / l * s[0].sin() + 3.0 * u[0] / (m * l * l);
        let accel = accel.clamp(-self.max_accel, self.max_accel);
        next[0] = s[0] + s[1] * dt;
        next[1] = (s[1] + accel * dt).clamp(-self.max_speed, self.max_speed);
    }
    fn angle_coords(&self) -> &'static [usize] {
        &[0]
    }
}

/// Planar double integrator `x'' = u / m`. State `[x, y, vx, vy]`, params `[mass]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMass {
    pub force_bounds: [(f64, f64); 2],
}

impl Default for PointMass {
    fn default() -> Self {
        Self {
            force_bounds: [(-10.0, 10.0); 2],
        }
    }
}

impl Dynamics for PointMass {
    fn name(&self) -> &'static str {
        "point_mass"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["mass"]
    }
    fn state_names(&self) -> &'static [&'static str] {
        &["x", "y", "vx", "vy"]
    }
    fn control_names(&self) -> &'static [&'static str] {
        &["fx", "fy"]
    }
    fn control_bounds(&self) -> &[(f64, f64)] {
        &self.force_bounds
    }
    fn check_params(&self, p: &[f64]) -> Result<()> {
        positive("point mass", p[0])
    }
    fn integrate(&self, s: &[f64], u: &[f64], p: &[f64], dt: f64, next: &mut [f64]) {
        let inv_m = 1.0 / p[0];
        next[0] = s[0] + s[2] * dt;
        next[1] = s[1] + s[3] * dt;
        next[2] = s[2] + u[0] * inv_m * dt;
        next[3] = s[3] + u[1] * inv_m * dt;
    }
}

/// Skid-steer unicycle with an offset instantaneous centre of rotation.
/// Skid-steer unicycle with an instantaneous-centre-of-rotation offset.
/// State `[x, y, heading]`, controls `[left, right]` wheel surface speeds in
/// m/s, params `[x_icr]`. A non-zero `x_icr` makes the body slide sideways
/// while turning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkidSteer {
    /// Distance between the left and right wheels.
    pub track_width: f64,
    pub wheel_speed_bounds: [(f64, f64); 2],
}

impl Default for SkidSteer {
    fn default() -> Self {
        Self {
            track_width: 0.4,
            wheel_speed_bounds: [(-1.0, 1.0); 2],
        }
    }
}

impl SkidSteer {
    /// Forward speed and yaw rate for a wheel-speed pair.
    pub fn body_rates(&self, u: &[f64]) -> (f64, f64) {
        ((u[1] + u[0]) / 2.0, (u[1] - u[0]) / self.track_width)
    }
}

impl Dynamics for SkidSteer {
    fn name(&self) -> &'static str {
        "skid_steer"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["x_icr"]
    }
    fn state_names(&self) -> &'static [&'static str] {
        &["x", "y", "heading"]
    }
    fn control_names(&self) -> &'static [&'static str] {
        &["v_left", "v_right"]
    }
    fn control_bounds(&self) -> &[(f64, f64)] {
        &self.wheel_speed_bounds
    }
    fn check_params(&self, p: &[f64]) -> Result<()> {
        if p[0].is_finite() {
            Ok(())
        } else {
            Err(Error::Domain("x_icr must be finite".into()))
        }
    }
    fn integrate(&self, s: &[f64], u: &[f64], p: &[f64], dt: f64, next: &mut [f64]) {
        let (v, w) = self.body_rates(u);
        let lateral = -p[0] * w;
        let (sin, cos) = s[2].sin_cos();
        next[0] = s[0] + (v * cos - lateral * sin) * dt;
        next[1] = s[1] + (v * sin + lateral * cos) * dt;
        next[2] = s[2] + w * dt;
    }
    fn angle_coords(&self) -> &'static [usize] {
        &[2]
    }
}
