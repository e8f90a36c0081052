//! Simulated tasks: true dynamics with a latent-parameter schedule, cost
//! functions, crash semantics, and success predicates.
//!
//! Controllers only ever see a [`TaskModel`] (dynamics structure plus cost)
//! and the states and observations an [`Environment`] emits. The latent
//! parameters stay inside the environment.

use crate::dyn_inference::Observation;
use crate::error::{Error, Result};
use crate::models::{clamp_control, wrap_angle, Dynamics, ParamVec, Pendulum, PointMass, SkidSteer};
use crate::rng::StreamKey;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Collision penalty added to the instant cost of every crashed step.
pub const CRASH_PENALTY: f64 = 1e6;

/// What a controller may know about a task: the model family and the cost.
pub trait TaskModel: Send + Sync {
    fn dynamics(&self) -> &dyn Dynamics;
    fn dt(&self) -> f64;
    /// Instant cost of applying the (clamped) control `u` in state `s`.
    /// `collided` is set once the transition out of `s`, or any earlier one,
    /// hit an obstacle.
    fn instant_cost(&self, s: &[f64], u: &[f64], collided: bool) -> f64;
    fn terminal_cost(&self, s: &[f64]) -> f64;
    /// Whether moving from `s` to `next` ends in a crash.
    fn collides(&self, _s: &[f64], _next: &[f64]) -> bool {
        false
    }
    fn crash_penalty(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumCost {
    pub angle: f64,
    pub speed: f64,
    pub control: f64,
}

impl Default for PendulumCost {
    fn default() -> Self {
        // 131 * (10 deg)^2 ~= 4.0, the success threshold
        Self {
            angle: 131.0,
            speed: 0.1,
            control: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumTask {
    pub model: Pendulum,
    pub dt: f64,
    pub cost: PendulumCost,
}

impl Default for PendulumTask {
    fn default() -> Self {
        Self {
            model: Pendulum::default(),
            dt: 0.05,
            cost: PendulumCost::default(),
        }
    }
}

impl TaskModel for PendulumTask {
    fn dynamics(&self) -> &dyn Dynamics {
        &self.model
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn instant_cost(&self, s: &[f64], u: &[f64], _collided: bool) -> f64 {
        let err = wrap_angle(s[0]);
        self.cost.angle * err * err + self.cost.speed * s[1] * s[1] + self.cost.control * u[0] * u[0]
    }
    fn terminal_cost(&self, s: &[f64]) -> f64 {
        self.instant_cost(s, &[0.0], false)
    }
}

/// Circular obstacles on a regular grid inside a walled arena.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleGrid {
    pub centers: Vec<[f64; 2]>,
    pub radius: f64,
    /// `[x_min, y_min, x_max, y_max]`
    pub bounds: [f64; 4],
}

impl Default for ObstacleGrid {
    fn default() -> Self {
        Self::regular(4, 4, [2.0, 2.0], 2.0, 0.6, [0.0, 0.0, 10.0, 10.0])
    }
}

impl ObstacleGrid {
    /// `rows x cols` obstacles at `spacing` intervals starting from `first`.
    pub fn regular(rows: usize, cols: usize, first: [f64; 2], spacing: f64, radius: f64, bounds: [f64; 4]) -> Self {
        let mut centers = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                centers.push([first[0] + c as f64 * spacing, first[1] + r as f64 * spacing]);
            }
        }
        Self { centers, radius, bounds }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [x0, y0, x1, y1] = self.bounds;
        if p[0] < x0 || p[0] > x1 || p[1] < y0 || p[1] > y1 {
            return true;
        }
        self.centers
            .iter()
            .any(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < self.radius * self.radius)
    }

    /// Whether the segment `a -> b` touches an obstacle or leaves the arena.
    pub fn segment_hits(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        self.centers.iter().any(|c| {
            let t = if len2 > 0.0 {
                (((c[0] - a[0]) * d[0] + (c[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [a[0] + t * d[0] - c[0], a[1] + t * d[1] - c[1]];
            q[0] * q[0] + q[1] * q[1] < self.radius * self.radius
        })
    }

    pub fn validate(&self, start: [f64; 2], goal: [f64; 2]) -> Result<()> {
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                if ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= 2.0 * self.radius {
                    return Err(Error::Config("obstacles overlap".into()));
                }
            }
        }
        if self.contains(start) || self.contains(goal) {
            return Err(Error::Config("start or goal lies inside an obstacle".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassCost {
    pub position: f64,
    pub velocity: f64,
    pub control: f64,
    pub terminal_position: f64,
    pub terminal_velocity: f64,
    pub penalty: f64,
}

impl Default for PointMassCost {
    fn default() -> Self {
        Self {
            position: 0.5,
            velocity: 0.25,
            control: 0.2,
            terminal_position: 1000.0,
            terminal_velocity: 0.1,
            penalty: CRASH_PENALTY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassTask {
    pub model: PointMass,
    pub dt: f64,
    pub goal: [f64; 2],
    pub grid: ObstacleGrid,
    pub cost: PointMassCost,
}

impl Default for PointMassTask {
    fn default() -> Self {
        Self {
            model: PointMass::default(),
            dt: 0.05,
            goal: [9.5, 9.5],
            grid: ObstacleGrid::default(),
            cost: PointMassCost::default(),
        }
    }
}

impl TaskModel for PointMassTask {
    fn dynamics(&self) -> &dyn Dynamics {
        &self.model
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn instant_cost(&self, s: &[f64], u: &[f64], collided: bool) -> f64 {
        let e2 = (s[0] - self.goal[0]).powi(2) + (s[1] - self.goal[1]).powi(2);
        let v2 = s[2] * s[2] + s[3] * s[3];
        let u2 = u[0] * u[0] + u[1] * u[1];
        let c = self.cost.position * e2 + self.cost.velocity * v2 + self.cost.control * u2;
        if collided {
            c + self.cost.penalty
        } else {
            c
        }
    }
    fn terminal_cost(&self, s: &[f64]) -> f64 {
        let e2 = (s[0] - self.goal[0]).powi(2) + (s[1] - self.goal[1]).powi(2);
        self.cost.terminal_position * e2 + self.cost.terminal_velocity * (s[2] * s[2] + s[3] * s[3])
    }
    fn collides(&self, s: &[f64], next: &[f64]) -> bool {
        self.grid.segment_hits([s[0], s[1]], [next[0], next[1]])
    }
    fn crash_penalty(&self) -> f64 {
        self.cost.penalty
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkidSteerTask {
    pub model: SkidSteer,
    pub dt: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub ref_speed: f64,
    pub speed_weight: f64,
}

impl Default for SkidSteerTask {
    fn default() -> Self {
        Self {
            model: SkidSteer::default(),
            dt: 0.1,
            center: [0.0, 0.0],
            radius: 1.0,
            ref_speed: 0.2,
            speed_weight: 10.0,
        }
    }
}

impl SkidSteerTask {
    pub fn distance_to_circle(&self, s: &[f64]) -> f64 {
        ((s[0] - self.center[0]).hypot(s[1] - self.center[1]) - self.radius).abs()
    }
}

impl TaskModel for SkidSteerTask {
    fn dynamics(&self) -> &dyn Dynamics {
        &self.model
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn instant_cost(&self, s: &[f64], u: &[f64], _collided: bool) -> f64 {
        let d = self.distance_to_circle(s);
        let (v, _) = self.model.body_rates(u);
        (d * d + self.speed_weight * (v - self.ref_speed).powi(2)).sqrt()
    }
    fn terminal_cost(&self, s: &[f64]) -> f64 {
        self.distance_to_circle(s)
    }
}

/// One of the bundled tasks.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Pendulum(PendulumTask),
    PointMass(PointMassTask),
    SkidSteer(SkidSteerTask),
}

impl Task {
    pub fn model(&self) -> &dyn TaskModel {
        match self {
            Task::Pendulum(t) => t,
            Task::PointMass(t) => t,
            Task::SkidSteer(t) => t,
        }
    }

    pub fn id(&self) -> &'static str {
        self.model().dynamics().name()
    }

    /// Success predicate over a finished episode's logged instant costs and
    /// crash flags.
    pub fn is_success(&self, instant_costs: &[f64], crashed: &[bool]) -> bool {
        match self {
            Task::PointMass(_) => !crashed.iter().any(|c| *c),
            Task::Pendulum(_) => instant_costs.len() >= 5 && instant_costs[instant_costs.len() - 5..].iter().all(|c| *c < 4.0),
            Task::SkidSteer(_) => true,
        }
    }
}

impl TaskModel for Task {
    fn dynamics(&self) -> &dyn Dynamics {
        self.model().dynamics()
    }
    fn dt(&self) -> f64 {
        self.model().dt()
    }
    fn instant_cost(&self, s: &[f64], u: &[f64], collided: bool) -> f64 {
        self.model().instant_cost(s, u, collided)
    }
    fn terminal_cost(&self, s: &[f64]) -> f64 {
        self.model().terminal_cost(s)
    }
    fn collides(&self, s: &[f64], next: &[f64]) -> bool {
        self.model().collides(s, next)
    }
    fn crash_penalty(&self) -> f64 {
        self.model().crash_penalty()
    }
}

/// Everything needed to build one episode's environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub task: Task,
    /// `(step, parameters)` in strictly increasing step order, first at 0.
    pub schedule: Vec<(usize, ParamVec)>,
    pub episode_length: usize,
    pub initial_state: Vec<f64>,
    /// Standard deviation of additive Gaussian noise on emitted observations.
    pub obs_noise_std: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.first().map(|(s, _)| *s) != Some(0) {
            return Err(Error::Config("latent schedule must start at step 0".into()));
        }
        if self.schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("latent schedule steps must be strictly increasing".into()));
        }
        let dynamics = self.task.model().dynamics();
        for (_, p) in &self.schedule {
            dynamics.check_params(&p.decode())?;
        }
        if self.initial_state.len() != dynamics.state_dim() {
            return Err(Error::Config("initial state has the wrong dimension".into()));
        }
        if let Task::PointMass(pm) = &self.task {
            pm.grid.validate([self.initial_state[0], self.initial_state[1]], pm.goal)?;
        }
        Ok(())
    }
}

/// Result of advancing the true system by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub observation: Observation,
    pub crashed: bool,
    /// Instant cost including the crash penalty when crashed.
    pub instant_cost: f64,
}

/// The true system for one episode.
pub struct Environment {
    spec: EnvSpec,
    state: Vec<f64>,
    step: usize,
    crashed: bool,
    noise_key: StreamKey,
}

impl Environment {
    pub fn new(spec: EnvSpec, noise_key: StreamKey) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            state: spec.initial_state.clone(),
            spec,
            step: 0,
            crashed: false,
            noise_key,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn crashed(&self) -> bool {
        self.crashed
    }

    pub fn task(&self) -> &Task {
        &self.spec.task
    }

    pub fn episode_length(&self) -> usize {
        self.spec.episode_length
    }

    /// Latent parameters in force at the current step. Only for baselines
    /// granted perfect model knowledge and for reporting; not part of the
    /// controller interface.
    pub fn privileged_params(&self) -> &ParamVec {
        current_params(&self.spec.schedule, self.step)
    }

    /// Applies `u` to the true system with the currently scheduled parameters.
    pub fn step(&mut self, u: &[f64]) -> Result<StepOutcome> {
        let model = self.spec.task.model();
        let dynamics = model.dynamics();
        let mut uc = vec![0.0; dynamics.control_dim()];
        clamp_control(dynamics, u, &mut uc);
        let prev = self.state.clone();
        if !self.crashed {
            let next = crate::models::step(dynamics, &prev, &uc, self.privileged_params(), model.dt())?;
            if model.collides(&prev, &next) {
                self.crashed = true;
            } else {
                self.state = next;
            }
        }
        let instant_cost = model.instant_cost(&prev, &uc, self.crashed);
        let mut observed = self.state.clone();
        if self.spec.obs_noise_std > 0.0 {
            let mut rng = self.noise_key.with_step(self.step as u64).rng();
            for x in observed.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += self.spec.obs_noise_std * z;
            }
        }
        self.step += 1;
        Ok(StepOutcome {
            state: self.state.clone(),
            observation: Observation {
                x_curr: observed,
                u_prev: uc,
                x_prev: prev,
                step_index: self.step,
            },
            crashed: self.crashed,
            instant_cost,
        })
    }
}

fn current_params(schedule: &[(usize, ParamVec)], step: usize) -> &ParamVec {
    let idx = schedule.partition_point(|(s, _)| *s <= step);
    &schedule[idx.saturating_sub(1)].1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Transform;

    fn point_mass_env(schedule: Vec<(usize, f64)>, x0: Vec<f64>) -> Environment {
        let schedule = schedule
            .into_iter()
            .map(|(s, m)| (s, ParamVec::from_physical(&[m], &[Transform::Log]).unwrap()))
            .collect();
        let spec = EnvSpec {
            task: Task::PointMass(PointMassTask::default()),
            schedule,
            episode_length: 200,
            initial_state: x0,
            obs_noise_std: 0.0,
        };
        Environment::new(spec, StreamKey::from_seed(0)).unwrap()
    }

    #[test]
    fn crash_freezes_state() {
        // heading right at the obstacle centred on (2, 2)
        let mut env = point_mass_env(vec![(0, 2.0)], vec![0.5, 0.5, 1.0, 1.0]);
        let mut crashed_at = None;
        for k in 0..40 {
            let out = env.step(&[0.0, 0.0]).unwrap();
            if out.crashed && crashed_at.is_none() {
                crashed_at = Some((k, out.state.clone()));
            }
        }
        let (_, frozen) = crashed_at.expect("should crash");
        assert!(env.crashed());
        assert_eq!(env.state(), frozen.as_slice());
        let out = env.step(&[10.0, -10.0]).unwrap();
        assert_eq!(out.state, frozen);
        assert!(out.instant_cost >= CRASH_PENALTY);
    }

    #[test]
    fn walls_crash() {
        let mut env = point_mass_env(vec![(0, 2.0)], vec![0.5, 0.5, -2.0, 0.0]);
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert!(!out.crashed);
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert!(!out.crashed);
        for _ in 0..5 {
            env.step(&[0.0, 0.0]).unwrap();
        }
        assert!(env.crashed());
    }

    #[test]
    fn heavier_mass_after_switch_accelerates_less() {
        let mut env = point_mass_env(vec![(0, 2.0), (100, 3.0)], vec![0.5, 0.5, 0.0, 0.0]);
        for _ in 0..50 {
            env.step(&[0.0, 0.0]).unwrap();
        }
        let o = env.step(&[1.0, 0.0]).unwrap().observation;
        let dv_before = o.x_curr[2] - o.x_prev[2];
        while env.step_index() < 100 {
            env.step(&[0.0, 0.0]).unwrap();
        }
        let o = env.step(&[1.0, 0.0]).unwrap().observation;
        let dv_after = o.x_curr[2] - o.x_prev[2];
        assert!(dv_after.abs() < dv_before.abs());
        assert!((dv_before - 0.05 / 2.0).abs() < 1e-12);
        assert!((dv_after - 0.05 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn static_schedule_keeps_parameters() {
        let spec = EnvSpec {
            task: Task::Pendulum(PendulumTask::default()),
            schedule: vec![(0, ParamVec::identity(&[1.2, 0.7]).unwrap())],
            episode_length: 50,
            initial_state: vec![3.0, 0.0],
            obs_noise_std: 0.0,
        };
        let mut env = Environment::new(spec, StreamKey::from_seed(0)).unwrap();
        for _ in 0..50 {
            env.step(&[0.1]).unwrap();
            assert_eq!(env.privileged_params().decode(), vec![1.2, 0.7]);
        }
    }

    #[test]
    fn schedule_must_start_at_zero_and_increase() {
        let p = ParamVec::identity(&[1.0, 1.0]).unwrap();
        let mut spec = EnvSpec {
            task: Task::Pendulum(PendulumTask::default()),
            schedule: vec![(1, p.clone())],
            episode_length: 10,
            initial_state: vec![3.0, 0.0],
            obs_noise_std: 0.0,
        };
        assert!(spec.validate().is_err());
        spec.schedule = vec![(0, p.clone()), (5, p.clone()), (5, p)];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn point_mass_costs() {
        let t = PointMassTask::default();
        let g = t.goal;
        assert_eq!(t.instant_cost(&[g[0], g[1], 0.0, 0.0], &[0.0, 0.0], false), 0.0);
        assert_eq!(t.terminal_cost(&[g[0], g[1], 0.0, 0.0]), 0.0);
        assert!((t.instant_cost(&[g[0] + 1.0, g[1], 0.0, 0.0], &[0.0, 0.0], false) - 0.5).abs() < 1e-15);
        assert_eq!(t.instant_cost(&[g[0], g[1], 0.0, 0.0], &[0.0, 0.0], true), CRASH_PENALTY);
    }

    #[test]
    fn skid_steer_on_circle_at_reference_speed_is_free() {
        let t = SkidSteerTask::default();
        assert!(t.instant_cost(&[0.0, 1.0, 0.0], &[0.2, 0.2], false).abs() < 1e-12);
    }

    #[test]
    fn pendulum_ten_degree_offset_scores_about_four() {
        let t = PendulumTask::default();
        let c = t.instant_cost(&[10f64.to_radians(), 0.0], &[0.0], false);
        assert!((c - 4.0).abs() < 0.02, "{c}");
    }

    #[test]
    fn success_predicates() {
        let pend = Task::Pendulum(PendulumTask::default());
        assert!(pend.is_success(&[100.0, 3.9, 3.9, 3.9, 3.9, 3.9], &[false; 6]));
        assert!(!pend.is_success(&[3.9, 4.1, 3.9, 3.9, 3.9], &[false; 5]));
        let pm = Task::PointMass(PointMassTask::default());
        assert!(!pm.is_success(&[0.0; 3], &[false, true, true]));
        assert!(pm.is_success(&[0.0; 3], &[false; 3]));
    }

    #[test]
    fn default_grid_is_valid() {
        let t = PointMassTask::default();
        assert_eq!(t.grid.centers.len(), 16);
        t.grid.validate([0.5, 0.5], t.goal).unwrap();
    }
}
