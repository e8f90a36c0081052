//! Experiment configuration: a TOML file with a few top-level keys and one
//! section per task. Any key missing from a section takes its task default.
//!
//! ```toml
//! task = "point_mass"
//! controller = "dust"
//! episodes = 20
//! seed = 7
//!
//! [point_mass]
//! alpha = 2.0
//!
//! [point_mass.scene.cost]
//! control = 0.1
//! ```

use crate::baselines::MppiConfig;
use crate::dyn_inference::{DynPosterior, DynUpdateConfig, GmmCovariance, PriorDist};
use crate::envs::{EnvSpec, PendulumTask, PointMassTask, SkidSteerTask, Task};
use crate::error::{Error, Result};
use crate::models::{ParamVec, Transform};
use crate::policy::PolicyConfig;
use crate::rng::{Role, StreamKey};
use crate::svgd::{BandwidthRule, KernelSpec, SvgdConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Pendulum,
    PointMass,
    SkidSteer,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Pendulum, TaskId::PointMass, TaskId::SkidSteer];

    pub fn key(self) -> &'static str {
        match self {
            TaskId::Pendulum => "pendulum",
            TaskId::PointMass => "point_mass",
            TaskId::SkidSteer => "skid_steer",
        }
    }

    fn from_key(key: &str) -> Option<TaskId> {
        TaskId::ALL.into_iter().find(|t| t.key() == key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerId {
    /// Stein variational MPC with online dynamics inference.
    Dust,
    /// Stein variational MPC with a fixed parameter estimate.
    Svmpc,
    /// MPPI given the true latent parameters.
    Mppi,
}

/// Mixture covariance: a bandwidth rule or fixed standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GmmSetting {
    Rule(BandwidthRule),
    Std(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub step: usize,
    pub values: Vec<f64>,
}

/// How the true latent parameters evolve over an episode (physical units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatentSpec {
    Schedule { entries: Vec<ScheduleEntry> },
    /// Drawn once per episode, uniform per coordinate, constant thereafter.
    Uniform { low: Vec<f64>, high: Vec<f64> },
}

/// Every per-task setting. Defaults transcribe the task's hyperparameter
/// column; `scene` overrides fields of the task description (time step,
/// costs, arena, actuator bounds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub num_policies: usize,
    pub horizon: usize,
    pub action_samples: usize,
    pub dyn_samples: usize,
    pub alpha: f64,
    /// Action sampling standard deviation per control dimension.
    pub control_std: Vec<f64>,
    /// Policy prior mixture standard deviation per control dimension.
    pub prior_std: Vec<f64>,
    pub policy_step_size: f64,
    pub policy_kernel: KernelSpec,
    pub dyn_particles: usize,
    pub gmm_covariance: GmmSetting,
    /// Observation noise standard deviation assumed by the dynamics likelihood.
    pub obs_std: f64,
    pub dyn_steps: usize,
    pub dyn_step_size: f64,
    pub log_space: bool,
    pub dyn_kernel: KernelSpec,
    /// Initial particle distribution per parameter, in inference space
    /// (log space when `log_space` is set).
    pub dyn_prior: Vec<PriorDist>,
    pub dyn_update_every: usize,
    /// Fixed parameter estimate (physical units) used by the fixed-model baseline.
    pub svmpc_estimate: Vec<f64>,
    pub mppi_samples: usize,
    pub mppi_lambda: f64,
    pub episode_length: usize,
    pub initial_state: Vec<f64>,
    pub latent: LatentSpec,
    /// Standard deviation of noise added to emitted observations.
    pub obs_noise_std: f64,
    pub scene: toml::Table,
}

fn uniform(low: f64, high: f64) -> PriorDist {
    PriorDist::Uniform { low, high }
}

fn scene_table<T: Serialize>(scene: &T) -> toml::Table {
    toml::Table::try_from(scene).expect("scene serializes to a table")
}

impl TaskParams {
    /// The default settings for `task`.
    pub fn defaults(task: TaskId) -> Self {
        let silverman = KernelSpec::rule(BandwidthRule::Silverman);
        let median = KernelSpec::rule(BandwidthRule::Median);
        match task {
            TaskId::Pendulum => TaskParams {
                num_policies: 3,
                horizon: 20,
                action_samples: 32,
                dyn_samples: 8,
                alpha: 1.0,
                control_std: vec![2.0],
                prior_std: vec![2.0],
                policy_step_size: 2.0,
                policy_kernel: silverman,
                dyn_particles: 50,
                gmm_covariance: GmmSetting::Rule(BandwidthRule::ImprovedSheatherJones),
                obs_std: 0.1,
                dyn_steps: 20,
                dyn_step_size: 0.001,
                log_space: false,
                dyn_kernel: median,
                dyn_prior: vec![uniform(0.5, 1.5), uniform(0.5, 1.5)],
                dyn_update_every: 1,
                svmpc_estimate: vec![1.0, 1.0],
                mppi_samples: 512,
                mppi_lambda: 1.0,
                episode_length: 200,
                initial_state: vec![3.0, 0.0],
                latent: LatentSpec::Uniform {
                    low: vec![0.5, 0.5],
                    high: vec![1.5, 1.5],
                },
                obs_noise_std: 0.0,
                scene: scene_table(&PendulumTask::default()),
            },
            TaskId::PointMass => TaskParams {
                num_policies: 6,
                horizon: 40,
                action_samples: 64,
                dyn_samples: 4,
                alpha: 1.0,
                control_std: vec![5.0, 5.0],
                prior_std: vec![5.0, 5.0],
                policy_step_size: 100.0,
                policy_kernel: silverman,
                dyn_particles: 50,
                gmm_covariance: GmmSetting::Std(vec![0.25]),
                obs_std: 0.1,
                dyn_steps: 20,
                dyn_step_size: 0.01,
                log_space: true,
                dyn_kernel: median,
                dyn_prior: vec![PriorDist::Normal {
                    mean: 2f64.ln(),
                    std: 0.5,
                }],
                dyn_update_every: 1,
                svmpc_estimate: vec![2.0],
                mppi_samples: 512,
                mppi_lambda: 1.0,
                episode_length: 200,
                initial_state: vec![0.5, 0.5, 0.0, 0.0],
                latent: LatentSpec::Schedule {
                    entries: vec![
                        ScheduleEntry { step: 0, values: vec![2.0] },
                        ScheduleEntry { step: 100, values: vec![3.0] },
                    ],
                },
                obs_noise_std: 0.0,
                scene: scene_table(&PointMassTask::default()),
            },
            TaskId::SkidSteer => TaskParams {
                num_policies: 2,
                horizon: 20,
                action_samples: 50,
                dyn_samples: 4,
                alpha: 1.0,
                control_std: vec![0.1, 0.1],
                prior_std: vec![1.0, 1.0],
                policy_step_size: 0.02,
                policy_kernel: silverman,
                dyn_particles: 50,
                gmm_covariance: GmmSetting::Std(vec![0.0625]),
                obs_std: 0.1,
                dyn_steps: 5,
                dyn_step_size: 0.05,
                log_space: false,
                dyn_kernel: median,
                dyn_prior: vec![PriorDist::Normal { mean: 0.5, std: 0.2 }],
                dyn_update_every: 1,
                svmpc_estimate: vec![0.5],
                mppi_samples: 512,
                mppi_lambda: 1.0,
                episode_length: 400,
                initial_state: vec![1.0, 0.0, std::f64::consts::FRAC_PI_2],
                latent: LatentSpec::Schedule {
                    entries: vec![
                        ScheduleEntry { step: 0, values: vec![0.3] },
                        ScheduleEntry { step: 200, values: vec![0.45] },
                    ],
                },
                obs_noise_std: 0.0,
                scene: scene_table(&SkidSteerTask::default()),
            },
        }
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub controller: ControllerId,
    pub episodes: usize,
    pub seed: u64,
    /// Worker threads for the batch; `None` uses the global pool.
    pub threads: Option<usize>,
    pub params: TaskParams,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn take<T: for<'de> Deserialize<'de>>(table: &mut toml::Table, key: &str) -> Result<Option<T>> {
    match table.remove(key) {
        None => Ok(None),
        Some(v) => v
            .try_into()
            .map(Some)
            .map_err(|e| config_err(format!("`{key}`: {e}"))),
    }
}

impl ExperimentConfig {
    /// Task defaults with the given controller, 10 episodes, seed 0.
    pub fn new(task: TaskId, controller: ControllerId) -> Self {
        Self {
            task,
            controller,
            episodes: 10,
            seed: 0,
            threads: None,
            params: TaskParams::defaults(task),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
        let task: TaskId = take(&mut table, "task")?.ok_or_else(|| config_err("missing `task`"))?;
        let controller: ControllerId =
            take(&mut table, "controller")?.ok_or_else(|| config_err("missing `controller`"))?;
        let episodes = take(&mut table, "episodes")?.unwrap_or(10);
        let seed = take(&mut table, "seed")?.unwrap_or(0);
        let threads = take(&mut table, "threads")?;

        let mut section = toml::Table::try_from(TaskParams::defaults(task)).expect("defaults serialize");
        for (key, value) in table {
            let Some(id) = TaskId::from_key(&key) else {
                return Err(config_err(format!("unknown key `{key}`")));
            };
            if id != task {
                continue;
            }
            let toml::Value::Table(overrides) = value else {
                return Err(config_err(format!("`{key}` must be a table")));
            };
            section.extend(overrides);
        }
        let params: TaskParams = toml::Value::Table(section)
            .try_into()
            .map_err(|e| config_err(format!("[{}]: {e}", task.key())))?;
        let mut cfg = Self {
            task,
            controller,
            episodes,
            seed,
            threads,
            params,
        };
        // normalise the scene so the echo lists every field
        cfg.params.scene = match cfg.task()? {
            Task::Pendulum(t) => scene_table(&t),
            Task::PointMass(t) => scene_table(&t),
            Task::SkidSteer(t) => scene_table(&t),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The resolved configuration as TOML; parses back to an equal value.
    pub fn to_toml_string(&self) -> String {
        let mut table = toml::Table::new();
        table.insert("task".into(), toml::Value::try_from(self.task).expect("enum serializes"));
        table.insert("controller".into(), toml::Value::try_from(self.controller).expect("enum serializes"));
        table.insert("episodes".into(), toml::Value::Integer(self.episodes as i64));
        table.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        if let Some(t) = self.threads {
            table.insert("threads".into(), toml::Value::Integer(t as i64));
        }
        table.insert(
            self.task.key().into(),
            toml::Value::try_from(&self.params).expect("params serialize"),
        );
        toml::to_string(&table).expect("config serializes")
    }

    /// The task description built from the scene table.
    pub fn task(&self) -> Result<Task> {
        let scene = toml::Value::Table(self.params.scene.clone());
        let err = |e: toml::de::Error| config_err(format!("[{}.scene]: {e}", self.task.key()));
        Ok(match self.task {
            TaskId::Pendulum => Task::Pendulum(scene.try_into().map_err(err)?),
            TaskId::PointMass => Task::PointMass(scene.try_into().map_err(err)?),
            TaskId::SkidSteer => Task::SkidSteer(scene.try_into().map_err(err)?),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let task = self.task()?;
        let model = task.model().dynamics();
        let (ud, np) = (model.control_dim(), model.param_names().len());
        if self.episodes == 0 {
            return Err(config_err("episodes must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be at least 1"));
        }
        if p.control_std.len() != ud || p.prior_std.len() != ud {
            return Err(config_err(format!("control_std and prior_std need {ud} entries")));
        }
        if p.dyn_prior.len() != np || p.svmpc_estimate.len() != np {
            return Err(config_err(format!("dyn_prior and svmpc_estimate need {np} entries")));
        }
        if let GmmSetting::Std(s) = &p.gmm_covariance {
            if s.len() != np || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(config_err(format!("gmm_covariance needs {np} positive entries")));
            }
        }
        if p.dyn_particles == 0 || p.dyn_update_every == 0 || p.mppi_samples == 0 {
            return Err(config_err("particle counts and update interval must be positive"));
        }
        if !(p.obs_std > 0.0) || !(p.dyn_step_size > 0.0) || !(p.mppi_lambda > 0.0) || !(p.obs_noise_std >= 0.0) {
            return Err(config_err("obs_std, dyn_step_size and mppi_lambda must be positive"));
        }
        if p.horizon < 2 {
            return Err(config_err("horizon must be at least 2"));
        }
        if p.episode_length == 0 {
            return Err(config_err("episode_length must be positive"));
        }
        if let LatentSpec::Uniform { low, high } = &p.latent {
            if low.len() != np || high.len() != np || low.iter().zip(high).any(|(l, h)| !(l < h)) {
                return Err(config_err("latent bounds need low < high for every parameter"));
            }
        }
        self.policy_config().validate()?;
        ParamVec::from_physical(&p.svmpc_estimate, &self.transforms())?;
        self.env_spec(0)?.validate()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        let n = self.task().map(|t| t.model().dynamics().param_names().len()).unwrap_or(0);
        let t = if self.params.log_space {
            Transform::Log
        } else {
            Transform::Identity
        };
        vec![t; n]
    }

    pub fn policy_config(&self) -> PolicyConfig {
        let p = &self.params;
        let sq = |v: &[f64]| v.iter().map(|s| s * s).collect::<Vec<_>>();
        PolicyConfig {
            num_policies: p.num_policies,
            horizon: p.horizon,
            control_dim: p.control_std.len(),
            action_var: sq(&p.control_std),
            prior_var: sq(&p.prior_std),
            alpha: p.alpha,
            num_action_samples: p.action_samples,
            num_dyn_samples: p.dyn_samples,
            step_size: p.policy_step_size,
            kernel: p.policy_kernel.clone(),
        }
    }

    pub fn mppi_config(&self) -> MppiConfig {
        let p = &self.params;
        MppiConfig {
            horizon: p.horizon,
            control_dim: p.control_std.len(),
            noise_var: p.control_std.iter().map(|s| s * s).collect(),
            lambda: p.mppi_lambda,
            num_samples: p.mppi_samples,
        }
    }

    pub fn dyn_update(&self) -> Result<DynUpdateConfig> {
        Ok(DynUpdateConfig {
            svgd: SvgdConfig::new(self.params.dyn_step_size, self.params.dyn_steps)?,
            kernel: self.params.dyn_kernel.clone(),
        })
    }

    pub fn gmm_covariance(&self) -> GmmCovariance {
        match &self.params.gmm_covariance {
            GmmSetting::Rule(r) => GmmCovariance::Rule(*r),
            GmmSetting::Std(s) => GmmCovariance::Fixed(s.iter().map(|x| x * x).collect()),
        }
    }

    /// Initial dynamics posterior for `episode`.
    pub fn initial_posterior(&self, episode: usize) -> Result<DynPosterior> {
        let sd = self.task()?.model().dynamics().state_dim();
        DynPosterior::from_prior(
            &self.params.dyn_prior,
            self.params.dyn_particles,
            self.transforms(),
            self.gmm_covariance(),
            vec![self.params.obs_std * self.params.obs_std; sd],
            self.key(episode, Role::DynamicsInit),
        )
    }

    pub fn svmpc_estimate(&self) -> Result<ParamVec> {
        ParamVec::from_physical(&self.params.svmpc_estimate, &self.transforms())
    }

    pub fn key(&self, episode: usize, role: Role) -> StreamKey {
        StreamKey::new(self.seed, episode as u64, 0, role)
    }

    /// True latent schedule for `episode` (physical units).
    pub fn latent_schedule(&self, episode: usize) -> Result<Vec<(usize, ParamVec)>> {
        match &self.params.latent {
            LatentSpec::Schedule { entries } => entries
                .iter()
                .map(|e| Ok((e.step, ParamVec::identity(&e.values)?)))
                .collect(),
            LatentSpec::Uniform { low, high } => {
                let mut rng = self.key(episode, Role::LatentInit).rng();
                let values: Vec<f64> = low.iter().zip(high).map(|(l, h)| rng.gen_range(*l..*h)).collect();
                Ok(vec![(0, ParamVec::identity(&values)?)])
            }
        }
    }

    pub fn env_spec(&self, episode: usize) -> Result<EnvSpec> {
        Ok(EnvSpec {
            task: self.task()?,
            schedule: self.latent_schedule(episode)?,
            episode_length: self.params.episode_length,
            initial_state: self.params.initial_state.clone(),
            obs_noise_std: self.params.obs_noise_std,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_task_defaults() {
        for task in TaskId::ALL {
            let text = format!("task = \"{}\"\ncontroller = \"dust\"\n", task.key());
            let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(cfg.params, TaskParams::defaults(task));
            assert_eq!(cfg.episodes, 10);
        }
    }

    #[test]
    fn overrides_and_nested_scene() {
        let text = r#"
            task = "point_mass"
            controller = "svmpc"
            episodes = 3
            seed = 11
            [point_mass]
            alpha = 2.5
            [point_mass.scene.cost]
            control = 0.1
            [pendulum]
            alpha = 99.0
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.params.alpha, 2.5);
        assert_eq!(cfg.seed, 11);
        let Task::PointMass(t) = cfg.task().unwrap() else { panic!() };
        assert_eq!(t.cost.control, 0.1);
        assert_eq!(t.cost.position, 0.5);
        assert_eq!(t.goal, [9.5, 9.5]);
    }

    #[test]
    fn echo_round_trips() {
        for task in TaskId::ALL {
            let mut cfg = ExperimentConfig::new(task, ControllerId::Mppi);
            cfg.threads = Some(3);
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn rejects_bad_files() {
        let bad = [
            "controller = \"dust\"",
            "task = \"pendulum\"\ncontroller = \"dust\"\nfoo = 1",
            "task = \"pendulum\"\ncontroller = \"dust\"\n[pendulum]\nhorizon_typo = 3",
            "task = \"pendulum\"\ncontroller = \"dust\"\n[pendulum]\ncontrol_std = [1.0, 2.0]",
            "task = \"pendulum\"\ncontroller = \"dust\"\n[pendulum]\nalpha = -1.0",
            "task = \"point_mass\"\ncontroller = \"dust\"\n[point_mass]\nsvmpc_estimate = [-2.0]",
            "task = \"point_mass\"\ncontroller = \"dust\"\n[point_mass]\ninitial_state = [2.0, 2.0, 0.0, 0.0]",
            "task = \"pendulum\"\ncontroller = \"dust\"\nepisodes = 0",
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn pendulum_latents_vary_by_episode_and_stay_in_range() {
        let cfg = ExperimentConfig::new(TaskId::Pendulum, ControllerId::Dust);
        let a = cfg.latent_schedule(0).unwrap()[0].1.decode();
        let b = cfg.latent_schedule(1).unwrap()[0].1.decode();
        assert_ne!(a, b);
        assert_eq!(a, cfg.latent_schedule(0).unwrap()[0].1.decode());
        assert!(a.iter().chain(&b).all(|x| (0.5..1.5).contains(x)));
        // the controller choice does not change the latent draw
        let other = ExperimentConfig {
            controller: ControllerId::Mppi,
            ..cfg.clone()
        };
        assert_eq!(other.latent_schedule(0).unwrap(), cfg.latent_schedule(0).unwrap());
    }
}
