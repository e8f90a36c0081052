//! One closed-loop episode: environment, controller, and the per-step log.

use super::config::{ControllerId, ExperimentConfig};
use crate::baselines::MppiState;
use crate::controller::{DynamicsBelief, SteinMpc, TickReport};
use crate::dyn_inference::Observation;
use crate::envs::{Environment, Task, TaskModel};
use crate::error::Result;
use crate::gmm::log_sum_exp;
use crate::rng::{Role, StreamKey};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// One row of the trajectory log: the state at `step`, the control applied
/// in it (after clamping), its instant cost, and whether the system had
/// crashed by the end of the step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub instant_cost: f64,
    pub crashed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRecord {
    pub step: usize,
    pub selected: usize,
    pub weights: Vec<f64>,
    pub log_lik: Vec<f64>,
    pub control: Vec<f64>,
}

/// Dynamics belief after the update of one step, in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSnapshot {
    pub step: usize,
    pub particles: Vec<Vec<f64>>,
    /// Mixture variances in inference space; empty for a fixed estimate.
    pub gmm_var: Vec<f64>,
    /// Highest-density particle; for a fixed estimate, the estimate.
    pub mode: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// True latent schedule, `(step, physical values)`.
    pub latent: Vec<(usize, Vec<f64>)>,
    pub steps: Vec<StepRecord>,
    pub policy: Vec<PolicyRecord>,
    pub posterior: Vec<PosteriorSnapshot>,
    /// Sum of instant costs without crash penalties.
    pub cumulative_cost: f64,
    pub success: bool,
    pub crashed: bool,
    /// Diagnostic of the failure that ended the episode early, if any.
    pub aborted: Option<String>,
    pub wall_clock_s: f64,
}

/// Per-episode line of the batch summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub cumulative_cost: f64,
    pub success: bool,
    pub crashed: bool,
    pub steps: usize,
    pub aborted: Option<String>,
}

impl EpisodeRecord {
    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            episode: self.episode,
            cumulative_cost: self.cumulative_cost,
            success: self.success,
            crashed: self.crashed,
            steps: self.steps.len(),
            aborted: self.aborted.clone(),
        }
    }

    pub fn instant_costs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.instant_cost).collect()
    }
}

/// Cumulative cost with the crash penalty removed from every crashed step.
pub fn cost_without_penalty(costs: &[f64], crashed: &[bool], penalty: f64) -> f64 {
    costs.iter().sum::<f64>() - penalty * crashed.iter().filter(|c| **c).count() as f64
}

enum Planner {
    Stein(Box<SteinMpc<Task>>),
    Mppi(MppiState, StreamKey),
}

impl Planner {
    fn new(cfg: &ExperimentConfig, episode: usize) -> Result<Self> {
        let task = cfg.task()?;
        let belief = match cfg.controller {
            ControllerId::Mppi => {
                return Ok(Planner::Mppi(MppiState::new(cfg.mppi_config())?, cfg.key(episode, Role::Mppi)))
            }
            ControllerId::Svmpc => DynamicsBelief::Fixed(cfg.svmpc_estimate()?),
            ControllerId::Dust => DynamicsBelief::Learned {
                posterior: cfg.initial_posterior(episode)?,
                update: cfg.dyn_update()?,
                update_every: cfg.params.dyn_update_every,
            },
        };
        let key = cfg.key(episode, Role::PolicyInit);
        Ok(Planner::Stein(Box::new(SteinMpc::new(task, cfg.policy_config(), belief, key)?)))
    }

    fn tick(&mut self, step: usize, env: &Environment, obs: Option<&Observation>) -> Result<TickReport> {
        match self {
            Planner::Stein(c) => c.tick(step, env.state(), obs),
            Planner::Mppi(m, key) => {
                // MPPI is granted the true parameters
                let key = key.with_step(step as u64);
                let (control, update) = m.step(env.task().model(), env.state(), env.privileged_params(), key);
                let scaled: Vec<f64> = update.costs.iter().map(|c| -c / m.cfg.lambda).collect();
                let log_lik = log_sum_exp(&scaled) - (scaled.len() as f64).ln();
                Ok(TickReport {
                    control,
                    selected: 0,
                    weights: vec![1.0],
                    log_lik: vec![log_lik],
                })
            }
        }
    }

    fn snapshot(&self, step: usize) -> Option<PosteriorSnapshot> {
        let Planner::Stein(c) = self else { return None };
        Some(match c.belief() {
            DynamicsBelief::Fixed(p) => PosteriorSnapshot {
                step,
                particles: vec![p.decode()],
                gmm_var: vec![],
                mode: p.decode(),
            },
            DynamicsBelief::Learned { posterior, .. } => PosteriorSnapshot {
                step,
                particles: posterior.decoded_rows(),
                gmm_var: posterior.gmm_var().to_vec(),
                mode: posterior.mode().decode(),
            },
        })
    }
}

/// Runs episode `episode` of `cfg`. With `replay`, the logged controls are
/// applied instead of the controller's choices while the controller still
/// runs and updates its beliefs; the replay must cover the episode length.
pub fn run_episode_with(cfg: &ExperimentConfig, episode: usize, replay: Option<&[Vec<f64>]>) -> Result<EpisodeRecord> {
    let start = Instant::now();
    let spec = cfg.env_spec(episode)?;
    let latent = spec.schedule.iter().map(|(s, p)| (*s, p.decode())).collect();
    let task = spec.task.clone();
    let mut env = Environment::new(spec, cfg.key(episode, Role::Environment))?;
    let mut planner = Planner::new(cfg, episode)?;
    let length = cfg.params.episode_length;
    if let Some(r) = replay {
        if r.len() < length {
            return Err(crate::Error::InvalidArgument(format!(
                "replay has {} controls for an episode of {length} steps",
                r.len()
            )));
        }
    }

    let mut steps = Vec::with_capacity(length);
    let mut policy = Vec::with_capacity(length);
    let mut posterior = Vec::with_capacity(length);
    let mut last_obs: Option<Observation> = None;
    let mut aborted = None;
    for t in 0..length {
        let report = match planner.tick(t, &env, last_obs.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("episode {episode} aborted: {e}");
                aborted = Some(e.at_step(t).to_string());
                break;
            }
        };
        if let Some(snap) = planner.snapshot(t) {
            posterior.push(snap);
        }
        let u = replay.map_or(report.control.clone(), |r| r[t].clone());
        let state = env.state().to_vec();
        let out = env.step(&u)?;
        steps.push(StepRecord {
            step: t,
            state,
            control: out.observation.u_prev.clone(),
            instant_cost: out.instant_cost,
            crashed: out.crashed,
        });
        policy.push(PolicyRecord {
            step: t,
            selected: report.selected,
            weights: report.weights,
            log_lik: report.log_lik,
            control: report.control,
        });
        last_obs = Some(out.observation);
    }

    let costs: Vec<f64> = steps.iter().map(|s| s.instant_cost).collect();
    let crashed_flags: Vec<bool> = steps.iter().map(|s| s.crashed).collect();
    let cumulative_cost = cost_without_penalty(&costs, &crashed_flags, task.crash_penalty());
    let success = aborted.is_none() && task.is_success(&costs, &crashed_flags);
    Ok(EpisodeRecord {
        episode,
        latent,
        steps,
        policy,
        posterior,
        cumulative_cost,
        success,
        crashed: env.crashed(),
        aborted,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs episode `episode` of `cfg` in closed loop.
pub fn run_episode(cfg: &ExperimentConfig, episode: usize) -> Result<EpisodeRecord> {
    run_episode_with(cfg, episode, None)
}
