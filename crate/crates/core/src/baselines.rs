//! Model predictive path integral control, the sampling baseline that plans
//! with a known point estimate of the dynamics parameters.
//!
//! The Stein variational baseline with a fixed parameter estimate is
//! [`crate::controller::SteinMpc`] with [`crate::controller::DynamicsBelief::Fixed`].

use crate::envs::TaskModel;
use crate::error::{Error, Result};
use crate::gmm::softmax;
use crate::models::ParamVec;
use crate::policy::{trajectory_cost, ROLLOUT_FAILURE_COST};
use crate::rng::StreamKey;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct MppiConfig {
    pub horizon: usize,
    pub control_dim: usize,
    /// Sampling variance per control dimension.
    pub noise_var: Vec<f64>,
    /// Temperature; weights are `softmax(-C / lambda)`.
    pub lambda: f64,
    pub num_samples: usize,
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.control_dim == 0 || self.num_samples == 0 {
            return Err(Error::Config("MPPI horizon, control dimension and sample count must be positive".into()));
        }
        if self.noise_var.len() != self.control_dim || self.noise_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("MPPI noise variances must be positive, one per control".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("MPPI temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Mean control sequence (flattened `H x control_dim`) and its sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct MppiState {
    pub cfg: MppiConfig,
    pub mean: Vec<f64>,
}

/// Everything one MPPI iteration computed, for logging.
#[derive(Clone, Debug, PartialEq)]
pub struct MppiUpdate {
    pub samples: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MppiState {
    pub fn new(cfg: MppiConfig) -> Result<Self> {
        cfg.validate()?;
        let mean = vec![0.0; cfg.horizon * cfg.control_dim];
        Ok(Self { cfg, mean })
    }

    /// `K` perturbed copies of the mean; sample `k` uses cell `k` of `key`.
    pub fn sample(&self, key: StreamKey) -> Vec<Vec<f64>> {
        let ud = self.cfg.control_dim;
        let std: Vec<f64> = self.cfg.noise_var.iter().map(|v| v.sqrt()).collect();
        (0..self.cfg.num_samples)
            .map(|k| {
                let mut rng = key.cell_rng(k, 0, 0);
                self.mean
                    .iter()
                    .enumerate()
                    .map(|(j, m)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + std[j % ud] * z
                    })
                    .collect()
            })
            .collect()
    }

    /// Importance-weighted average of `samples` given their costs.
    pub fn reweight(&mut self, samples: Vec<Vec<f64>>, costs: Vec<f64>) -> MppiUpdate {
        let scaled: Vec<f64> = costs.iter().map(|c| -c / self.cfg.lambda).collect();
        let weights = softmax(&scaled);
        let mut mean = vec![0.0; self.mean.len()];
        for (w, s) in weights.iter().zip(&samples) {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += w * x;
            }
        }
        self.mean = mean;
        MppiUpdate {
            samples,
            costs,
            weights,
        }
    }

    /// Drops the first action and repeats the last one.
    pub fn shift(&mut self) {
        let ud = self.cfg.control_dim;
        self.mean.drain(..ud);
        let last = self.mean[self.mean.len() - ud..].to_vec();
        self.mean.extend(last);
    }

    /// One control step: sample, evaluate under `params`, reweight, emit the
    /// first action, shift.
    pub fn step(&mut self, task: &dyn TaskModel, x0: &[f64], params: &ParamVec, key: StreamKey) -> (Vec<f64>, MppiUpdate) {
        let samples = self.sample(key);
        let phys = params.decode();
        let valid = task.dynamics().check_params(&phys).is_ok();
        let costs: Vec<f64> = samples
            .par_iter()
            .map(|u| if valid { trajectory_cost(task, x0, u, &phys) } else { ROLLOUT_FAILURE_COST })
            .collect();
        let update = self.reweight(samples, costs);
        let bounds = task.dynamics().control_bounds();
        let ud = self.cfg.control_dim;
        for (k, m) in self.mean.iter_mut().enumerate() {
            *m = m.clamp(bounds[k % ud].0, bounds[k % ud].1);
        }
        let control = self.mean[..self.cfg.control_dim].to_vec();
        self.shift();
        (control, update)
    }
}
