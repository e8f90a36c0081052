//! Online inference over dynamics parameters.
//!
//! The posterior is carried as particles in encoded parameter space plus an
//! equal-weight Gaussian mixture with diagonal covariance centred on them.
//! Each observed transition moves the particles with a few SVGD steps whose
//! score is the transition log-likelihood gradient plus the gradient of the
//! previous mixture, which stays frozen for the duration of the update.

use crate::error::{Error, Result};
use crate::gmm;
use crate::models::{likelihood_grad_fd, Dynamics, ParamVec, Transform};
use crate::rng::StreamKey;
use crate::svgd::{isj_bandwidth, silverman_bandwidth, svgd_step, BandwidthRule, KernelSpec, ParticleSet, SvgdConfig};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One real transition `(x_t, u_{t-1}, x_{t-1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x_curr: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub step_index: usize,
}

/// How the mixture covariance is chosen after each update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmCovariance {
    /// Fixed per-dimension variances.
    Fixed(Vec<f64>),
    /// Per-dimension deviation from a bandwidth rule, squared.
    Rule(BandwidthRule),
}

/// Marginal prior for one encoded coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
}

impl PriorDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorDist::Uniform { low, high } => rng.gen_range(low..high),
            PriorDist::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
        }
    }
}

/// Settings for one `observe` call.
#[derive(Clone, Debug, PartialEq)]
pub struct DynUpdateConfig {
    pub svgd: SvgdConfig,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynPosterior {
    particles: ParticleSet,
    transforms: Vec<Transform>,
    covariance: GmmCovariance,
    gmm_var: Vec<f64>,
    obs_var: Vec<f64>,
}

fn fit_variance(particles: &ParticleSet, covariance: &GmmCovariance) -> Result<Vec<f64>> {
    let var = match covariance {
        GmmCovariance::Fixed(v) => {
            if v.len() != particles.dim() {
                return Err(Error::InvalidArgument(format!(
                    "mixture covariance has {} entries for {} parameters",
                    v.len(),
                    particles.dim()
                )));
            }
            v.clone()
        }
        GmmCovariance::Rule(rule) => {
            let sigma = match rule {
                _ if particles.len() < 2 => vec![crate::svgd::BANDWIDTH_FLOOR; particles.dim()],
                BandwidthRule::ImprovedSheatherJones => {
                    (0..particles.dim()).map(|d| isj_bandwidth(&particles.column(d))).collect()
                }
                BandwidthRule::Scott => crate::svgd::scott_bandwidth(particles)?,
                // the median heuristic is a kernel rule; Silverman is the
                // closest density-estimation rule
                BandwidthRule::Silverman | BandwidthRule::Median => silverman_bandwidth(particles)?,
            };
            sigma.iter().map(|s| s * s).collect()
        }
    };
    if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("mixture variances must be positive: {var:?}")));
    }
    Ok(var)
}

impl DynPosterior {
    pub fn new(
        particles: ParticleSet,
        transforms: Vec<Transform>,
        covariance: GmmCovariance,
        obs_var: Vec<f64>,
    ) -> Result<Self> {
        if transforms.len() != particles.dim() {
            return Err(Error::InvalidArgument("one transform per parameter required".into()));
        }
        if obs_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("observation variances must be positive".into()));
        }
        let gmm_var = fit_variance(&particles, &covariance)?;
        Ok(Self {
            particles,
            transforms,
            covariance,
            gmm_var,
            obs_var,
        })
    }

    /// Draws `n` initial particles i.i.d. from per-coordinate priors given in
    /// encoded space.
    pub fn from_prior(
        prior: &[PriorDist],
        n: usize,
        transforms: Vec<Transform>,
        covariance: GmmCovariance,
        obs_var: Vec<f64>,
        key: StreamKey,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one dynamics particle".into()));
        }
        let mut rng = key.rng();
        let mut data = Vec::with_capacity(n * prior.len());
        for _ in 0..n {
            for p in prior {
                data.push(p.sample(&mut rng));
            }
        }
        Self::new(ParticleSet::new(n, prior.len(), data)?, transforms, covariance, obs_var)
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn gmm_var(&self) -> &[f64] {
        &self.gmm_var
    }

    pub fn obs_var(&self) -> &[f64] {
        &self.obs_var
    }

    pub fn covariance(&self) -> &GmmCovariance {
        &self.covariance
    }

    pub fn param(&self, i: usize) -> ParamVec {
        ParamVec::from_encoded(self.particles.row(i).to_vec(), self.transforms.clone())
            .expect("particles are finite")
    }

    /// Log-density of the mixture at an encoded point and its gradient.
    pub fn gmm_log_density_and_grad(&self, phi: &[f64]) -> (f64, Vec<f64>) {
        gmm_log_density_and_grad(&self.particles, &self.gmm_var, phi)
    }

    /// Runs the configured SVGD steps against one observed transition. The
    /// current mixture acts as the prior and is not refreshed mid-update.
    pub fn observe(
        &self,
        obs: &Observation,
        model: &dyn Dynamics,
        dt: f64,
        cfg: &DynUpdateConfig,
    ) -> Result<DynPosterior> {
        if cfg.svgd.num_steps == 0 {
            return Ok(self.clone());
        }
        let dim = self.particles.dim();
        let score_fn = |ps: &ParticleSet| -> Result<Vec<f64>> {
            let rows: Vec<Result<Vec<f64>>> = (0..ps.len())
                .into_par_iter()
                .map(|i| {
                    let phi = ParamVec::from_encoded(ps.row(i).to_vec(), self.transforms.clone())?;
                    let mut g = likelihood_grad_fd(model, obs, &phi, &self.obs_var, dt).map_err(|e| {
                        Error::NumericalFailure {
                            index: i,
                            detail: e.to_string(),
                        }
                    })?;
                    let (_, prior_grad) = self.gmm_log_density_and_grad(ps.row(i));
                    for (a, b) in g.iter_mut().zip(prior_grad) {
                        *a += b;
                    }
                    Ok(g)
                })
                .collect();
            let mut out = Vec::with_capacity(ps.len() * dim);
            for r in rows {
                out.extend(r?);
            }
            Ok(out)
        };
        let moved = svgd_step(&self.particles, score_fn, &cfg.kernel, &cfg.svgd)
            .map_err(|e| e.at_step(obs.step_index))?;
        let gmm_var = fit_variance(&moved, &self.covariance).map_err(|e| e.at_step(obs.step_index))?;
        Ok(DynPosterior {
            particles: moved,
            gmm_var,
            ..self.clone()
        })
    }

    /// I.i.d. draws from the mixture: uniform component, then Gaussian
    /// perturbation. Sample `s` uses cell `s` of `key`.
    pub fn sample_params(&self, n: usize, key: StreamKey) -> Vec<ParamVec> {
        let std: Vec<f64> = self.gmm_var.iter().map(|v| v.sqrt()).collect();
        (0..n)
            .map(|s| {
                let mut rng = key.cell_rng(s, 0, 0);
                let j = rng.gen_range(0..self.particles.len());
                let values = self
                    .particles
                    .row(j)
                    .iter()
                    .zip(&std)
                    .map(|(mu, sd)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mu + sd * z
                    })
                    .collect();
                ParamVec::from_encoded(values, self.transforms.clone()).expect("finite sample")
            })
            .collect()
    }

    /// Index of the particle with the highest mixture density (lowest index on ties).
    pub fn mode_index(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, row) in self.particles.rows().enumerate() {
            let (ld, _) = self.gmm_log_density_and_grad(row);
            if ld > best.1 {
                best = (i, ld);
            }
        }
        best.0
    }

    pub fn mode(&self) -> ParamVec {
        self.param(self.mode_index())
    }

    /// Decoded particle coordinates, one row per particle.
    pub fn decoded_rows(&self) -> Vec<Vec<f64>> {
        (0..self.particles.len()).map(|i| self.param(i).decode()).collect()
    }
}

/// `log[(1/n) sum_j N(phi; mu_j, diag(var))]` and its gradient, via log-sum-exp.
pub fn gmm_log_density_and_grad(centers: &ParticleSet, var: &[f64], phi: &[f64]) -> (f64, Vec<f64>) {
    gmm::log_density_and_grad(centers.rows(), None, var, phi)
}
