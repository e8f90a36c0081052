//! Stein variational policy inference over action sequences.
//!
//! Each policy particle is the mean of a Gaussian over an `H`-step action
//! sequence. Per control step: sample action sequences around every mean,
//! roll them out under sampled dynamics parameters, turn the costs into a
//! Monte-Carlo optimality likelihood and its score-function gradient, take
//! one SVGD step with the previous step's weighted mixture as prior, pick the
//! highest-weighted particle, and shift every sequence one step ahead.

use crate::envs::TaskModel;
use crate::error::{Error, Result};
use crate::gmm::{self, log_sum_exp};
use crate::models::{clamp_control, ParamVec};
use crate::rng::StreamKey;
use crate::svgd::{phi_star, KernelSpec, ParticleSet};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Cost assigned to a rollout whose parameters or states leave the model's domain.
pub const ROLLOUT_FAILURE_COST: f64 = 1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub num_policies: usize,
    pub horizon: usize,
    pub control_dim: usize,
    /// Action sampling variance per control dimension.
    pub action_var: Vec<f64>,
    /// Covariance of the mixture prior over sequences, per control dimension.
    pub prior_var: Vec<f64>,
    /// Inverse temperature of the optimality likelihood.
    pub alpha: f64,
    pub num_action_samples: usize,
    pub num_dyn_samples: usize,
    pub step_size: f64,
    pub kernel: KernelSpec,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| v.len() == self.control_dim && v.iter().all(|x| *x > 0.0 && x.is_finite());
        if self.num_policies == 0 || self.horizon == 0 || self.control_dim == 0 {
            return Err(Error::Config("policy count, horizon and control dimension must be positive".into()));
        }
        if !positive(&self.action_var) || !positive(&self.prior_var) {
            return Err(Error::Config("policy covariances must be positive, one entry per control".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("inverse temperature must be positive".into()));
        }
        if self.num_action_samples == 0 || self.num_dyn_samples == 0 {
            return Err(Error::Config("sample counts must be at least one".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("policy step size must be non-negative".into()));
        }
        Ok(())
    }

    fn seq_len(&self) -> usize {
        self.horizon * self.control_dim
    }

    fn expand(&self, per_control: &[f64]) -> Vec<f64> {
        (0..self.seq_len()).map(|k| per_control[k % self.control_dim]).collect()
    }
}

/// Weighted mixture over flattened sequences, the prior for the next step.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyPrior {
    centers: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    var: Vec<f64>,
}

impl PolicyPrior {
    pub fn log_density_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        gmm::log_density_and_grad(self.centers.iter().map(Vec::as_slice), Some(&self.log_weights), &self.var, theta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySet {
    cfg: PolicyConfig,
    thetas: Vec<Vec<f64>>,
    weights: Vec<f64>,
    prior: Option<PolicyPrior>,
}

/// Sampled action sequences, `m x N_a`, each flattened `H x control_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSamples {
    pub num_policies: usize,
    pub num_samples: usize,
    pub seq_len: usize,
    pub data: Vec<f64>,
}

impl ActionSamples {
    pub fn get(&self, i: usize, n: usize) -> &[f64] {
        let start = (i * self.num_samples + n) * self.seq_len;
        &self.data[start..start + self.seq_len]
    }
}

/// Trajectory costs indexed `[policy][action sample][dynamics sample]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutCostTensor {
    pub num_policies: usize,
    pub num_samples: usize,
    pub num_params: usize,
    pub costs: Vec<f64>,
}

impl RolloutCostTensor {
    pub fn get(&self, i: usize, n: usize, m: usize) -> f64 {
        self.costs[(i * self.num_samples + n) * self.num_params + m]
    }

    fn policy_slice(&self, i: usize) -> &[f64] {
        let len = self.num_samples * self.num_params;
        &self.costs[i * len..(i + 1) * len]
    }
}

/// Log optimality likelihood of one policy particle and its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodTerm {
    pub log_lik: f64,
    pub grad: Vec<f64>,
}

/// Outcome of weighting the particles and picking one.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub control: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PolicySet {
    /// Particles from explicit means (each flattened `H x control_dim`).
    pub fn from_means(cfg: PolicyConfig, thetas: Vec<Vec<f64>>) -> Result<Self> {
        cfg.validate()?;
        if thetas.len() != cfg.num_policies || thetas.iter().any(|t| t.len() != cfg.seq_len()) {
            return Err(Error::InvalidArgument("policy means do not match the configuration".into()));
        }
        if thetas.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite policy mean".into()));
        }
        let m = cfg.num_policies;
        Ok(Self {
            cfg,
            thetas,
            weights: vec![1.0 / m as f64; m],
            prior: None,
        })
    }

    /// Means drawn i.i.d. from `N(0, prior_var)`.
    pub fn initial(cfg: PolicyConfig, key: StreamKey) -> Result<Self> {
        cfg.validate()?;
        let std = cfg.expand(&cfg.prior_var).iter().map(|v| v.sqrt()).collect::<Vec<_>>();
        let thetas = (0..cfg.num_policies)
            .map(|i| {
                let mut rng = key.cell_rng(i, 0, 0);
                std.iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        s * z
                    })
                    .collect()
            })
            .collect();
        Self::from_means(cfg, thetas)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prior(&self) -> Option<&PolicyPrior> {
        self.prior.as_ref()
    }

    /// Log prior density of every particle under the previous step's mixture
    /// (zero before any prior exists).
    pub fn prior_log_densities(&self) -> Vec<f64> {
        match &self.prior {
            Some(p) => self.thetas.iter().map(|t| p.log_density_and_grad(t).0).collect(),
            None => vec![0.0; self.thetas.len()],
        }
    }

    /// `u^{i,n} = theta^i + eps`, `eps ~ N(0, action_var)`; cell `(i, n)` of `key`.
    pub fn sample_action_sequences(&self, key: StreamKey) -> ActionSamples {
        let cfg = &self.cfg;
        let std: Vec<f64> = cfg.expand(&cfg.action_var).iter().map(|v| v.sqrt()).collect();
        let mut data = Vec::with_capacity(cfg.num_policies * cfg.num_action_samples * cfg.seq_len());
        for (i, theta) in self.thetas.iter().enumerate() {
            for n in 0..cfg.num_action_samples {
                let mut rng = key.cell_rng(i, n, 0);
                for (t, s) in theta.iter().zip(&std) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(t + s * z);
                }
            }
        }
        ActionSamples {
            num_policies: cfg.num_policies,
            num_samples: cfg.num_action_samples,
            seq_len: cfg.seq_len(),
            data,
        }
    }

    /// Shifts every sequence one step ahead; the new last action is the old
    /// last action plus `N(0, action_var)` noise. Weights and prior are kept.
    pub fn shift_policies(&self, key: StreamKey) -> PolicySet {
        let ud = self.cfg.control_dim;
        let std: Vec<f64> = self.cfg.action_var.iter().map(|v| v.sqrt()).collect();
        let thetas = self
            .thetas
            .iter()
            .enumerate()
            .map(|(i, theta)| {
                let mut rng = key.cell_rng(i, 0, 0);
                let mut next = theta[ud..].to_vec();
                let last = &theta[theta.len() - ud..];
                for (x, s) in last.iter().zip(&std) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    next.push(x + s * z);
                }
                next
            })
            .collect();
        PolicySet {
            thetas,
            ..self.clone()
        }
    }

    /// Clamps every mean action to the per-dimension `bounds`.
    pub fn project(&self, bounds: &[(f64, f64)]) -> PolicySet {
        let ud = self.cfg.control_dim;
        let thetas = self
            .thetas
            .iter()
            .map(|t| t.iter().enumerate().map(|(k, x)| x.clamp(bounds[k % ud].0, bounds[k % ud].1)).collect())
            .collect();
        PolicySet {
            thetas,
            ..self.clone()
        }
    }

    /// Sets the prior for the next step to `sum_i w_i N(theta_i, prior_var)`.
    pub fn refresh_prior(&mut self) {
        let log_weights = self.weights.iter().map(|w| w.max(f64::MIN_POSITIVE).ln()).collect();
        self.prior = Some(PolicyPrior {
            centers: self.thetas.clone(),
            log_weights,
            var: self.cfg.expand(&self.cfg.prior_var),
        });
    }
}

/// Rolls `controls` (flattened, clamped per step) out from `x0` and returns
/// `c_term(x_H) + sum_h c(x_h, u_h)`. A collision freezes the state and marks
/// every remaining step as collided.
pub fn trajectory_cost(task: &dyn TaskModel, x0: &[f64], controls: &[f64], physical: &[f64]) -> f64 {
    let model = task.dynamics();
    let (sd, ud, dt) = (model.state_dim(), model.control_dim(), task.dt());
    let mut s = x0.to_vec();
    let mut next = vec![0.0; sd];
    let mut uc = vec![0.0; ud];
    let mut collided = false;
    let mut cost = 0.0;
    for u in controls.chunks_exact(ud) {
        clamp_control(model, u, &mut uc);
        let prev_collided = collided;
        if !collided {
            model.integrate(&s, &uc, physical, dt, &mut next);
            if task.collides(&s, &next) {
                collided = true;
            }
        }
        cost += task.instant_cost(&s, &uc, collided);
        if !prev_collided && !collided {
            std::mem::swap(&mut s, &mut next);
        }
    }
    cost += task.terminal_cost(&s);
    if cost.is_finite() && s.iter().all(|x| x.is_finite()) {
        cost
    } else {
        ROLLOUT_FAILURE_COST
    }
}

/// Costs of every `(policy, action sample, dynamics sample)` rollout from `x0`.
pub fn evaluate_costs(
    actions: &ActionSamples,
    params: &[ParamVec],
    task: &dyn TaskModel,
    x0: &[f64],
) -> RolloutCostTensor {
    let physical: Vec<Option<Vec<f64>>> = params
        .iter()
        .map(|p| {
            let decoded = p.decode();
            match task.dynamics().check_params(&decoded) {
                Ok(()) => Some(decoded),
                Err(e) => {
                    log::debug!("rollout parameters rejected ({e}); charging failure cost");
                    None
                }
            }
        })
        .collect();
    let (m, n_a, n_s) = (actions.num_policies, actions.num_samples, params.len());
    let costs = (0..m * n_a * n_s)
        .into_par_iter()
        .map(|cell| {
            let (seq, k) = (cell / n_s, cell % n_s);
            match &physical[k] {
                Some(phys) => trajectory_cost(task, x0, actions.get(seq / n_a, seq % n_a), phys),
                None => ROLLOUT_FAILURE_COST,
            }
        })
        .collect();
    RolloutCostTensor {
        num_policies: m,
        num_samples: n_a,
        num_params: n_s,
        costs,
    }
}

/// Monte-Carlo log optimality likelihood per particle and its score-function
/// gradient `sum_{n,m} w_{n,m} action_var^{-1} (u^{i,n} - theta^i)` with
/// `w = softmax(-alpha C^i)`.
pub fn log_likelihood_and_grad(
    ps: &PolicySet,
    actions: &ActionSamples,
    costs: &RolloutCostTensor,
) -> Vec<LikelihoodTerm> {
    let cfg = &ps.cfg;
    let inv_var: Vec<f64> = cfg.expand(&cfg.action_var).iter().map(|v| 1.0 / v).collect();
    let (n_a, n_s) = (costs.num_samples, costs.num_params);
    (0..ps.thetas.len())
        .map(|i| {
            let scaled: Vec<f64> = costs.policy_slice(i).iter().map(|c| -cfg.alpha * c).collect();
            let lse = log_sum_exp(&scaled);
            let log_lik = lse - ((n_a * n_s) as f64).ln();
            let theta = &ps.thetas[i];
            let mut grad = vec![0.0; theta.len()];
            for n in 0..n_a {
                let w: f64 = scaled[n * n_s..(n + 1) * n_s].iter().map(|v| (v - lse).exp()).sum();
                if w == 0.0 {
                    continue;
                }
                for (k, u) in actions.get(i, n).iter().enumerate() {
                    grad[k] += w * inv_var[k] * (u - theta[k]);
                }
            }
            LikelihoodTerm { log_lik, grad }
        })
        .collect()
}

/// One SVGD step on the flattened means with score = likelihood gradient +
/// prior-mixture gradient.
pub fn policy_svgd_step(ps: &PolicySet, terms: &[LikelihoodTerm]) -> Result<PolicySet> {
    let len = ps.cfg.seq_len();
    if terms.len() != ps.thetas.len() {
        return Err(Error::InvalidArgument("one likelihood term per policy required".into()));
    }
    if ps.cfg.step_size == 0.0 {
        return Ok(ps.clone());
    }
    let particles = ParticleSet::new(ps.thetas.len(), len, ps.thetas.concat())?;
    let mut scores = Vec::with_capacity(ps.thetas.len() * len);
    for (theta, term) in ps.thetas.iter().zip(terms) {
        let prior_grad = match &ps.prior {
            Some(p) => p.log_density_and_grad(theta).1,
            None => vec![0.0; len],
        };
        scores.extend(term.grad.iter().zip(prior_grad).map(|(a, b)| a + b));
    }
    let phi = phi_star(&particles, &scores, &ps.cfg.kernel)?;
    let thetas = ps
        .thetas
        .iter()
        .enumerate()
        .map(|(i, t)| t.iter().zip(&phi[i * len..(i + 1) * len]).map(|(x, v)| x + ps.cfg.step_size * v).collect())
        .collect();
    Ok(PolicySet {
        thetas,
        ..ps.clone()
    })
}

/// `w_i ∝ lik_i * prior_i` (normalized in log space); returns the particles
/// with updated weights and the first action of the highest-weighted mean.
pub fn update_prior_and_select(ps: &PolicySet, log_lik: &[f64], log_prior: &[f64]) -> (PolicySet, Selection) {
    let logs: Vec<f64> = log_lik.iter().zip(log_prior).map(|(a, b)| a + b).collect();
    let weights = if logs.iter().all(|l| *l == f64::NEG_INFINITY) {
        vec![1.0 / logs.len() as f64; logs.len()]
    } else {
        gmm::softmax(&logs)
    };
    let mut index = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > weights[index] {
            index = i;
        }
    }
    let ud = ps.cfg.control_dim;
    let selection = Selection {
        index,
        control: ps.thetas[index][..ud].to_vec(),
        weights: weights.clone(),
    };
    (
        PolicySet {
            weights,
            ..ps.clone()
        },
        selection,
    )
}
