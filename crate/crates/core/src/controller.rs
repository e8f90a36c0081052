//! The Stein variational MPC control loop for one episode, optionally with
//! online inference over the dynamics parameters.

use crate::dyn_inference::{DynPosterior, DynUpdateConfig, Observation};
use crate::envs::TaskModel;
use crate::error::Result;
use crate::models::ParamVec;
use crate::policy::{
    evaluate_costs, log_likelihood_and_grad, policy_svgd_step, update_prior_and_select, PolicyConfig, PolicySet,
};
use crate::rng::{Role, StreamKey};

/// What the controller believes about the dynamics parameters.
#[derive(Clone, Debug)]
pub enum DynamicsBelief {
    /// A frozen point estimate.
    Fixed(ParamVec),
    /// A particle posterior updated from observed transitions every
    /// `update_every` observations.
    Learned {
        posterior: DynPosterior,
        update: DynUpdateConfig,
        update_every: usize,
    },
}

impl DynamicsBelief {
    /// Parameter rows for the per-step snapshot, in physical units.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        match self {
            DynamicsBelief::Fixed(p) => vec![p.decode()],
            DynamicsBelief::Learned { posterior, .. } => posterior.decoded_rows(),
        }
    }

    pub fn posterior(&self) -> Option<&DynPosterior> {
        match self {
            DynamicsBelief::Fixed(_) => None,
            DynamicsBelief::Learned { posterior, .. } => Some(posterior),
        }
    }
}

/// Stages of one control tick, recorded when tracing is enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    DynamicsUpdate,
    SampleParams,
    EvaluateCosts,
    PolicyUpdate,
    Select,
    Shift,
    RefreshPrior,
}

/// Per-tick output of the controller.
#[derive(Clone, Debug, PartialEq)]
pub struct TickReport {
    pub control: Vec<f64>,
    pub selected: usize,
    pub weights: Vec<f64>,
    pub log_lik: Vec<f64>,
}

pub struct SteinMpc<T: TaskModel> {
    task: T,
    policies: PolicySet,
    belief: DynamicsBelief,
    key: StreamKey,
    observations: usize,
    trace: Option<Vec<(usize, Phase)>>,
}

impl<T: TaskModel> SteinMpc<T> {
    /// `key` fixes seed and episode; step and role are filled in per draw.
    pub fn new(task: T, policy: PolicyConfig, belief: DynamicsBelief, key: StreamKey) -> Result<Self> {
        let policies = PolicySet::initial(policy, key.with_step(0).with_role(Role::PolicyInit))?;
        Ok(Self {
            task,
            policies,
            belief,
            key,
            observations: 0,
            trace: None,
        })
    }

    /// Records the order of stages in every subsequent tick.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[(usize, Phase)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn belief(&self) -> &DynamicsBelief {
        &self.belief
    }

    pub fn policies(&self) -> &PolicySet {
        &self.policies
    }

    fn mark(&mut self, step: usize, phase: Phase) {
        if let Some(t) = &mut self.trace {
            t.push((step, phase));
        }
    }

    /// One control step from state `x`: fold in the latest transition, plan,
    /// and return the control to apply.
    pub fn tick(&mut self, step: usize, x: &[f64], obs: Option<&Observation>) -> Result<TickReport> {
        let key = self.key.with_step(step as u64);
        if let (Some(obs), DynamicsBelief::Learned { posterior, update, update_every }) = (obs, &mut self.belief) {
            self.observations += 1;
            if self.observations % *update_every == 0 {
                *posterior = posterior.observe(obs, self.task.dynamics(), self.task.dt(), update)?;
                self.mark(step, Phase::DynamicsUpdate);
            }
        }

        // Copies of a point estimate add rollouts but no information.
        let params = match &self.belief {
            DynamicsBelief::Fixed(p) => vec![p.clone()],
            DynamicsBelief::Learned { posterior, .. } => {
                posterior.sample_params(self.policies.config().num_dyn_samples, key.with_role(Role::DynamicsSample))
            }
        };
        self.mark(step, Phase::SampleParams);

        let actions = self.policies.sample_action_sequences(key.with_role(Role::PolicySampling));
        let costs = evaluate_costs(&actions, &params, &self.task, x);
        self.mark(step, Phase::EvaluateCosts);

        let terms = log_likelihood_and_grad(&self.policies, &actions, &costs);
        let log_lik: Vec<f64> = terms.iter().map(|t| t.log_lik).collect();
        let log_prior = self.policies.prior_log_densities();
        let bounds = self.task.dynamics().control_bounds().to_vec();
        let updated = policy_svgd_step(&self.policies, &terms)?.project(&bounds);
        self.mark(step, Phase::PolicyUpdate);

        let (weighted, selection) = update_prior_and_select(&updated, &log_lik, &log_prior);
        self.mark(step, Phase::Select);

        self.policies = weighted.shift_policies(key.with_role(Role::PolicyShift)).project(&bounds);
        self.mark(step, Phase::Shift);
        self.policies.refresh_prior();
        self.mark(step, Phase::RefreshPrior);

        Ok(TickReport {
            control: selection.control,
            selected: selection.index,
            weights: selection.weights,
            log_lik,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyn_inference::GmmCovariance;
    use crate::envs::PointMassTask;
    use crate::models::{step, Transform};
    use crate::svgd::{BandwidthRule, KernelSpec, ParticleSet, SvgdConfig};

    fn policy_cfg() -> PolicyConfig {
        PolicyConfig {
            num_policies: 3,
            horizon: 8,
            control_dim: 2,
            action_var: vec![4.0; 2],
            prior_var: vec![4.0; 2],
            alpha: 1.0,
            num_action_samples: 16,
            num_dyn_samples: 2,
            step_size: 1.0,
            kernel: KernelSpec::rule(BandwidthRule::Silverman),
        }
    }

    fn learned(particles: Vec<f64>, var: f64, steps: usize, every: usize) -> DynamicsBelief {
        let n = particles.len();
        let posterior = DynPosterior::new(
            ParticleSet::new(n, 1, particles).unwrap(),
            vec![Transform::Log],
            GmmCovariance::Fixed(vec![var]),
            vec![0.01; 4],
        )
        .unwrap();
        DynamicsBelief::Learned {
            posterior,
            update: DynUpdateConfig {
                svgd: SvgdConfig {
                    step_size: 0.01,
                    num_steps: steps,
                },
                kernel: KernelSpec::rule(BandwidthRule::Median),
            },
            update_every: every,
        }
    }

    /// Drives `c` for `n` ticks on the true 2 kg point-mass and returns the reports.
    fn drive(c: &mut SteinMpc<PointMassTask>, n: usize) -> Vec<TickReport> {
        let truth = ParamVec::identity(&[2.0]).unwrap();
        let task = PointMassTask::default();
        let mut x = vec![0.5, 0.5, 0.0, 0.0];
        let mut obs: Option<Observation> = None;
        let mut out = vec![];
        for t in 0..n {
            let r = c.tick(t, &x, obs.as_ref()).unwrap();
            let next = step(&task.model, &x, &r.control, &truth, task.dt).unwrap();
            obs = Some(Observation {
                x_curr: next.clone(),
                u_prev: r.control.clone(),
                x_prev: x,
                step_index: t + 1,
            });
            x = next;
            out.push(r);
        }
        out
    }

    #[test]
    fn tick_phases_run_in_order() {
        let belief = learned(vec![0.5, 0.7, 0.9], 0.05, 2, 1);
        let mut c = SteinMpc::new(PointMassTask::default(), policy_cfg(), belief, StreamKey::from_seed(3)).unwrap();
        c.enable_trace();
        drive(&mut c, 2);
        use Phase::*;
        let phases: Vec<Phase> = c.trace().iter().map(|(_, p)| *p).collect();
        let tick = [SampleParams, EvaluateCosts, PolicyUpdate, Select, Shift, RefreshPrior];
        let mut expected = tick.to_vec();
        expected.push(DynamicsUpdate);
        expected.extend(tick);
        assert_eq!(phases, expected);
        assert!(c.trace().iter().take(6).all(|(s, _)| *s == 0));
    }

    #[test]
    fn dynamics_update_respects_cadence() {
        let belief = learned(vec![0.5, 0.7, 0.9], 0.05, 2, 3);
        let mut c = SteinMpc::new(PointMassTask::default(), policy_cfg(), belief, StreamKey::from_seed(4)).unwrap();
        c.enable_trace();
        drive(&mut c, 8);
        let updates: Vec<usize> = c.trace().iter().filter(|(_, p)| *p == Phase::DynamicsUpdate).map(|(s, _)| *s).collect();
        assert_eq!(updates, vec![3, 6]);
    }

    #[test]
    fn frozen_point_posterior_matches_fixed_estimate() {
        let mut cfg = policy_cfg();
        cfg.num_dyn_samples = 1;
        let key = StreamKey::from_seed(9);
        let estimate = ParamVec::from_physical(&[2.0], &[Transform::Log]).unwrap();
        let point = learned(estimate.encoded().to_vec(), 1e-300, 0, 1);
        let mut fixed = SteinMpc::new(PointMassTask::default(), cfg.clone(), DynamicsBelief::Fixed(estimate), key).unwrap();
        let mut dust = SteinMpc::new(PointMassTask::default(), cfg, point, key).unwrap();
        assert_eq!(drive(&mut fixed, 12), drive(&mut dust, 12));
    }

    #[test]
    fn controls_stay_within_actuator_bounds() {
        let mut cfg = policy_cfg();
        cfg.action_var = vec![400.0; 2];
        cfg.prior_var = vec![400.0; 2];
        let belief = DynamicsBelief::Fixed(ParamVec::identity(&[2.0]).unwrap());
        let mut c = SteinMpc::new(PointMassTask::default(), cfg, belief, StreamKey::from_seed(5)).unwrap();
        for r in drive(&mut c, 10) {
            assert!(r.control.iter().all(|u| u.abs() <= 10.0), "{:?}", r.control);
        }
        let bound = c.policies().thetas().iter().flatten().fold(0.0f64, |a, t| a.max(t.abs()));
        assert!(bound <= 10.0);
    }

    #[test]
    fn learned_belief_moves_toward_true_mass() {
        let belief = learned(vec![1.0f64.ln(), 1.2f64.ln(), 1.4f64.ln(), 1.1f64.ln()], 0.01, 20, 1);
        let mut c = SteinMpc::new(PointMassTask::default(), policy_cfg(), belief, StreamKey::from_seed(6)).unwrap();
        let before = c.belief().posterior().unwrap().mode().decode()[0];
        drive(&mut c, 40);
        let after = c.belief().posterior().unwrap().mode().decode()[0];
        assert!((after - 2.0).abs() < (before - 2.0).abs(), "{before} -> {after}");
    }
}
