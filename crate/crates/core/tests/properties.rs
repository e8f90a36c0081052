//! Randomised invariants across module boundaries.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use stein_mpc::baselines::{MppiConfig, MppiState};
use stein_mpc::dyn_inference::{DynPosterior, DynUpdateConfig, GmmCovariance, Observation, PriorDist};
use stein_mpc::models::{step, ParamVec, PointMass, Transform};
use stein_mpc::policy::{update_prior_and_select, PolicyConfig, PolicySet};
use stein_mpc::rng::StreamKey;
use stein_mpc::svgd::{phi_star, rbf_kernel, svgd_step, BandwidthRule, KernelSpec, ParticleSet, SvgdConfig};

fn gaussian_particles(seed: u64, n: usize, dim: usize, spread: f64) -> ParticleSet {
    let mut rng = StreamKey::from_seed(seed).rng();
    let data = (0..n * dim).map(|_| spread * rng.gen_range(-1.0..1.0)).collect();
    ParticleSet::new(n, dim, data).unwrap()
}

fn policy_cfg(m: usize) -> PolicyConfig {
    PolicyConfig {
        num_policies: m,
        horizon: 6,
        control_dim: 2,
        action_var: vec![1.0, 4.0],
        prior_var: vec![1.0, 4.0],
        alpha: 1.0,
        num_action_samples: 8,
        num_dyn_samples: 1,
        step_size: 0.1,
        kernel: KernelSpec::rule(BandwidthRule::Median),
    }
}

#[test]
fn svgd_on_gaussian_targets_stays_finite() {
    for seed in 0..100u64 {
        let mut rng = StreamKey::from_seed(1000 + seed).rng();
        let dim = rng.gen_range(1..4);
        let mu: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let var: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..4.0)).collect();
        let eps = rng.gen_range(0.01..0.5);
        let rule = [BandwidthRule::Median, BandwidthRule::Silverman, BandwidthRule::Scott][seed as usize % 3];
        let ps = gaussian_particles(seed, 20, dim, 5.0);
        let score = |p: &ParticleSet| {
            Ok(p.rows().flat_map(|x| (0..dim).map(|d| -(x[d] - mu[d]) / var[d]).collect::<Vec<_>>()).collect())
        };
        let out = svgd_step(&ps, score, &KernelSpec::rule(rule), &SvgdConfig::new(eps, 50).unwrap()).unwrap();
        assert!(out.as_slice().iter().all(|x| x.is_finite()), "seed {seed}");
    }
}

proptest! {
    #[test]
    fn single_particle_direction_is_the_score(
        x in prop::collection::vec(-10.0f64..10.0, 1..5),
        h in 1e-3f64..1e3,
    ) {
        let ps = ParticleSet::new(1, x.len(), x.clone()).unwrap();
        let score: Vec<f64> = x.iter().map(|v| v.sin() - 0.3 * v).collect();
        for kernel in [KernelSpec::fixed(h), KernelSpec::rule(BandwidthRule::Median)] {
            prop_assert_eq!(phi_star(&ps, &score, &kernel).unwrap(), score.clone());
        }
    }

    #[test]
    fn kernel_gradient_matches_central_differences(
        x in prop::collection::vec(-2.0f64..2.0, 1..5),
        shift in prop::collection::vec(-1.0f64..1.0, 4),
        h in 0.5f64..10.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let (_, grad) = rbf_kernel(&x, &y, h).unwrap();
        let step = 1e-5;
        for d in 0..x.len() {
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[d] += step;
            lo[d] -= step;
            let fd = (rbf_kernel(&hi, &y, h).unwrap().0 - rbf_kernel(&lo, &y, h).unwrap().0) / (2.0 * step);
            let scale = grad[d].abs().max(1e-3);
            prop_assert!((fd - grad[d]).abs() / scale < 1e-5, "d {} fd {} analytic {}", d, fd, grad[d]);
        }
    }

    #[test]
    fn svgd_is_deterministic(seed in 0u64..1000) {
        let ps = gaussian_particles(seed, 12, 2, 3.0);
        let run = || svgd_step(
            &ps,
            |p: &ParticleSet| Ok(p.as_slice().iter().map(|v| -v).collect()),
            &KernelSpec::rule(BandwidthRule::Silverman),
            &SvgdConfig::new(0.2, 5).unwrap(),
        ).unwrap();
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn policy_weights_normalise(
        log_lik in prop::collection::vec(-500.0f64..0.0, 2..9),
        offset in -100.0f64..100.0,
        scale in 0.1f64..10.0,
    ) {
        let m = log_lik.len();
        let ps = PolicySet::initial(policy_cfg(m), StreamKey::from_seed(1)).unwrap();
        let prior = vec![0.0; m];
        let (_, sel) = update_prior_and_select(&ps, &log_lik, &prior);
        prop_assert!((sel.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        // a common positive factor on the likelihoods is an additive log offset
        let shifted: Vec<f64> = log_lik.iter().map(|l| l + offset).collect();
        prop_assert_eq!(update_prior_and_select(&ps, &shifted, &prior).1.index, sel.index);
        let (_, scaled) = update_prior_and_select(&ps, &log_lik.iter().map(|l| l + scale.ln()).collect::<Vec<_>>(), &prior);
        prop_assert_eq!(scaled.index, sel.index);
    }

    #[test]
    fn shift_then_unshift_recovers_interior_rows(seed in 0u64..1000, m in 1usize..6) {
        let ps = PolicySet::initial(policy_cfg(m), StreamKey::from_seed(seed)).unwrap();
        let shifted = ps.shift_policies(StreamKey::from_seed(seed + 1));
        let ud = 2;
        for (old, new) in ps.thetas().iter().zip(shifted.thetas()) {
            // undo: drop the appended action, re-insert the first one
            let mut restored = old[..ud].to_vec();
            restored.extend_from_slice(&new[..new.len() - ud]);
            prop_assert_eq!(&restored, old);
        }
    }

    #[test]
    fn mppi_weights_normalise_and_ignore_cost_offsets(
        costs in prop::collection::vec(0.0f64..1e4, 4..32),
        offset in -1e3f64..1e3,
    ) {
        let cfg = MppiConfig { horizon: 3, control_dim: 1, noise_var: vec![1.0], lambda: 5.0, num_samples: costs.len() };
        let state = MppiState::new(cfg).unwrap();
        let samples = state.sample(StreamKey::from_seed(9));
        let a = state.clone().reweight(samples.clone(), costs.clone());
        let b = state.clone().reweight(samples, costs.iter().map(|c| c + offset).collect());
        prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn posterior_stays_finite_and_positive_over_long_streams(seed in 0u64..10_000) {
        let model = PointMass::default();
        let dt = 0.05;
        let mut post = DynPosterior::from_prior(
            &[PriorDist::Normal { mean: 2f64.ln(), std: 0.5 }],
            20,
            vec![Transform::Log],
            GmmCovariance::Fixed(vec![0.0625]),
            vec![0.01; 4],
            StreamKey::from_seed(seed),
        ).unwrap();
        let update = DynUpdateConfig {
            svgd: SvgdConfig::new(0.01, 2).unwrap(),
            kernel: KernelSpec::rule(BandwidthRule::Median),
        };
        let mut rng = StreamKey::from_seed(seed + 1).rng();
        for k in 0..1000 {
            let mass: f64 = rng.gen_range(0.5..5.0);
            let x_prev: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let u_prev: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mut x_curr = step(&model, &x_prev, &u_prev, &ParamVec::identity(&[mass]).unwrap(), dt).unwrap();
            for v in &mut x_curr {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += 0.05 * z;
            }
            let obs = Observation { x_curr, u_prev, x_prev, step_index: k + 1 };
            post = post.observe(&obs, &model, dt, &update).unwrap();
            let rows = post.decoded_rows();
            prop_assert!(rows.iter().flatten().all(|m| m.is_finite() && *m > 0.0), "observation {}", k);
        }
    }
}
