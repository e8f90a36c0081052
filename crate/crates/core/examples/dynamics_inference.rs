//! Online inference of a point-mass robot's mass from observed transitions.
//! The true mass jumps from 2 kg to 3 kg halfway; the particle posterior
//! follows it without being told.
//!
//! cargo run --release --example dynamics_inference

use stein_mpc::dyn_inference::{DynPosterior, DynUpdateConfig, GmmCovariance, Observation, PriorDist};
use stein_mpc::models::{step, ParamVec, PointMass, Transform};
use stein_mpc::rng::StreamKey;
use stein_mpc::svgd::{BandwidthRule, KernelSpec, SvgdConfig};

fn main() -> stein_mpc::Result<()> {
    let model = PointMass::default();
    let dt = 0.05;
    // log-mass prior centred on 2 kg
    let mut posterior = DynPosterior::from_prior(
        &[PriorDist::Normal { mean: 2f64.ln(), std: 0.5 }],
        50,
        vec![Transform::Log],
        GmmCovariance::Fixed(vec![0.0625]),
        vec![0.01; 4],
        StreamKey::from_seed(3),
    )?;
    let update = DynUpdateConfig {
        svgd: SvgdConfig::new(0.01, 20)?,
        kernel: KernelSpec::rule(BandwidthRule::Median),
    };

    let mut x = vec![0.0, 0.0, 0.0, 0.0];
    for t in 1..=200 {
        let mass = if t <= 100 { 2.0 } else { 3.0 };
        // a slowly rotating push
        let angle = 0.05 * t as f64;
        let u = vec![8.0 * angle.cos(), 8.0 * angle.sin()];
        let next = step(&model, &x, &u, &ParamVec::identity(&[mass])?, dt)?;
        let obs = Observation { x_curr: next.clone(), u_prev: u, x_prev: x, step_index: t };
        posterior = posterior.observe(&obs, &model, dt, &update)?;
        x = next;
        if t % 20 == 0 {
            let rows = posterior.decoded_rows();
            let mean = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
            println!("step {t:>3}  true {mass:.1} kg  posterior mode {:.3} kg  mean {mean:.3} kg", posterior.mode().decode()[0]);
        }
    }
    Ok(())
}
