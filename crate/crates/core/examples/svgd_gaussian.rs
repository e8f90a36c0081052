//! Stein variational gradient descent on its own: particles fitted to a
//! axis-aligned 2-D Gaussian and to a bimodal 1-D mixture.
//!
//! cargo run --release --example svgd_gaussian

use rand_distr::{Distribution, StandardNormal};
use stein_mpc::gmm::log_density_and_grad;
use stein_mpc::rng::StreamKey;
use stein_mpc::svgd::{svgd_step, BandwidthRule, KernelSpec, ParticleSet, SvgdConfig};

fn main() -> stein_mpc::Result<()> {
    let mut rng = StreamKey::from_seed(7).rng();

    // Gaussian target N([1, -1], diag(0.5, 2))
    let (mu, var) = ([1.0, -1.0], [0.5, 2.0]);
    let init: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ps = ParticleSet::new(100, 2, init)?;
    let score = |p: &ParticleSet| Ok(p.rows().flat_map(|x| (0..2).map(move |d| -(x[d] - mu[d]) / var[d])).collect());
    let fitted = svgd_step(&ps, score, &KernelSpec::rule(BandwidthRule::Median), &SvgdConfig::new(0.1, 500)?)?;
    println!("gaussian target  mean {:.3?} (want {mu:?})", fitted.mean());
    println!("                 var  {:.3?} (want {var:?})", fitted.variance());

    // bimodal target 0.5 N(-2, 0.3^2) + 0.5 N(2, 0.3^2)
    let centers = [vec![-2.0], vec![2.0]];
    let init: Vec<f64> = (0..60).map(|_| 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let ps = ParticleSet::new(60, 1, init)?;
    let score = |p: &ParticleSet| {
        Ok(p.rows().map(|x| log_density_and_grad(centers.iter().map(|c| c.as_slice()), None, &[0.09], x).1[0]).collect())
    };
    let fitted = svgd_step(&ps, score, &KernelSpec::rule(BandwidthRule::Median), &SvgdConfig::new(0.02, 1000)?)?;
    let right = fitted.rows().filter(|x| x[0] > 0.0).count();
    println!("bimodal target   {right}/60 particles in the right mode, {} in the left", 60 - right);
    Ok(())
}
