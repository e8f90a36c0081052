//! Inverted-pendulum swing-up with unknown mass and length: MPPI with the
//! true parameters, SVMPC with a fixed guess, and DuSt-MPC inferring them.
//!
//! cargo run --release --example pendulum -- [episodes] [seed]

use stein_mpc::harness::{run_batch, ControllerId, ExperimentConfig, TaskId};

fn main() -> stein_mpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    for controller in [ControllerId::Mppi, ControllerId::Svmpc, ControllerId::Dust] {
        let mut cfg = ExperimentConfig::new(TaskId::Pendulum, controller);
        cfg.episodes = episodes;
        cfg.seed = seed;
        let result = run_batch(&cfg, None)?;
        let s = &result.summary;
        println!(
            "{controller:?}: success {:.0}%  cost {:.0} ± {:.0}",
            100.0 * s.success_rate,
            s.mean_cost.unwrap_or(f64::NAN),
            s.std_cost.unwrap_or(f64::NAN)
        );
        for rec in &result.records {
            let truth = &rec.latent[0].1;
            let belief = rec.posterior.last().map(|p| format!("{:.2?}", p.mode)).unwrap_or_else(|| "true parameters".into());
            println!("  ep{}: latent (m, l) {truth:.2?}  final belief {belief}  success {}", rec.episode, rec.success);
        }
    }
    Ok(())
}
