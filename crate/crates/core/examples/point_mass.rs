//! Point-mass navigation through the obstacle grid with a mid-episode mass
//! change: online dynamics inference against a fixed 2 kg model.
//!
//! cargo run --release --example point_mass -- [episodes] [seed]

use stein_mpc::harness::{run_batch, ControllerId, ExperimentConfig, TaskId};

fn main() -> stein_mpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    for controller in [ControllerId::Dust, ControllerId::Svmpc] {
        let mut cfg = ExperimentConfig::new(TaskId::PointMass, controller);
        cfg.episodes = episodes;
        cfg.seed = seed;
        let result = run_batch(&cfg, None)?;
        let s = &result.summary;
        println!(
            "{controller:?}: success {:.0}%  cost {:.1} ± {:.1}",
            100.0 * s.success_rate,
            s.mean_cost.unwrap_or(f64::NAN),
            s.std_cost.unwrap_or(f64::NAN)
        );
        for rec in &result.records {
            let last = rec.steps.last().map(|r| r.state.clone()).unwrap_or_default();
            let mode_at = |t: usize| rec.posterior.get(t).map(|p| p.mode[0]).unwrap_or(f64::NAN);
            println!(
                "  ep{}: crashed {} final ({:.2}, {:.2}) mass mode @99 {:.2} @150 {:.2} @199 {:.2}",
                rec.episode, rec.crashed, last.first().unwrap_or(&f64::NAN), last.get(1).unwrap_or(&f64::NAN),
                mode_at(99), mode_at(150), mode_at(199)
            );
        }
    }
    Ok(())
}
