//! Skid-steer robot following a 1 m circle while its instantaneous centre of
//! rotation shifts mid-episode (as when a load is added).
//!
//! cargo run --release --example skid_steer -- [episodes] [seed]

use stein_mpc::harness::{run_batch, ControllerId, ExperimentConfig, TaskId};

fn main() -> stein_mpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    for controller in [ControllerId::Svmpc, ControllerId::Dust] {
        let mut cfg = ExperimentConfig::new(TaskId::SkidSteer, controller);
        cfg.episodes = episodes;
        cfg.seed = seed;
        let result = run_batch(&cfg, None)?;
        println!("{controller:?}: cost {:.1}", result.summary.mean_cost.unwrap_or(f64::NAN));
        for rec in &result.records {
            let costs = rec.instant_costs();
            let tail = &costs[3 * costs.len() / 4..];
            let schedule: Vec<String> = rec.latent.iter().map(|(s, v)| format!("{:.2} from step {s}", v[0])).collect();
            println!("  ep{}: true x_ICR {}", rec.episode, schedule.join(", "));
            println!("       final-quarter mean cost {:.4}", tail.iter().sum::<f64>() / tail.len() as f64);
            for snap in rec.posterior.iter().step_by(costs.len() / 8) {
                println!("       step {:>3}  believed x_ICR {:.3}", snap.step, snap.mode[0]);
            }
        }
    }
    Ok(())
}
