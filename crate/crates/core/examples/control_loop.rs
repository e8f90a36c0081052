//! The controller API without the harness: build a task, a policy set and a
//! learned dynamics belief, then drive the environment tick by tick.
//!
//! cargo run --release --example control_loop

use stein_mpc::controller::{DynamicsBelief, SteinMpc};
use stein_mpc::envs::Environment;
use stein_mpc::harness::{ControllerId, ExperimentConfig, TaskId};
use stein_mpc::rng::Role;

fn main() -> stein_mpc::Result<()> {
    let cfg = ExperimentConfig::new(TaskId::PointMass, ControllerId::Dust);
    let episode = 0;
    let belief = DynamicsBelief::Learned {
        posterior: cfg.initial_posterior(episode)?,
        update: cfg.dyn_update()?,
        update_every: 1,
    };
    let mut controller = SteinMpc::new(cfg.task()?, cfg.policy_config(), belief, cfg.key(episode, Role::PolicyInit))?;
    let mut env = Environment::new(cfg.env_spec(episode)?, cfg.key(episode, Role::Environment))?;

    let mut obs = None;
    let mut total = 0.0;
    for t in 0..env.episode_length() {
        let report = controller.tick(t, env.state(), obs.as_ref())?;
        let out = env.step(&report.control)?;
        total += out.instant_cost;
        if t % 25 == 0 {
            let mode = controller.belief().posterior().map(|p| p.mode().decode()[0]).unwrap_or(f64::NAN);
            println!(
                "step {t:>3}  position ({:.2}, {:.2})  control {:.2?}  policy {}  mass belief {mode:.2} kg",
                out.state[0], out.state[1], report.control, report.selected
            );
        }
        obs = Some(out.observation);
        if env.crashed() {
            println!("crashed at step {t}");
            break;
        }
    }
    println!("cumulative cost {total:.1}");
    Ok(())
}
