//! Runs a bundled preset from its TOML file, writes the run directory,
//! then recomputes the summary and exports ridge-plot data from disk.
//!
//! cargo run --release --example run_config -- [preset.toml] [out-dir]

use std::path::PathBuf;
use stein_mpc::harness::{export_ridge, run_batch, summarize, ExperimentConfig};

fn main() -> stein_mpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets/point_mass.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stein-mpc-example"));

    let mut cfg = ExperimentConfig::load(&preset)?;
    cfg.episodes = 2;
    run_batch(&cfg, Some(&out))?;
    println!("wrote {}", out.display());

    let summary = summarize(&out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let ridge = export_ridge(&out)?;
    println!("ridge export: {} files, {} particle rows", ridge.files.len(), ridge.particle_rows);
    Ok(())
}
