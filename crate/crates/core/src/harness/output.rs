//! Batch execution and the on-disk run layout:
//!
//! ```text
//! <out>/config-echo            resolved configuration (TOML)
//! <out>/summary.json           aggregate metrics, deterministic
//! <out>/timing.json            wall-clock times, not deterministic
//! <out>/ep<k>/trajectory.csv   step, state, control, instant_cost, crashed
//! <out>/ep<k>/posterior.csv    step, particle, parameter values
//! <out>/ep<k>/posterior-gmm.csv  step, param, transform, variance, mode
//! <out>/ep<k>/policy.csv       step, selected, weights, log-likelihoods, control
//! <out>/ep<k>/latent.csv       true parameter schedule
//! <out>/ep<k>/error.txt        present only if the episode aborted
//! ```

use super::config::{ControllerId, ExperimentConfig, TaskId};
use super::episode::{cost_without_penalty, run_episode, EpisodeRecord, EpisodeSummary};
use crate::envs::TaskModel;
use crate::error::{Error, Result};
use crate::gmm::log_sum_exp;
use crate::models::Transform;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const CONFIG_ECHO: &str = "config-echo";
pub const SUMMARY_FILE: &str = "summary.json";

/// Aggregate over a batch. Costs exclude crash penalties; mean and sample
/// standard deviation are over episodes that completed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: TaskId,
    pub controller: ControllerId,
    pub seed: u64,
    pub episodes: usize,
    pub completed: usize,
    pub mean_cost: Option<f64>,
    pub std_cost: Option<f64>,
    pub success_rate: f64,
    pub aborted: Vec<usize>,
    pub per_episode: Vec<EpisodeSummary>,
}

impl Summary {
    /// Aggregates per-episode results; the input order does not matter.
    pub fn from_episodes(cfg: &ExperimentConfig, mut per_episode: Vec<EpisodeSummary>) -> Self {
        per_episode.sort_by_key(|e| e.episode);
        let costs: Vec<f64> = per_episode
            .iter()
            .filter(|e| e.aborted.is_none())
            .map(|e| e.cumulative_cost)
            .collect();
        let n = costs.len();
        let mean = (n > 0).then(|| costs.iter().sum::<f64>() / n as f64);
        let std = mean.map(|m| {
            if n < 2 {
                0.0
            } else {
                (costs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            }
        });
        let successes = per_episode.iter().filter(|e| e.success).count();
        Summary {
            task: cfg.task,
            controller: cfg.controller,
            seed: cfg.seed,
            episodes: per_episode.len(),
            completed: n,
            mean_cost: mean,
            std_cost: std,
            success_rate: successes as f64 / per_episode.len().max(1) as f64,
            aborted: per_episode.iter().filter(|e| e.aborted.is_some()).map(|e| e.episode).collect(),
            per_episode,
        }
    }

    pub fn all_completed(&self) -> bool {
        self.aborted.is_empty()
    }
}

pub struct BatchResult {
    pub summary: Summary,
    pub records: Vec<EpisodeRecord>,
}

/// Runs every episode of `cfg` (concurrently, on `cfg.threads` workers when
/// set) and, with `out`, writes the run layout. An episode that cannot even
/// be set up fails the whole batch; numerical failures during an episode
/// only abort that episode.
pub fn run_batch(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<BatchResult> {
    let start = Instant::now();
    let run = || -> Result<Vec<EpisodeRecord>> {
        (0..cfg.episodes).into_par_iter().map(|k| run_episode(cfg, k)).collect()
    };
    let records = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let summary = Summary::from_episodes(cfg, records.iter().map(EpisodeRecord::summary).collect());
    if let Some(dir) = out {
        write_run(cfg, dir, &records, &summary, start.elapsed().as_secs_f64())?;
    }
    Ok(BatchResult { summary, records })
}

pub fn episode_dir(run: &Path, episode: usize) -> PathBuf {
    run.join(format!("ep{episode}"))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Writes one episode's CSV files into `dir`.
pub fn write_episode(cfg: &ExperimentConfig, dir: &Path, rec: &EpisodeRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    let task = cfg.task()?;
    let model = task.dynamics();
    let (state_names, control_names, param_names) =
        (names(model.state_names()), names(model.control_names()), names(model.param_names()));

    let mut header = vec!["step".to_string()];
    header.extend(state_names);
    header.extend(control_names.clone());
    header.extend(["instant_cost".to_string(), "crashed".to_string()]);
    write_rows(
        &dir.join("trajectory.csv"),
        header,
        rec.steps.iter().map(|s| {
            let mut r = vec![s.step.to_string()];
            r.extend(s.state.iter().chain(&s.control).map(|x| num(*x)));
            r.push(num(s.instant_cost));
            r.push(u8::from(s.crashed).to_string());
            r
        }),
    )?;

    let mut header = vec!["step".to_string(), "particle".to_string()];
    header.extend(param_names.clone());
    write_rows(
        &dir.join("posterior.csv"),
        header,
        rec.posterior.iter().flat_map(|snap| {
            snap.particles.iter().enumerate().map(move |(i, p)| {
                let mut r = vec![snap.step.to_string(), i.to_string()];
                r.extend(p.iter().map(|x| num(*x)));
                r
            })
        }),
    )?;

    let learned: Vec<_> = rec.posterior.iter().filter(|s| !s.gmm_var.is_empty()).collect();
    if !learned.is_empty() {
        let transforms = cfg.transforms();
        write_rows(
            &dir.join("posterior-gmm.csv"),
            names(&["step", "param", "transform", "variance", "mode"]),
            learned.iter().flat_map(|snap| {
                let (param_names, transforms) = (&param_names, &transforms);
                (0..param_names.len()).map(move |d| {
                    vec![
                        snap.step.to_string(),
                        param_names[d].clone(),
                        transform_name(transforms[d]).to_string(),
                        num(snap.gmm_var[d]),
                        num(snap.mode[d]),
                    ]
                })
            }),
        )?;
    }

    let m = rec.policy.first().map_or(0, |p| p.weights.len());
    let mut header = vec!["step".to_string(), "selected".to_string()];
    header.extend((0..m).map(|i| format!("weight_{i}")));
    header.extend((0..m).map(|i| format!("log_lik_{i}")));
    header.extend(control_names);
    write_rows(
        &dir.join("policy.csv"),
        header,
        rec.policy.iter().map(|p| {
            let mut r = vec![p.step.to_string(), p.selected.to_string()];
            r.extend(p.weights.iter().chain(&p.log_lik).chain(&p.control).map(|x| num(*x)));
            r
        }),
    )?;

    let mut header = vec!["step".to_string()];
    header.extend(param_names);
    write_rows(
        &dir.join("latent.csv"),
        header,
        rec.latent.iter().map(|(s, v)| {
            let mut r = vec![s.to_string()];
            r.extend(v.iter().map(|x| num(*x)));
            r
        }),
    )?;

    let err = dir.join("error.txt");
    match &rec.aborted {
        Some(msg) => fs::write(err, format!("{msg}\n"))?,
        None if err.exists() => fs::remove_file(err)?,
        None => {}
    }
    Ok(())
}

fn transform_name(t: Transform) -> &'static str {
    match t {
        Transform::Identity => "identity",
        Transform::Log => "log",
    }
}

fn parse_transform(s: &str) -> Result<Transform> {
    match s {
        "identity" => Ok(Transform::Identity),
        "log" => Ok(Transform::Log),
        other => Err(Error::Csv(format!("unknown transform `{other}`"))),
    }
}

#[derive(Serialize)]
struct Timing {
    total_s: f64,
    per_episode_s: Vec<f64>,
}

fn write_run(cfg: &ExperimentConfig, dir: &Path, records: &[EpisodeRecord], summary: &Summary, total_s: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_ECHO), cfg.to_toml_string())?;
    for rec in records {
        write_episode(cfg, &episode_dir(dir, rec.episode), rec)?;
    }
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(summary)? + "\n")?;
    let timing = Timing {
        total_s,
        per_episode_s: records.iter().map(|r| r.wall_clock_s).collect(),
    };
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    Ok(())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Csv(format!("not a number: `{s}`")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Csv(format!("not an index: `{s}`")))
}

/// Episode directories of a run, sorted by episode index.
pub fn episode_dirs(run: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(run)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(k) = name.strip_prefix("ep").and_then(|k| k.parse().ok()) {
            if entry.file_type()?.is_dir() {
                out.push((k, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Recomputes the batch summary of a run directory from its config echo and
/// per-episode trajectory logs.
pub fn summarize(run: &Path) -> Result<Summary> {
    let cfg = ExperimentConfig::load(&run.join(CONFIG_ECHO))?;
    let task = cfg.task()?;
    let mut per_episode = Vec::new();
    for (k, dir) in episode_dirs(run)? {
        let (header, rows) = read_table(&dir.join("trajectory.csv"))?;
        let cost_col = header.iter().position(|h| h == "instant_cost").ok_or_else(|| Error::Csv("no instant_cost column".into()))?;
        let crash_col = header.iter().position(|h| h == "crashed").ok_or_else(|| Error::Csv("no crashed column".into()))?;
        let costs = rows.iter().map(|r| parse_f64(&r[cost_col])).collect::<Result<Vec<_>>>()?;
        let crashed: Vec<bool> = rows.iter().map(|r| r[crash_col] == "1").collect();
        let aborted = fs::read_to_string(dir.join("error.txt")).ok().map(|s| s.trim_end().to_string());
        per_episode.push(EpisodeSummary {
            episode: k,
            cumulative_cost: cost_without_penalty(&costs, &crashed, task.crash_penalty()),
            success: aborted.is_none() && task.is_success(&costs, &crashed),
            crashed: crashed.last().copied().unwrap_or(false),
            steps: costs.len(),
            aborted,
        });
    }
    if per_episode.is_empty() {
        return Err(Error::InsufficientData(format!("no episodes under {}", run.display())));
    }
    Ok(Summary::from_episodes(&cfg, per_episode))
}

/// What [`export_ridge`] wrote.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RidgeReport {
    pub files: Vec<PathBuf>,
    pub particle_rows: usize,
    pub grid_rows: usize,
    /// Episodes without a learned posterior.
    pub skipped: Vec<usize>,
}

/// Points per parameter and step on the dense density grid.
pub const RIDGE_GRID_POINTS: usize = 400;

struct Mixture {
    centers: Vec<f64>,
    var: f64,
    transform: Transform,
}

impl Mixture {
    /// Marginal density in physical units at physical value `v`.
    fn density(&self, v: f64) -> f64 {
        let z = self.transform.encode(v);
        let logs: Vec<f64> = self
            .centers
            .iter()
            .map(|c| -0.5 * (z - c).powi(2) / self.var - 0.5 * (2.0 * PI * self.var).ln())
            .collect();
        let enc = (log_sum_exp(&logs) - (self.centers.len() as f64).ln()).exp();
        enc * self.transform.jacobian(z).abs().recip()
    }
}

/// Writes `ridge.csv` (step, particle, param, value, density at the value)
/// and `ridge-grid.csv` (step, param, value, density on a dense grid) into
/// every episode directory of `run` that carries a learned posterior. The
/// density is the marginal of the posterior mixture in physical units.
pub fn export_ridge(run: &Path) -> Result<RidgeReport> {
    let mut report = RidgeReport::default();
    for (k, dir) in episode_dirs(run)? {
        let gmm_path = dir.join("posterior-gmm.csv");
        if !gmm_path.exists() {
            log::warn!("episode {k}: no posterior mixture snapshots, nothing to export");
            report.skipped.push(k);
            continue;
        }
        let (p_header, p_rows) = read_table(&dir.join("posterior.csv"))?;
        let (_, g_rows) = read_table(&gmm_path)?;
        // (step, param) -> (transform, variance)
        let mut mixtures: Vec<(usize, String, Transform, f64)> = Vec::new();
        for r in &g_rows {
            mixtures.push((parse_usize(&r[0])?, r[1].clone(), parse_transform(&r[2])?, parse_f64(&r[3])?));
        }
        let mut ridge = Vec::new();
        let mut grid = Vec::new();
        for (step, param, transform, var) in &mixtures {
            let col = p_header
                .iter()
                .position(|h| h == param)
                .ok_or_else(|| Error::Csv(format!("posterior.csv has no column `{param}`")))?;
            let rows: Vec<&Vec<String>> = p_rows.iter().filter(|r| r[0] == step.to_string()).collect();
            let values = rows.iter().map(|r| parse_f64(&r[col])).collect::<Result<Vec<_>>>()?;
            let mix = Mixture {
                centers: values.iter().map(|v| transform.encode(*v)).collect(),
                var: *var,
                transform: *transform,
            };
            for (r, v) in rows.iter().zip(&values) {
                ridge.push(vec![step.to_string(), r[1].clone(), param.clone(), num(*v), num(mix.density(*v))]);
            }
            let sd = var.sqrt();
            let lo = mix.centers.iter().cloned().fold(f64::INFINITY, f64::min) - 6.0 * sd;
            let hi = mix.centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 6.0 * sd;
            for g in 0..RIDGE_GRID_POINTS {
                let z = lo + (hi - lo) * g as f64 / (RIDGE_GRID_POINTS - 1) as f64;
                let v = transform.decode(z);
                grid.push(vec![step.to_string(), param.clone(), num(v), num(mix.density(v))]);
            }
        }
        if ridge.is_empty() {
            log::warn!("episode {k}: posterior snapshots are empty, nothing to export");
            report.skipped.push(k);
            continue;
        }
        report.particle_rows += ridge.len();
        report.grid_rows += grid.len();
        let (ridge_path, grid_path) = (dir.join("ridge.csv"), dir.join("ridge-grid.csv"));
        write_rows(&ridge_path, names(&["step", "particle", "param", "value", "density"]), ridge.into_iter())?;
        write_rows(&grid_path, names(&["step", "param", "value", "density"]), grid.into_iter())?;
        report.files.extend([ridge_path, grid_path]);
    }
    if report.files.is_empty() {
        log::warn!("no posterior snapshots found under {}; ridge export is empty", run.display());
    }
    Ok(report)
}
