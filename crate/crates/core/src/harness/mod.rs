//! Experiment harness: configuration, the closed-loop episode runner, batch
//! execution, and result files.

mod config;
mod episode;
mod output;

pub use config::{ControllerId, ExperimentConfig, GmmSetting, LatentSpec, ScheduleEntry, TaskId, TaskParams};
pub use episode::{
    cost_without_penalty, run_episode, run_episode_with, EpisodeRecord, EpisodeSummary, PolicyRecord,
    PosteriorSnapshot, StepRecord,
};
pub use output::{
    episode_dir, episode_dirs, export_ridge, run_batch, summarize, write_episode, BatchResult, RidgeReport, Summary,
    CONFIG_ECHO, RIDGE_GRID_POINTS, SUMMARY_FILE,
};
