pub mod baselines;
pub mod controller;
pub mod dyn_inference;
pub mod envs;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod models;
pub mod policy;
pub mod rng;
pub mod svgd;

pub use error::{Error, Result};
