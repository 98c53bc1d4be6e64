//! Optional JSON config file merged under explicit flags (flags win).

use freqest_core::{Error, Result};
use serde::Deserialize;
use std::path::Path;

/// Every key a command can read from a config file. All optional; commands
/// resolve flag -> config -> default in that order.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub env: Option<String>,
    pub heuristic: Option<String>,
    pub heuristics: Option<String>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub dead_time: Option<f64>,
    pub output: Option<String>,
    pub population: Option<usize>,
    pub elites: Option<usize>,
    pub iterations: Option<usize>,
    pub seeds: Option<usize>,
    pub episodes_per_individual: Option<usize>,
    pub select_episodes: Option<usize>,
    pub hidden: Option<String>,
    pub bound: Option<String>,
    pub k_max: Option<usize>,
    pub time_cap: Option<f64>,
    pub points: Option<usize>,
    pub prior_k: Option<f64>,
    pub bins: Option<usize>,
    pub level: Option<f64>,
    pub truth: Option<String>,
    pub time_points: Option<usize>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::InvalidArgument(format!("config file {}: {e}", p.display()))
                })
            }
        }
    }
}

/// Resolves a required setting from flag, then config, erroring with the
/// flag name when neither is present.
pub fn require<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config)
        .ok_or_else(|| Error::InvalidArgument(format!("missing required --{name} (or config key)")))
}
