//! Run parameters shared by every command.
//!
//! The same set of keys can come from a JSON file (`--config`) or from flags;
//! a flag always wins over the file. Keys a command does not use are ignored,
//! so one file can drive several commands of a sweep.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Thermo,
    Rabi,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// JSON file with default values for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<Format>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of probe levels; a comma-separated list for thermo-feedback.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,

    /// Mean thermal occupation. For thermo-feedback a single value replaces the sweep.
    #[arg(long)]
    pub nbar: Option<f64>,

    #[arg(long)]
    pub nbar_min: Option<f64>,

    #[arg(long)]
    pub nbar_max: Option<f64>,

    #[arg(long)]
    pub nbar_points: Option<usize>,

    /// Rabi frequency in units of the decay rate.
    #[arg(long)]
    pub omega: Option<f64>,

    /// Measurement basis: z, x, y or bloch:POLAR,AZIMUTH.
    #[arg(long)]
    pub basis: Option<String>,

    #[arg(long)]
    pub tau_min: Option<f64>,

    #[arg(long)]
    pub tau_max: Option<f64>,

    #[arg(long)]
    pub tau_points: Option<usize>,

    /// Log-spaced waiting-time grid (`--tau-log false` for linear).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tau_log: Option<bool>,

    /// Side of the 2-D grid seeding the feedback optimizer.
    #[arg(long)]
    pub grid_2d: Option<usize>,

    /// Coarse-grained (ground vs excited) measurement.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub coarse: Option<bool>,

    /// Monte-Carlo model.
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,

    /// Fixed waiting time for montecarlo; the optimum on the grid otherwise.
    #[arg(long)]
    pub tau: Option<f64>,

    /// Outcomes per trajectory.
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub trajectories: Option<usize>,

    /// mle, inversion:NEXT,PREV or empirical:OUTCOME.
    #[arg(long)]
    pub estimator: Option<String>,

    /// Verification suites: all, identities, stationarity, oracle, collision.
    #[arg(long, value_delimiter = ',')]
    pub suite: Option<Vec<String>>,

    /// Longest record enumerated by the oracle suite.
    #[arg(long)]
    pub n_max: Option<usize>,

    /// Relative perturbation of the relaxation factor in the closed-form
    /// transitions checked by `verify`.
    #[arg(long, hide = true)]
    pub perturb_f: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),*) => {
        $(if $dst.$field.is_none() { $dst.$field = $src.$field; })*
    };
}

impl Params {
    /// Fills every unset field from the config file, if one was given.
    pub fn resolve(mut self) -> Result<Self, Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = load(&path)?;
        overlay!(self, file; out, format, seed, levels, nbar, nbar_min, nbar_max, nbar_points,
            omega, basis, tau_min, tau_max, tau_points, tau_log, grid_2d, coarse, model, tau, n,
            trajectories, estimator, suite, n_max, perturb_f);
        Ok(self)
    }
}

fn load(path: &Path) -> Result<Params, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
}
