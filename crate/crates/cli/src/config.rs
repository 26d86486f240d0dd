//! Run settings shared by command-line flags and JSON config files.
//!
//! Every setting is optional in both places; flags win over the file, and each
//! experiment fills in its own defaults for whatever is still unset.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Named experiment tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CpTable,
    SpeedupTable,
    NoiseFloorTable,
    SgpsDemo,
    SensitivityTable,
    EulerStress,
    Nonsyn,
    TwoRegime,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::CpTable,
        Self::SpeedupTable,
        Self::NoiseFloorTable,
        Self::SgpsDemo,
        Self::SensitivityTable,
        Self::EulerStress,
        Self::Nonsyn,
        Self::TwoRegime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CpTable => "cp-table",
            Self::SpeedupTable => "speedup-table",
            Self::NoiseFloorTable => "noise-floor-table",
            Self::SgpsDemo => "sgps-demo",
            Self::SensitivityTable => "sensitivity-table",
            Self::EulerStress => "euler-stress",
            Self::Nonsyn => "nonsyn",
            Self::TwoRegime => "two-regime",
        }
    }

    /// Subcommand that produces this table.
    pub fn subcommand(self) -> &'static str {
        match self {
            Self::CpTable => "estimate-cp",
            Self::SpeedupTable | Self::TwoRegime => "two-regime",
            Self::NoiseFloorTable => "noise-floor",
            Self::SgpsDemo | Self::SensitivityTable => "calibrate",
            Self::EulerStress => "euler",
            Self::Nonsyn => "nonsyn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialChoice {
    Quadratic,
    Logcosh,
}

/// All tunable settings. Lists take comma-separated values on the command line.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output CSV file, or a directory for `reproduce-all`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Edge-list graph file ("N m" header, then "i j w" lines).
    #[arg(long, global = true)]
    pub graph_file: Option<PathBuf>,
    /// Table to produce; only needed to pick between tables of one subcommand.
    #[arg(long, global = true, value_enum)]
    pub experiment: Option<Experiment>,

    /// Graph specs such as `path:10`, `grid:20x20`, `er:100:0.1:1`, `karate`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub graph: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub alpha_p: Option<f64>,
    /// Uniform quadratic dissipation γ (also the modulus μ of the log-cosh potential).
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub potential: Option<PotentialChoice>,
    /// Weight of the log-cosh part.
    #[arg(long, global = true)]
    pub weight: Option<f64>,
    /// Uniform baseline h⋆ per node.
    #[arg(long, global = true)]
    pub h_star: Option<f64>,
    /// Uniform source per node.
    #[arg(long, global = true)]
    pub source: Option<f64>,

    #[arg(long, global = true)]
    pub tau_star: Option<f64>,
    #[arg(long, global = true)]
    pub h_target: Option<f64>,
    /// Sensitivity rows as `tau:H` pairs.
    #[arg(long, global = true, value_delimiter = ',')]
    pub targets: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub rho_star: Option<f64>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,

    #[arg(long, global = true, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub eta0: Option<f64>,
    #[arg(long, global = true)]
    pub sigma2: Option<f64>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    #[arg(long, global = true)]
    pub sample_interval: Option<f64>,
    /// Threshold on ‖h⊥‖ for time-to-threshold measurements.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// ‖h⊥(0)‖ of random initial states.
    #[arg(long, global = true)]
    pub norm: Option<f64>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($f:ident),* $(,)?) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    /// Fields set in `self` win; the rest come from `base`.
    pub fn overlay(self, base: Settings) -> Settings {
        overlay!(self, base;
            seed, jobs, out, graph_file, experiment, graph, p, alpha, alpha_p, gamma, potential,
            weight, h_star, source, tau_star, h_target, targets, rho_star, n_max, eta, eta0,
            sigma2, chains, iterations, runs, restarts, t_end, sample_interval, threshold, norm,
        )
    }

    pub fn from_json(text: &str) -> Result<Settings, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
