//! Batch experiment runner for `caldiff`: subcommands, settings, and CSV/JSON
//! output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

use clap::Subcommand;

use config::{Experiment, Settings};
use error::CliError;
use report::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Empirical C_p against the closed-form bounds (cp-table).
    EstimateCp,
    /// SGPS calibration (sgps-demo), or a target sweep (sensitivity-table).
    Calibrate,
    /// Integrate the flow and record t, mass, energy, err, perp_err.
    Simulate,
    /// Explicit Euler around the stability threshold (euler-stress).
    Euler,
    /// Forward-backward splitting against its contraction factor.
    Fb,
    /// Stochastic resolvent floors against the bound (noise-floor-table).
    NoiseFloor,
    /// Robbins-Monro ensemble with eta_k = eta0/(k+1).
    Rm,
    /// Path graphs against 4-regular expanders at fixed alpha (nonsyn).
    Nonsyn,
    /// Transient bound check (two-regime), or time-to-threshold by p (speedup-table).
    TwoRegime,
    /// Every named table with its defaults, written into the --out directory.
    ReproduceAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::EstimateCp => "estimate-cp",
            Self::Calibrate => "calibrate",
            Self::Simulate => "simulate",
            Self::Euler => "euler",
            Self::Fb => "fb",
            Self::NoiseFloor => "noise-floor",
            Self::Rm => "rm",
            Self::Nonsyn => "nonsyn",
            Self::TwoRegime => "two-regime",
            Self::ReproduceAll => "reproduce-all",
        }
    }

    /// Table a subcommand produces when the settings do not pick one.
    fn default_experiment(self, s: &Settings) -> Option<Experiment> {
        match self {
            Self::EstimateCp => Some(Experiment::CpTable),
            Self::Calibrate if s.targets.is_some() => Some(Experiment::SensitivityTable),
            Self::Calibrate => Some(Experiment::SgpsDemo),
            Self::Euler => Some(Experiment::EulerStress),
            Self::NoiseFloor => Some(Experiment::NoiseFloorTable),
            Self::Nonsyn => Some(Experiment::Nonsyn),
            Self::TwoRegime => Some(Experiment::TwoRegime),
            Self::Simulate | Self::Fb | Self::Rm | Self::ReproduceAll => None,
        }
    }
}

/// Runs one subcommand and returns the CSV files written.
pub fn dispatch(cmd: Command, s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    if cmd == Command::ReproduceAll {
        return reproduce_all(s);
    }
    let experiment = match (s.experiment, cmd.default_experiment(s)) {
        (Some(e), _) if e.subcommand() == cmd.name() => Some(e),
        (Some(e), _) => {
            return Err(CliError::Usage(format!(
                "experiment {} belongs to subcommand {}, not {}",
                e.name(),
                e.subcommand(),
                cmd.name()
            )))
        }
        (None, e) => e,
    };
    let table = match (cmd, experiment) {
        (_, Some(e)) => experiments::run(e, s)?,
        (Command::Simulate, None) => experiments::simulate(s)?,
        (Command::Fb, None) => experiments::forward_backward(s)?,
        (Command::Rm, None) => experiments::robbins_monro(s)?,
        (other, None) => unreachable!("{} always names a table", other.name()),
    };
    let path = output_path(s.out.as_deref(), &table.experiment);
    write(&table, &path)?;
    Ok(vec![path])
}

fn reproduce_all(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    if dir.extension().is_some_and(|e| e == "csv") {
        return Err(CliError::Usage("out: reproduce-all writes a directory, not a CSV file".into()));
    }
    // Only run-size settings carry over; every table keeps its own model defaults.
    let base = Settings {
        seed: s.seed,
        chains: s.chains,
        iterations: s.iterations,
        runs: s.runs,
        restarts: s.restarts,
        ..Settings::default()
    };
    Experiment::ALL
        .iter()
        .map(|&e| {
            let table = experiments::run(e, &base)?;
            let path = dir.join(format!("{}.csv", table.experiment));
            write(&table, &path)?;
            Ok(path)
        })
        .collect()
}

fn write(table: &Table, path: &Path) -> Result<(), CliError> {
    table.write(path)?;
    eprintln!("wrote {} ({} rows)", path.display(), table.rows.len());
    Ok(())
}

/// `--out` as given, `<dir>/<experiment>.csv` when it names a directory, or
/// `results/<experiment>.csv` by default.
pub fn output_path(out: Option<&Path>, experiment: &str) -> PathBuf {
    let file = format!("{experiment}.csv");
    match out {
        None => Path::new("results").join(file),
        Some(p) if p.is_dir() || p.as_os_str().to_string_lossy().ends_with('/') => p.join(file),
        Some(p) => p.to_path_buf(),
    }
}
