//! CSV tables and JSON sidecars.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Significant digits used for floating-point cells.
pub const SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Self::Num(x) => format_significant(*x, SIGNIFICANT_DIGITS),
            Self::Int(i) => i.to_string(),
            Self::Bool(b) => b.to_string(),
            Self::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Self::Int(i as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Self::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Self::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Self::Text(s)
    }
}

/// Builds a row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::report::Cell::from($x)),*] };
}

/// One experiment's output: a fixed-schema table plus resolved parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub experiment: String,
    pub seed: u64,
    pub columns: Vec<&'static str>,
    #[serde(skip)]
    pub rows: Vec<Vec<Cell>>,
    /// Every parameter the run actually used.
    pub params: Value,
    /// Vectors and diagnostics that do not fit the table.
    pub extra: Value,
}

impl Table {
    pub fn new(experiment: &str, seed: u64, columns: &[&'static str]) -> Self {
        Self {
            experiment: experiment.to_owned(),
            seed,
            columns: columns.to_vec(),
            rows: Vec::new(),
            params: Value::Null,
            extra: Value::Null,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.experiment);
        self.rows.push(row);
    }

    /// CSV text: one `#` comment line, the header, then the rows.
    pub fn to_csv(&self, generated_unix: u64) -> Result<String, CliError> {
        let mut out = format!(
            "# caldiff {} seed={} generated_unix={generated_unix}\n",
            self.experiment, self.seed
        )
        .into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        String::from_utf8(out).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn sidecar(&self) -> Value {
        serde_json::json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "columns": self.columns,
            "rows": self.rows.len(),
            "params": self.params,
            "extra": self.extra,
        })
    }

    /// Writes `path` and `path` with a `.json` extension.
    pub fn write(&self, path: &Path) -> Result<PathBuf, CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        }
        let csv = self.to_csv(unix_now())?;
        std::fs::write(path, csv).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        let json_path = path.with_extension("json");
        let json = serde_json::to_string_pretty(&self.sidecar()).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&json_path, json + "\n")
            .map_err(|e| CliError::Io(format!("writing {}: {e}", json_path.display())))?;
        Ok(json_path)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Shortest decimal with at most `digits` significant digits; scientific
/// notation outside `[1e-4, 1e6)`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1);
    // Round first so that 999999.7 is classified by its rounded exponent.
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}
