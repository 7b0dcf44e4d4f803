//! Grid runs: metric × failure mode × peak speed, one scenario per cell.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::config::{FaultConfig, ScenarioConfig};
use super::sim::run;
use super::summary::{summarize, Summary, SUMMARY_COLUMNS};
use crate::control::MetricKind;
use crate::error::{Error, Result};

/// Which rotors the cell loses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    /// Rotor 1 stops.
    Single,
    /// Rotors 1 and 3 stop.
    Dual,
}

impl FailureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureMode::Single => "single",
            FailureMode::Dual => "dual",
        }
    }

    pub fn rotors(&self) -> &'static [usize] {
        match self {
            FailureMode::Single => &[1],
            FailureMode::Dual => &[1, 3],
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "single" => Ok(FailureMode::Single),
            "dual" => Ok(FailureMode::Dual),
            other => Err(Error::ConfigInvalid(format!("grid: unknown failure mode '{other}'"))),
        }
    }
}

fn parse_metric(s: &str) -> Result<MetricKind> {
    MetricKind::ALL
        .into_iter()
        .find(|m| m.as_str() == s.trim())
        .ok_or_else(|| Error::ConfigInvalid(format!("grid: unknown metric '{}'", s.trim())))
}

/// Axes of a matrix run.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub metrics: Vec<MetricKind>,
    pub failures: Vec<FailureMode>,
    /// Peak trajectory speeds, m/s.
    pub speeds: Vec<f64>,
}

impl Grid {
    /// All three metrics, both failure modes and speeds 0.5 to 3.0 m/s.
    pub fn full() -> Self {
        Self {
            metrics: MetricKind::ALL.to_vec(),
            failures: vec![FailureMode::Single, FailureMode::Dual],
            speeds: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
        }
    }

    /// Parses `full` or `metric=a,b;failure=single,dual;speed=0.5,1`.
    /// Omitted axes take their `full` values.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut grid = Self::full();
        let spec = spec.trim();
        if spec == "full" {
            return Ok(grid);
        }
        for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("grid: expected key=values, got '{part}'")))?;
            let values: Vec<&str> = values.split(',').filter(|v| !v.trim().is_empty()).collect();
            match key.trim() {
                "metric" => grid.metrics = values.iter().map(|v| parse_metric(v)).collect::<Result<_>>()?,
                "failure" => grid.failures = values.iter().map(|v| v.parse()).collect::<Result<_>>()?,
                "speed" => {
                    grid.speeds = values
                        .iter()
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .ok()
                                .filter(|s| *s > 0.0 && s.is_finite())
                                .ok_or_else(|| Error::ConfigInvalid(format!("grid: bad speed '{}'", v.trim())))
                        })
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::ConfigInvalid(format!("grid: unknown axis '{other}'"))),
            }
        }
        if grid.metrics.is_empty() || grid.failures.is_empty() || grid.speeds.is_empty() {
            return Err(Error::ConfigInvalid("grid: every axis needs at least one value".into()));
        }
        Ok(grid)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &metric in &self.metrics {
            for &failure in &self.failures {
                for &speed in &self.speeds {
                    out.push(Cell { metric, failure, speed });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub metric: MetricKind,
    pub failure: FailureMode,
    pub speed: f64,
}

/// Injection time used when the base config schedules no fault, s.
pub const DEFAULT_FAULT_TIME: f64 = 1.0;

impl Cell {
    /// The base scenario with this cell's metric, speed and faults. The
    /// base config's fault schedule only contributes its first time.
    pub fn scenario(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        let time = base.faults.iter().map(|f| f.time).fold(f64::INFINITY, f64::min);
        let time = if time.is_finite() { time } else { DEFAULT_FAULT_TIME };
        cfg.metric = self.metric;
        cfg.trajectory.peak_speed = self.speed;
        cfg.faults = self.failure.rotors().iter().map(|&rotor| FaultConfig { time, rotor, damage: 100.0 }).collect();
        cfg.name = format!("{}-{}-{}-{}", base.name, self.metric.as_str(), self.failure, self.speed);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    /// `Err` holds the reason the cell could not be run.
    pub summary: std::result::Result<Summary, String>,
}

impl CellResult {
    /// Tracking RMSE in the xy plane, or `None` for a crashed or failed cell.
    pub fn xy_rmse(&self) -> Option<f64> {
        match &self.summary {
            Ok(s) if !s.is_dnf() => s.tracking.as_ref().map(|t| t.xy_rmse),
            _ => None,
        }
    }
}

/// Runs every cell, in parallel, and returns results in grid order.
pub fn run_matrix(base: &ScenarioConfig, grid: &Grid) -> Result<Vec<CellResult>> {
    let cells = grid.cells();
    for cell in &cells {
        cell.scenario(base).resolve()?;
    }
    Ok(cells
        .into_par_iter()
        .map(|cell| {
            let summary = run(&cell.scenario(base)).and_then(|log| summarize(&log)).map_err(|e| e.to_string());
            CellResult { cell, summary }
        })
        .collect())
}

/// Long-format CSV: one row per cell with the full summary.
pub fn write_matrix_csv<W: std::io::Write>(results: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric", "failure", "speed_m_s"];
    header.extend_from_slice(SUMMARY_COLUMNS);
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![r.cell.metric.as_str().to_string(), r.cell.failure.to_string(), format!("{}", r.cell.speed)];
        match &r.summary {
            Ok(s) => row.extend(s.csv_row()),
            Err(e) => {
                row.push(format!("error: {e}"));
                row.extend(std::iter::repeat_n(String::new(), SUMMARY_COLUMNS.len() - 1));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Table-shaped CSV: one row per (metric, failure), xy RMSE per speed, `DNF`
/// for cells that did not finish.
pub fn write_table_csv<W: std::io::Write>(results: &[CellResult], grid: &Grid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string(), "failure".to_string()];
    header.extend(grid.speeds.iter().map(|s| format!("{s}")));
    w.write_record(&header)?;
    for &metric in &grid.metrics {
        for &failure in &grid.failures {
            let mut row = vec![metric.as_str().to_string(), failure.to_string()];
            for &speed in &grid.speeds {
                let r = results
                    .iter()
                    .find(|r| r.cell.metric == metric && r.cell.failure == failure && r.cell.speed == speed);
                row.push(match r.and_then(|r| r.xy_rmse()) {
                    Some(v) => format!("{v:.4}"),
                    None => "DNF".into(),
                });
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
