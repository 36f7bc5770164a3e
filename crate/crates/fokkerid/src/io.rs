//! Delimited-text exchange formats and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are byte-stable across runs and parse back to identical values.

use crate::error::Error;
use crate::harness::{ErrorReport, Scenario, SCENARIO_FORMAT};
use crate::inversion::{IterationRecord, LandweberConfig, RunStatus};
use crate::linalg::Vec3;
use crate::model::{Parameter, TimeIndexedField};
use crate::observation::{ObservationSeries, ObservationValues};
use crate::pde::StateField;
use crate::TimeGrid;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const RUN_FORMAT: &str = "FOKKERID-RUN-v1";
pub const SIM_FORMAT: &str = "FOKKERID-SIM-v1";

// ---------------------------------------------------------------------------
// observation series (expectation mode): csv with header t,y1,y2,y3
// ---------------------------------------------------------------------------

pub fn observation_to_csv(y: &ObservationSeries) -> crate::Result<String> {
    let series = match &y.values {
        ObservationValues::Expectation(s) => s,
        ObservationValues::Identity(_) => {
            return Err(Error::Format(
                "identity-mode series use the state dump format, not the observation csv".into(),
            ))
        }
    };
    let mut out = String::from("t,y1,y2,y3\n");
    for (k, v) in series.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", y.time_grid.time(k), v.x, v.y, v.z);
    }
    Ok(out)
}

pub fn write_observation(y: &ObservationSeries, path: &Path) -> crate::Result<()> {
    std::fs::write(path, observation_to_csv(y)?)?;
    Ok(())
}

pub fn observation_from_csv(text: &str) -> crate::Result<ObservationSeries> {
    let (times, rows) = parse_time_rows(text, "t,y1,y2,y3", 3)?;
    let grid = grid_from_times(&times)?;
    let series = rows.into_iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    Ok(ObservationSeries { values: ObservationValues::Expectation(series), time_grid: grid })
}

pub fn read_observation(path: &Path) -> crate::Result<ObservationSeries> {
    observation_from_csv(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// parameters: time series csv (cases 1, 3) or per-cell table (case 2)
// ---------------------------------------------------------------------------

pub fn parameter_to_csv(p: &Parameter, grid: &TimeGrid) -> crate::Result<String> {
    let mut out = String::new();
    match p {
        Parameter::FieldWaveform { h } => {
            out.push_str("t,p1,p2,p3\n");
            for (k, v) in h.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", grid.time(k), v.x, v.y, v.z);
            }
        }
        Parameter::EasyAxis { n } => {
            out.push_str("t,p1,p2,p3\n");
            for (k, v) in n.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", grid.time(k), v.x, v.y, v.z);
            }
        }
        Parameter::AnisotropyLandscape { phi } => match phi {
            TimeIndexedField::Static(f) => {
                out.push_str("cell,phi1,phi2,phi3\n");
                for (i, v) in f.iter().enumerate() {
                    let _ = writeln!(out, "{i},{},{},{}", v.x, v.y, v.z);
                }
            }
            TimeIndexedField::PerStep(_) => {
                return Err(Error::Format(
                    "time-indexed landscapes have no single-file csv form".into(),
                ))
            }
        },
    }
    Ok(out)
}

pub fn write_parameter(p: &Parameter, grid: &TimeGrid, path: &Path) -> crate::Result<()> {
    std::fs::write(path, parameter_to_csv(p, grid)?)?;
    Ok(())
}

/// Reads a time-series parameter file; `easy_axis` picks the case-3 tag.
pub fn read_series_parameter(path: &Path, easy_axis: bool) -> crate::Result<(Parameter, TimeGrid)> {
    let text = std::fs::read_to_string(path)?;
    let (times, rows) = parse_time_rows(&text, "t,p1,p2,p3", 3)?;
    let grid = grid_from_times(&times)?;
    let series: Vec<Vec3> = rows.into_iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    let p = if easy_axis {
        Parameter::EasyAxis { n: series }
    } else {
        Parameter::FieldWaveform { h: series }
    };
    Ok((p, grid))
}

// ---------------------------------------------------------------------------
// full-state dump (verbosity-gated; one row per step: t, cell values)
// ---------------------------------------------------------------------------

pub fn state_dump_to_csv(u: &StateField) -> String {
    let mut out = String::new();
    for (k, slice) in u.values.iter().enumerate() {
        let _ = write!(out, "{}", u.time_grid.time(k));
        for v in slice {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// iteration trace (deterministic columns only)
// ---------------------------------------------------------------------------

pub fn trace_to_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from("k,discrepancy,armijo_steps,step_scale,error_l2\n");
    for r in trace {
        let err = r.error_l2.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{err}", r.k, r.discrepancy, r.armijo_steps, r.step_scale);
    }
    out
}

// ---------------------------------------------------------------------------
// manifests (structured text via toml)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyFileEntry {
    pub level: f64,
    pub delta: f64,
    pub file: String,
}

/// Manifest written next to simulated measurement files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub format: String,
    pub scenario_name: String,
    pub case: u8,
    pub seed: u64,
    pub fine_level: u32,
    pub coarse_level: u32,
    pub t_end: f64,
    pub n_steps: usize,
    pub observation_sup_norm: f64,
    /// Two-grid model mismatch ‖F_coarse(p_true) − y_clean‖; the effective δ
    /// for noiseless discrepancy stopping.
    pub model_mismatch: f64,
    pub clean_file: String,
    pub noisy: Vec<NoisyFileEntry>,
}

impl SimulationManifest {
    pub fn validate(&self) -> crate::Result<()> {
        if self.format != SIM_FORMAT {
            return Err(Error::Format(format!(
                "manifest format {:?} is not {SIM_FORMAT:?}",
                self.format
            )));
        }
        Ok(())
    }
}

/// Manifest written for one reconstruction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub scenario_name: String,
    pub case: u8,
    pub seed: u64,
    pub noise_level: Option<f64>,
    pub status: RunStatus,
    pub delta: f64,
    pub omega: f64,
    pub iterations: usize,
    pub final_discrepancy: f64,
    pub initial_discrepancy: f64,
    pub discrepancy_stop_index: Option<usize>,
    pub best_index: Option<usize>,
    pub bootstrap_used: bool,
    pub total_wall_time: f64,
    /// CLI overrides applied to the configuration, `key=value` per entry.
    pub overrides: Vec<String>,
    pub config: LandweberConfig,
    pub error_report: Option<ErrorReport>,
}

pub fn write_toml<T: Serialize>(value: &T, path: &Path) -> crate::Result<()> {
    let text = toml::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("toml serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> crate::Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_scenario(s: &Scenario, path: &Path) -> crate::Result<()> {
    write_toml(s, path)
}

pub fn read_scenario(path: &Path) -> crate::Result<Scenario> {
    let s: Scenario = read_toml(path)?;
    if s.format != SCENARIO_FORMAT {
        return Err(Error::Format(format!(
            "scenario format {:?} is not {SCENARIO_FORMAT:?}",
            s.format
        )));
    }
    s.validate()?;
    Ok(s)
}

// ---------------------------------------------------------------------------
// error tables (Table-style: one row per noise level and stopping rule)
// ---------------------------------------------------------------------------

pub const ERROR_TABLE_HEADER: &str = "noise_level,seed,rule,index,l2_error,h1_error";

pub fn error_table_to_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from(ERROR_TABLE_HEADER);
    out.push('\n');
    let mut sorted: Vec<&ErrorReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        (a.noise_level, a.seed)
            .partial_cmp(&(b.noise_level, b.seed))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},discrepancy,{},{},{}",
            r.noise_level, r.seed, r.discrepancy.index, r.discrepancy.l2, r.discrepancy.h1
        );
        if let Some(best) = &r.best {
            let _ = writeln!(
                out,
                "{},{},best,{},{},{}",
                r.noise_level, r.seed, best.index, best.l2, best.h1
            );
        }
    }
    out
}

/// Row for runs without ground truth: error columns marked absent.
pub fn error_table_absent_row(noise_level: f64, seed: u64, index: usize) -> String {
    format!("{noise_level},{seed},discrepancy,{index},,\n")
}

// ---------------------------------------------------------------------------
// shared csv helpers
// ---------------------------------------------------------------------------

fn parse_time_rows(
    text: &str,
    expected_header: &str,
    n_cols: usize,
) -> crate::Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != expected_header {
        return Err(Error::Format(format!(
            "bad csv header {header:?}, expected {expected_header:?}"
        )));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols + 1 {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                n_cols + 1
            )));
        }
        let mut nums = Vec::with_capacity(n_cols + 1);
        for f in &fields {
            nums.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 2)))?,
            );
        }
        times.push(nums[0]);
        rows.push(nums[1..].to_vec());
    }
    if times.len() < 2 {
        return Err(Error::Format("csv needs at least two rows".into()));
    }
    Ok((times, rows))
}

fn grid_from_times(times: &[f64]) -> crate::Result<TimeGrid> {
    let n_steps = times.len() - 1;
    let t_end = times[n_steps];
    let grid = TimeGrid::new(t_end, n_steps)?;
    let dt = grid.dt();
    for (k, &t) in times.iter().enumerate() {
        if (t - grid.time(k)).abs() > 1e-9 * dt.max(t.abs()) {
            return Err(Error::Format(format!(
                "non-uniform time column at row {k}: {t} vs {}",
                grid.time(k)
            )));
        }
    }
    Ok(grid)
}
