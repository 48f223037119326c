//! CSV and manifest output.
//!
//! Ensemble files have the header `t,<obs>_mean,<obs>_stderr,...`; trajectory
//! files have `t,<obs>,...,jump`. Floats are written with 17 significant
//! digits so that reading a file back reproduces the values bit for bit.

use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::engine::TrajectoryRecord;
use crate::ensemble::EnsembleStatistics;
use crate::error::{Error, Result};
use crate::models::Observable;

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_ensemble_csv(path: &Path, stats: &EnsembleStatistics) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    for o in &stats.observables {
        header.push(format!("{}_mean", o.name()));
        header.push(format!("{}_stderr", o.name()));
    }
    w.write_record(&header)?;
    for (i, &t) in stats.times.iter().enumerate() {
        let mut row = vec![fmt(t)];
        for j in 0..stats.observables.len() {
            row.push(fmt(stats.mean[j][i]));
            row.push(fmt(stats.std_error[j][i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Contents of an ensemble CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTable {
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Io(format!("line {line}: `{s}` is not a number")))
}

pub fn read_ensemble_csv(path: &Path) -> Result<EnsembleTable> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") || header.len() % 2 != 1 {
        return Err(Error::Io(format!("{}: unexpected header", path.display())));
    }
    let mut observables = Vec::new();
    for pair in header.iter().skip(1).collect::<Vec<_>>().chunks(2) {
        let name = pair[0]
            .strip_suffix("_mean")
            .filter(|n| pair[1].strip_suffix("_stderr") == Some(n))
            .ok_or_else(|| Error::Io(format!("unexpected columns {pair:?}")))?;
        observables.push(name.parse::<Observable>()?);
    }
    let k = observables.len();
    let mut table = EnsembleTable {
        times: Vec::new(),
        observables,
        mean: vec![Vec::new(); k],
        std_error: vec![Vec::new(); k],
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        table.times.push(parse_float(&rec[0], line + 2)?);
        for j in 0..k {
            table.mean[j].push(parse_float(&rec[1 + 2 * j], line + 2)?);
            table.std_error[j].push(parse_float(&rec[2 + 2 * j], line + 2)?);
        }
    }
    Ok(table)
}

pub fn write_trajectory_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(rec.observables.iter().map(|o| o.name().to_string()));
    header.push("jump".into());
    w.write_record(&header)?;
    let flags = rec.jump_flags();
    for (i, &t) in rec.times.iter().enumerate() {
        let mut row = vec![fmt(t)];
        row.extend(rec.values.iter().map(|v| fmt(v[i])));
        row.push(if flags[i] { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub master_seed: u64,
    pub n_trajectories: usize,
    pub n_failed: usize,
    pub total_jumps: usize,
    pub decimation_stride: usize,
    pub wall_time_seconds: f64,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: &RunConfig, preset: Option<&str>, stats: &EnsembleStatistics, wall_time_seconds: f64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            preset: preset.map(str::to_string),
            master_seed: stats.master_seed,
            n_trajectories: stats.n_trajectories,
            n_failed: stats.n_failed,
            total_jumps: stats.total_jumps,
            decimation_stride: stats.stride,
            wall_time_seconds,
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
