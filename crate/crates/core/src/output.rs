//! CSV and JSON artifacts of runs and sweeps.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! trajectory read back from disk is bitwise equal to the one written.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{BoundQuantity, ConvergenceStudy, EnergyLedger, ErrorReport, RemarkReport, SlopeFit};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::stepper::{StepReport, Trajectory};

pub const FIELDS: [&str; 4] = ["theta", "phi", "v", "z"];

/// Nodal values of one field: row `n` holds the values at `t = n h`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub coordinates: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

fn coordinate_label(c: &[f64]) -> String {
    c.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(":")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{}: cannot parse number {s:?}", path.display())))
}

pub fn write_field_table(path: &Path, table: &FieldTable) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "t")?;
    for c in &table.coordinates {
        write!(w, ",{}", coordinate_label(c))?;
    }
    writeln!(w)?;
    for (t, row) in table.times.iter().zip(&table.rows) {
        write!(w, "{t:e}")?;
        for x in row {
            write!(w, ",{x:e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_table(path: &Path) -> Result<FieldTable> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))??;
    let mut cols = header.split(',');
    if cols.next() != Some("t") {
        return Err(Error::Config(format!("{}: header must start with t", path.display())));
    }
    let coordinates = cols
        .map(|c| c.split(':').map(|x| parse_f64(x, path)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut table = FieldTable {
        coordinates,
        times: Vec::new(),
        rows: Vec::new(),
    };
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut vals = line.split(',').map(|x| parse_f64(x, path));
        table.times.push(vals.next().unwrap()?);
        let row = vals.collect::<Result<Vec<_>>>()?;
        if row.len() != table.coordinates.len() {
            return Err(Error::Config(format!(
                "{}: row with {} values under {} columns",
                path.display(),
                row.len(),
                table.coordinates.len()
            )));
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn field_table(traj: &Trajectory, field: &str) -> Result<FieldTable> {
    let grid = &traj.instance.grid;
    let pick = |s: &crate::stepper::StepState| -> Result<Vec<f64>> {
        Ok(match field {
            "theta" => s.theta.clone(),
            "phi" => s.phi.clone(),
            "v" => s.v.clone(),
            "z" => s.z.clone(),
            _ => return Err(Error::Config(format!("unknown field {field}"))),
        })
    };
    Ok(FieldTable {
        coordinates: (0..grid.node_count()).map(|i| grid.coordinates(i)).collect(),
        times: traj.states.iter().map(|s| s.time).collect(),
        rows: traj.states.iter().map(pick).collect::<Result<Vec<_>>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub passed: bool,
    pub first_failed_step: Option<usize>,
    pub first_invalid_entry: Option<(String, usize, f64)>,
    pub bounds: Vec<BoundQuantity>,
}

impl From<&EnergyLedger> for LedgerSummary {
    fn from(l: &EnergyLedger) -> Self {
        LedgerSummary {
            passed: l.passed(),
            first_failed_step: l.first_failed_step().map(|(n, _)| n),
            first_invalid_entry: l.first_invalid_entry(),
            bounds: l.bounds.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Option<RunConfig>,
    pub steps: usize,
    pub h: f64,
    pub contraction_bound: f64,
    pub max_contraction_ratio: f64,
    pub source_error: f64,
    pub ledger: Option<LedgerSummary>,
    pub remark: Option<RemarkReport>,
    pub reports: Vec<StepReport>,
    pub files: Vec<PathBuf>,
}

/// Writes `theta.csv`, `phi.csv`, `v.csv`, `z.csv` into `dir` and returns
/// their paths.
pub fn write_trajectory(traj: &Trajectory, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for field in FIELDS {
        let path = dir.join(format!("{field}.csv"));
        write_field_table(&path, &field_table(traj, field)?)?;
        files.push(path);
    }
    Ok(files)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

/// `rates.csv`: one row per sweep run.
pub fn write_rates(path: &Path, study: &ConvergenceStudy) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "N,h")?;
    for name in ErrorReport::NORM_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",composite,M_h,source_error")?;
    for row in &study.rows {
        write!(w, "{},{:e}", row.steps, row.h)?;
        for e in row.errors.norms() {
            write!(w, ",{e:e}")?;
        }
        writeln!(w, ",{:e},{:e},{:e}", row.errors.composite, row.m_h, row.errors.source_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: Option<RunConfig>,
    pub reference_steps: usize,
    pub fit: SlopeFit,
    pub m_spread: f64,
    pub m_growth: f64,
    pub rows: Vec<crate::analysis::RateRow>,
}

impl SweepSummary {
    pub fn new(config: Option<RunConfig>, study: &ConvergenceStudy) -> Self {
        SweepSummary {
            config,
            reference_steps: study.reference_steps,
            fit: study.fit.clone(),
            m_spread: study.m_spread(),
            m_growth: study.m_growth(),
            rows: study.rows.clone(),
        }
    }
}
