//! On-disk form of a backtest: per-hour CSV, metrics JSON, weekly CSV and
//! density CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::write_file;
use crate::data::{format_ts, parse_ts, DroppedHours};
use crate::models::ModelKind;

use super::{
    BacktestReport, DensityEstimate, EnsembleFold, EvalError, FoldFailure, HourRecord,
    MetricTables, Schedule, SCHEMA_VERSION,
};

pub const HOURLY_FILE: &str = "hourly.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const WEEKLY_FILE: &str = "weekly.csv";
pub const HOURLY_HEADER: &str = "ts_utc,plant_id,model,forecast_kw,measured_kw,nominal_kw,csi";

/// Everything in a report except the hourly records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub schema_version: u32,
    pub schedule: Schedule,
    pub models: Vec<ModelKind>,
    pub plants: Vec<String>,
    pub tables: MetricTables,
    pub ensemble: Vec<EnsembleFold>,
    pub failures: Vec<FoldFailure>,
    pub dropped: BTreeMap<String, DroppedHours>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_hourly(mut w: impl Write, records: &[HourRecord]) -> std::io::Result<()> {
    writeln!(w, "{HOURLY_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            format_ts(&r.timestamp),
            r.plant_id,
            r.model,
            opt(r.forecast),
            r.measured,
            r.nominal,
            opt(r.csi)
        )?;
    }
    Ok(())
}

pub fn read_hourly(path: &Path) -> Result<Vec<HourRecord>, EvalError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: name.clone(),
        source,
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(HOURLY_HEADER) {
        return Err(EvalError::Parse {
            path: name,
            line: 1,
            message: format!("expected header `{HOURLY_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let err = |message: String| EvalError::Parse {
            path: name.clone(),
            line: line_no,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str, col: &str| s.parse::<f64>().map_err(|e| err(format!("{col}: {e}")));
        let opt_num = |s: &str, col: &str| if s.is_empty() { Ok(None) } else { num(s, col).map(Some) };
        out.push(HourRecord {
            timestamp: parse_ts(f[0]).map_err(err)?,
            plant_id: f[1].to_string(),
            model: f[2].parse().map_err(|e: crate::models::ModelError| err(e.to_string()))?,
            forecast: opt_num(f[3], "forecast_kw")?,
            measured: num(f[4], "measured_kw")?,
            nominal: num(f[5], "nominal_kw")?,
            csi: opt_num(f[6], "csi")?,
        });
    }
    Ok(out)
}

/// Weekly fleet nMAE, one column per model.
pub fn write_weekly(mut w: impl Write, schedule: &Schedule, tables: &MetricTables) -> std::io::Result<()> {
    write!(w, "fold,test_start")?;
    for t in &tables.models {
        write!(w, ",{}", t.model)?;
    }
    writeln!(w)?;
    for fold in &schedule.folds {
        write!(w, "{},{}", fold.index, format_ts(&fold.test_start()))?;
        for t in &tables.models {
            write!(w, ",{}", opt(t.weekly_nmae.get(fold.index).copied().flatten()))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_density(mut w: impl Write, density: &DensityEstimate) -> std::io::Result<()> {
    writeln!(w, "grid,density")?;
    for (x, d) in density.grid.iter().zip(&density.density) {
        writeln!(w, "{x},{d}")?;
    }
    Ok(())
}

impl BacktestReport {
    pub fn document(&self) -> MetricsDocument {
        MetricsDocument {
            schema_version: SCHEMA_VERSION,
            schedule: self.schedule.clone(),
            models: self.models.clone(),
            plants: self.plants.clone(),
            tables: self.tables.clone(),
            ensemble: self.ensemble.clone(),
            failures: self.failures.clone(),
            dropped: self.dropped.clone(),
        }
    }

    /// Writes the hourly, metrics and weekly files into `dir` (which must
    /// exist), each atomically.
    pub fn write_dir(&self, dir: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(&self.document())?;
        write_file(&dir.join(HOURLY_FILE), |w| write_hourly(w, &self.hourly))?;
        write_file(&dir.join(METRICS_FILE), |w| writeln!(w, "{json}"))?;
        write_file(&dir.join(WEEKLY_FILE), |w| write_weekly(w, &self.schedule, &self.tables))?;
        Ok(())
    }

    /// Loads a report written by [`BacktestReport::write_dir`]. Tables are
    /// taken from the metrics file as stored.
    pub fn load_dir(dir: &Path) -> Result<Self, EvalError> {
        let path = dir.join(METRICS_FILE);
        let text = fs::read_to_string(&path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let doc: MetricsDocument = serde_json::from_str(&text)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(EvalError::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("unsupported schema version {}", doc.schema_version),
            });
        }
        let hourly = read_hourly(&dir.join(HOURLY_FILE))?;
        Ok(Self {
            schedule: doc.schedule,
            models: doc.models,
            plants: doc.plants,
            hourly,
            tables: doc.tables,
            ensemble: doc.ensemble,
            failures: doc.failures,
            dropped: doc.dropped,
        })
    }
}
