//! Kernel density of daily bias values.

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use crate::models::ModelKind;

use super::{BacktestReport, EvalError, MetricAccumulator, Scope};

pub const GRID_POINTS: usize = 512;
/// Grid half-width in standard deviations.
pub const GRID_SPAN_SD: f64 = 5.0;
pub const MIN_DAYS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub mean: f64,
    /// Sample variance (n − 1 denominator) of the input values.
    pub variance: f64,
    pub n_values: usize,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule of thumb, `0.9·min(sd, IQR/1.34)·n^(-1/5)`, falling back
/// to the sd when the IQR is zero.
pub fn silverman_bandwidth(values: &[f64], sd: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (values.len() as f64).powf(-0.2)
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Gaussian kernel density on [`GRID_POINTS`] points spanning
/// `mean ± GRID_SPAN_SD·sd`, renormalised to unit trapezoid area. Zero
/// spread gives a single spike at the mean on a `mean ± 1` grid.
pub fn kernel_density(values: &[f64]) -> Result<DensityEstimate, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFewDays { needed: 2, got: n });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = variance.sqrt();
    let linspace = |lo: f64, hi: f64| -> Vec<f64> {
        (0..GRID_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
            .collect::<Vec<_>>()
    };
    if sd == 0.0 {
        let grid = linspace(mean - 1.0, mean + 1.0);
        let dx = grid[1] - grid[0];
        let centre = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - mean).abs().total_cmp(&(b.1 - mean).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut density = vec![0.0; GRID_POINTS];
        density[centre] = 1.0 / dx;
        return Ok(DensityEstimate {
            grid,
            density,
            bandwidth: 0.0,
            mean,
            variance,
            n_values: n,
        });
    }
    let h = silverman_bandwidth(values, sd);
    let grid = linspace(mean - GRID_SPAN_SD * sd, mean + GRID_SPAN_SD * sd);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            norm * values
                .iter()
                .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    let area = trapezoid(&grid, &density);
    if area > 0.0 {
        density.iter_mut().for_each(|d| *d /= area);
    }
    Ok(DensityEstimate {
        grid,
        density,
        bandwidth: h,
        mean,
        variance,
        n_values: n,
    })
}

/// nMBE of each plant-day of `model`, in date then plant order.
pub fn daily_nmbe(report: &BacktestReport, model: ModelKind) -> Vec<f64> {
    let mut days: BTreeMap<(chrono::NaiveDate, &str), MetricAccumulator> = BTreeMap::new();
    for r in report.records(model) {
        if let Some(f) = r.forecast {
            days.entry((r.timestamp.date_naive(), r.plant_id.as_str()))
                .or_default()
                .push(f, r.measured, r.nominal);
        }
    }
    days.values()
        .filter_map(|a| a.report(Scope::Overall).map(|m| m.nmbe))
        .collect()
}

/// Density of the daily nMBE of `model`; needs [`MIN_DAYS`] plant-days.
pub fn daily_nmbe_density(report: &BacktestReport, model: ModelKind) -> Result<DensityEstimate, EvalError> {
    if !report.models.contains(&model) {
        return Err(EvalError::UnknownModel(model.to_string()));
    }
    let values = daily_nmbe(report, model);
    if values.len() < MIN_DAYS {
        return Err(EvalError::TooFewDays {
            needed: MIN_DAYS,
            got: values.len(),
        });
    }
    kernel_density(&values)
}

impl DensityEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}
