//! Forecast-driven versus measurement-driven inputs on identical hours.

use serde::{Deserialize, Serialize};

use crate::models::ModelKind;

use super::{run_backtest, wilcoxon_signed_rank, BacktestConfig, EvalError, MetricReport, PlantSeries, SignificanceResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionModel {
    pub model: ModelKind,
    pub forecast_driven: MetricReport,
    pub measurement_driven: MetricReport,
    /// Weekly nMAE pairs over folds where both runs have forecasts.
    pub weekly_forecast: Vec<f64>,
    pub weekly_measured: Vec<f64>,
    /// Overall nMAE of the forecast-driven run minus the measurement-driven
    /// run; positive when measured inputs help.
    pub improvement: f64,
    /// Share of weeks where the measurement-driven nMAE is strictly lower.
    pub weeks_improved: f64,
    /// Wilcoxon test on the weekly pairs; `None` with too few distinct weeks.
    pub significance: Option<SignificanceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionReport {
    pub models: Vec<SubstitutionModel>,
}

fn same_hours(a: &PlantSeries, b: &PlantSeries) -> bool {
    a.plant_id() == b.plant_id()
        && a.samples.len() == b.samples.len()
        && a.samples
            .samples()
            .iter()
            .zip(b.samples.samples())
            .all(|(x, y)| x.timestamp == y.timestamp)
}

/// Runs the same backtest, with the same seeds, on forecast-driven and on
/// measurement-driven samples and pairs their weekly errors.
pub fn weather_substitution(
    forecast: &[PlantSeries],
    measured: &[PlantSeries],
    config: &BacktestConfig,
) -> Result<SubstitutionReport, EvalError> {
    if forecast.len() != measured.len() {
        return Err(EvalError::LengthMismatch(forecast.len(), measured.len()));
    }
    for (f, m) in forecast.iter().zip(measured) {
        if !same_hours(f, m) {
            return Err(EvalError::HourMismatch(f.plant_id().to_string()));
        }
    }
    let f_report = run_backtest(forecast, config)?;
    let m_report = run_backtest(measured, config)?;
    let mut models = Vec::new();
    for &model in &f_report.models {
        let (Some(fo), Some(mo)) = (f_report.overall(model), m_report.overall(model)) else {
            continue;
        };
        let (mut wf, mut wm) = (Vec::new(), Vec::new());
        let fw = f_report.weekly_nmae(model).unwrap_or_default();
        let mw = m_report.weekly_nmae(model).unwrap_or_default();
        for (a, b) in fw.iter().zip(mw) {
            if let (Some(a), Some(b)) = (a, b) {
                wf.push(*a);
                wm.push(*b);
            }
        }
        let improved = wf.iter().zip(&wm).filter(|(f, m)| m < f).count();
        let weeks_improved = if wf.is_empty() { 0.0 } else { improved as f64 / wf.len() as f64 };
        models.push(SubstitutionModel {
            model,
            forecast_driven: fo.clone(),
            measurement_driven: mo.clone(),
            improvement: fo.nmae - mo.nmae,
            weeks_improved,
            significance: wilcoxon_signed_rank(&wf, &wm).ok(),
            weekly_forecast: wf,
            weekly_measured: wm,
        });
    }
    Ok(SubstitutionReport { models })
}
