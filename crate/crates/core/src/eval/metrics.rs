//! Normalised error metrics over hourly forecasts.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// What a [`MetricReport`] aggregates over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Overall,
    Plant(String),
    /// Calendar month, 1 = January.
    Month(u32),
    /// Index into [`super::CSI_BUCKETS`].
    CsiBucket(usize),
    /// Rolling fold index.
    Week(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Percent.
    pub nmae: f64,
    /// Percent.
    pub nrmse: f64,
    /// kW.
    pub mae: f64,
    /// Percent; positive means overestimation.
    pub nmbe: f64,
    pub n_hours: usize,
    pub scope: Scope,
}

/// Running sums behind the four metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricAccumulator {
    n: usize,
    abs_norm: f64,
    sq_norm: f64,
    norm: f64,
    abs: f64,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one hour. `nominal` must be positive.
    pub fn push(&mut self, forecast: f64, measured: f64, nominal: f64) {
        let e = forecast - measured;
        let r = e / nominal;
        self.n += 1;
        self.abs_norm += r.abs();
        self.sq_norm += r * r;
        self.norm += r;
        self.abs += e.abs();
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.abs_norm += other.abs_norm;
        self.sq_norm += other.sq_norm;
        self.norm += other.norm;
        self.abs += other.abs;
    }

    pub fn n_hours(&self) -> usize {
        self.n
    }

    /// `None` when no hour has been added.
    pub fn report(&self, scope: Scope) -> Option<MetricReport> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        Some(MetricReport {
            nmae: self.abs_norm / n * 100.0,
            nrmse: (self.sq_norm / n).sqrt() * 100.0,
            mae: self.abs / n,
            nmbe: self.norm / n * 100.0,
            n_hours: self.n,
            scope,
        })
    }
}

/// nMAE, nRMSE, nMBE (percent, normalised by each hour's nominal power) and
/// MAE (kW) of `forecast` against `measured`.
pub fn compute_metrics(forecast: &[f64], measured: &[f64], nominal: &[f64]) -> Result<MetricReport, EvalError> {
    if forecast.len() != measured.len() {
        return Err(EvalError::LengthMismatch(forecast.len(), measured.len()));
    }
    if forecast.len() != nominal.len() {
        return Err(EvalError::LengthMismatch(forecast.len(), nominal.len()));
    }
    let mut acc = MetricAccumulator::new();
    for (i, ((&f, &m), &p)) in forecast.iter().zip(measured).zip(nominal).enumerate() {
        if !(f.is_finite() && m.is_finite() && p.is_finite()) {
            return Err(EvalError::NonFinite(i));
        }
        if p <= 0.0 {
            return Err(EvalError::ZeroNominal(i));
        }
        acc.push(f, m, p);
    }
    acc.report(Scope::Overall).ok_or(EvalError::Empty)
}
