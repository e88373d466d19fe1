//! Grey-box quadratic irradiance-to-power model, `p = c1·g + c2·g²` with
//! `g = GTI / 1000` and `p = P / P_n`, refitted on a trailing window.

use chrono::Duration;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{HourlySample, Timestamp};

use super::{daytime, Forecaster, ModelDescription, ModelError, ModelKind, ModelSnapshot};

/// Relative singular-value threshold below which the design is rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbConfig {
    /// Length of the trailing fit window in weeks.
    pub window_weeks: i64,
    /// Minimum number of daytime samples inside the window.
    pub min_daytime_samples: usize,
}

impl Default for GbConfig {
    fn default() -> Self {
        Self {
            window_weeks: 4,
            min_daytime_samples: 24,
        }
    }
}

impl GbConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.window_weeks <= 0 {
            return Err(ModelError::InvalidConfig("gb.window_weeks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbModel {
    pub config: GbConfig,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    fitted: bool,
}

impl GbModel {
    pub fn new(config: GbConfig) -> Self {
        Self {
            config,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            fitted: false,
        }
    }

    pub fn with_coefficients(c1: f64, c2: f64) -> Self {
        Self {
            config: GbConfig::default(),
            c1,
            c2,
            c3: 0.0,
            fitted: true,
        }
    }
}

/// Least-squares fit of `(c1, c2)` on daytime samples in
/// `[now - window, now)`.
pub fn gb_fit(train: &[HourlySample], now: Timestamp, config: &GbConfig) -> Result<GbModel, ModelError> {
    let start = now - Duration::weeks(config.window_weeks);
    let rows: Vec<&HourlySample> = daytime(train)
        .into_iter()
        .filter(|s| s.timestamp >= start && s.timestamp < now)
        .collect();

    let n = rows.len();
    if n < 2 {
        return Err(ModelError::InsufficientData {
            needed: config.min_daytime_samples.max(2),
            got: n,
        });
    }
    let design = DMatrix::from_fn(n, 2, |i, j| {
        let g = rows[i].features.gti / 1000.0;
        if j == 0 {
            g
        } else {
            g * g
        }
    });
    let target = DVector::from_fn(n, |i, _| rows[i].measured_power / rows[i].nominal_power);

    let svd = design.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if n < 2 || !(s_max > 0.0) || s_min <= RANK_TOL * s_max {
        return Err(ModelError::RankDeficient);
    }
    if n < config.min_daytime_samples {
        return Err(ModelError::InsufficientData {
            needed: config.min_daytime_samples,
            got: n,
        });
    }
    let coef = svd
        .solve(&target, RANK_TOL * s_max)
        .map_err(|_| ModelError::RankDeficient)?;
    let (c1, c2) = (coef[0], coef[1]);
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(ModelError::NonFinite("grey-box coefficients"));
    }
    Ok(GbModel {
        config: config.clone(),
        c1,
        c2,
        c3: 0.0,
        fitted: true,
    })
}

/// `nominal · (c1·g + c2·g²)` with `g = gti / 1000`, before clamping.
pub fn gb_predict(model: &GbModel, gti: f64, nominal: f64) -> f64 {
    let g = gti / 1000.0;
    nominal * (model.c1 * g + model.c2 * g * g)
}

impl Forecaster for GbModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Gb
    }

    fn fit(&mut self, train: &[HourlySample], now: Timestamp) -> Result<(), ModelError> {
        *self = gb_fit(train, now, &self.config)?;
        Ok(())
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        if !self.fitted {
            return Err(ModelError::NotFitted);
        }
        Ok(gb_predict(self, sample.features.gti, sample.nominal_power))
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Gb, &self.config)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Gb(self.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_arithmetic() {
        let m = GbModel::with_coefficients(0.9, -0.1);
        assert_eq!(gb_predict(&m, 0.0, 1000.0), 0.0);
        assert!((gb_predict(&m, 1000.0, 1000.0) - 800.0).abs() < 1e-9);
        let m = GbModel::with_coefficients(1.0, -0.5);
        assert!((gb_predict(&m, 500.0, 2000.0) - 750.0).abs() < 1e-9);
    }
}
