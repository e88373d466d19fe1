use serde::{Deserialize, Serialize};

use crate::data::{HourlySample, Timestamp};

use super::{Forecaster, ModelDescription, ModelError, ModelKind, ModelSnapshot};

/// Forecasts the measured power itself. Useful as a zero-error reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleModel;

/// Always forecasts zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroModel;

impl Forecaster for OracleModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Oracle
    }

    fn fit(&mut self, _train: &[HourlySample], _now: Timestamp) -> Result<(), ModelError> {
        Ok(())
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        Ok(sample.measured_power)
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Oracle, &())
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Oracle(*self),
        }
    }
}

impl Forecaster for ZeroModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Zero
    }

    fn fit(&mut self, _train: &[HourlySample], _now: Timestamp) -> Result<(), ModelError> {
        Ok(())
    }

    fn predict(&self, _sample: &HourlySample) -> Result<f64, ModelError> {
        Ok(0.0)
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Zero, &())
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Zero(*self),
        }
    }
}
