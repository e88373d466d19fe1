//! Forecasting methods behind the [`Forecaster`] trait.
//!
//! Every model is fitted per plant on hourly samples and predicts raw power
//! in kW; [`clamp_forecast`] turns raw output into a physical forecast.

mod baseline;
mod ensemble;
mod error;
mod gb;
mod knn;
mod nn;
mod qrf;
mod scaling;
mod svr;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, HourlySample, Timestamp};
use crate::solar::SunPosition;

pub use baseline::{OracleModel, ZeroModel};
pub use ensemble::{ens_fit, ens_predict, EnsConfig, EnsembleWeights};
pub use error::ModelError;
pub use gb::{gb_fit, gb_predict, GbConfig, GbModel};
pub use knn::{gaussian_weight, knn_predict, KnnConfig, KnnModel};
pub use nn::{
    evidence_objective, network_output, NnConfig, NnModel, NnParams, NN_PARAM_COUNT,
};
pub use qrf::{grow_tree, weighted_quantile, Node, QrfConfig, QrfModel, Tree};
pub use scaling::{FeatureSet, MinMaxScaler};
pub use svr::{kkt_residual, rbf, solve_nu_svr, solve_nu_svr_from, DualStart, SvrConfig, SvrModel, SvrSolution};

/// Uniform fit/predict capability over the forecasting methods.
pub trait Forecaster: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Fits on `train`, all of which lies strictly before `now`.
    fn fit(&mut self, train: &[HourlySample], now: Timestamp) -> Result<(), ModelError>;

    /// Raw (unclamped) power forecast in kW for one hour.
    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError>;

    fn describe(&self) -> ModelDescription;

    fn snapshot(&self) -> ModelSnapshot;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gb,
    Nn,
    Knn,
    Qrf,
    Svr,
    Ens,
    /// Returns the measured power; a zero-error reference.
    Oracle,
    /// Always forecasts zero.
    Zero,
}

impl ModelKind {
    /// The six forecasting methods in reporting order.
    pub const METHODS: [ModelKind; 6] = [
        ModelKind::Gb,
        ModelKind::Nn,
        ModelKind::Knn,
        ModelKind::Qrf,
        ModelKind::Svr,
        ModelKind::Ens,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gb => "gb",
            ModelKind::Nn => "nn",
            ModelKind::Knn => "knn",
            ModelKind::Qrf => "qrf",
            ModelKind::Svr => "svr",
            ModelKind::Ens => "ens",
            ModelKind::Oracle => "oracle",
            ModelKind::Zero => "zero",
        }
    }

    /// Stable numeric id used when deriving RNG streams.
    pub fn stream_id(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "gb" => ModelKind::Gb,
            "nn" => ModelKind::Nn,
            "knn" => ModelKind::Knn,
            "qrf" => ModelKind::Qrf,
            "svr" => ModelKind::Svr,
            "ens" => ModelKind::Ens,
            "oracle" => ModelKind::Oracle,
            "zero" => ModelKind::Zero,
            other => return Err(ModelError::UnknownModel(other.to_string())),
        })
    }
}

/// Name and hyperparameters of a configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub name: String,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl ModelDescription {
    fn new(kind: ModelKind, config: &impl Serialize) -> Self {
        let params = match serde_json::to_value(config) {
            Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        Self {
            name: kind.name().to_string(),
            params,
        }
    }
}

/// Hyperparameters for every model, with the published defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub gb: GbConfig,
    pub nn: NnConfig,
    pub knn: KnnConfig,
    pub qrf: QrfConfig,
    pub svr: SvrConfig,
    pub ens: EnsConfig,
}

impl ModelsConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.gb.validate()?;
        self.nn.validate()?;
        self.knn.validate()?;
        self.qrf.validate()?;
        self.svr.validate()?;
        self.ens.validate()
    }

    /// A fresh, unfitted model. `seed` drives stochastic learners.
    pub fn build(&self, kind: ModelKind, seed: u64) -> Result<AnyModel, ModelError> {
        Ok(match kind {
            ModelKind::Gb => AnyModel::Gb(GbModel::new(self.gb.clone())),
            ModelKind::Nn => AnyModel::Nn(NnModel::new(self.nn.clone(), seed)),
            ModelKind::Knn => AnyModel::Knn(KnnModel::new(self.knn.clone())),
            ModelKind::Qrf => AnyModel::Qrf(QrfModel::new(self.qrf.clone(), seed)),
            ModelKind::Svr => AnyModel::Svr(SvrModel::new(self.svr.clone())),
            ModelKind::Oracle => AnyModel::Oracle(OracleModel),
            ModelKind::Zero => AnyModel::Zero(ZeroModel),
            ModelKind::Ens => return Err(ModelError::NotStandalone(kind)),
        })
    }
}

/// Any single (non-ensemble) model; serialisable for snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnyModel {
    Gb(GbModel),
    Nn(NnModel),
    Knn(KnnModel),
    Qrf(QrfModel),
    Svr(SvrModel),
    Oracle(OracleModel),
    Zero(ZeroModel),
}

impl AnyModel {
    fn inner(&self) -> &dyn Forecaster {
        match self {
            AnyModel::Gb(m) => m,
            AnyModel::Nn(m) => m,
            AnyModel::Knn(m) => m,
            AnyModel::Qrf(m) => m,
            AnyModel::Svr(m) => m,
            AnyModel::Oracle(m) => m,
            AnyModel::Zero(m) => m,
        }
    }

    /// Carries the previous fold's solution of the same model over as a
    /// warm start (SVR and neural network).
    pub fn inherit(&mut self, previous: &AnyModel) {
        match (self, previous) {
            (AnyModel::Svr(m), AnyModel::Svr(p)) => m.warm_start_from(p),
            (AnyModel::Nn(m), AnyModel::Nn(p)) => m.warm_start_from(p),
            _ => {}
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Forecaster {
        match self {
            AnyModel::Gb(m) => m,
            AnyModel::Nn(m) => m,
            AnyModel::Knn(m) => m,
            AnyModel::Qrf(m) => m,
            AnyModel::Svr(m) => m,
            AnyModel::Oracle(m) => m,
            AnyModel::Zero(m) => m,
        }
    }
}

impl Forecaster for AnyModel {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn fit(&mut self, train: &[HourlySample], now: Timestamp) -> Result<(), ModelError> {
        self.inner_mut().fit(train, now)
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        self.inner().predict(sample)
    }

    fn describe(&self) -> ModelDescription {
        self.inner().describe()
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: self.clone(),
        }
    }
}

/// Versioned, serialisable state of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub version: u32,
    pub model: AnyModel,
}

impl ModelSnapshot {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Snapshot(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let snap: Self = serde_json::from_str(s).map_err(|e| ModelError::Snapshot(e.to_string()))?;
        if snap.version != Self::VERSION {
            return Err(ModelError::Snapshot(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        Ok(snap)
    }
}

/// Physical post-processing: zero at night, otherwise clipped to
/// `[0, nominal]`. Non-finite raw values become zero.
pub fn clamp_forecast(raw: f64, nominal: f64, sun: &SunPosition) -> f64 {
    clamp_at_elevation(raw, nominal, sun.elevation)
}

pub fn clamp_at_elevation(raw: f64, nominal: f64, sun_elevation: f64) -> f64 {
    if sun_elevation <= 0.0 || !raw.is_finite() {
        return 0.0;
    }
    raw.clamp(0.0, nominal)
}

/// Training samples with the sun above the horizon.
pub(crate) fn daytime(train: &[HourlySample]) -> Vec<&HourlySample> {
    train.iter().filter(|s| s.features.is_daytime()).collect()
}

/// Default inputs of the grey-box and neural models.
pub fn gti_features() -> FeatureSet {
    FeatureSet::new(vec![FeatureKind::Gti])
}

/// Default inputs of kNN, QRF and SVR.
pub fn full_features() -> FeatureSet {
    FeatureSet::new(vec![
        FeatureKind::Gti,
        FeatureKind::Dti,
        FeatureKind::Bti,
        FeatureKind::SunAzimuth,
        FeatureKind::SunElevation,
    ])
}
