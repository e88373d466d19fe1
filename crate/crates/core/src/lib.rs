//! Day-ahead hourly photovoltaic power forecasting.
//!
//! The crate is organised around the forecasting pipeline:
//!
//! * [`data`]: plant, weather and power records, CSV ingestion, forecast
//!   provider blending, sample alignment and rolling train/test folds.
//! * [`solar`]: sun position, clear-sky irradiance, Perez transposition to
//!   the panel plane and the clear-sky index.
//! * [`models`]: the grey-box quadratic model, a small Bayesian-regularised
//!   neural network, Gaussian-weighted kNN, quantile regression forest,
//!   ν-SVR and the stacked ensemble, all behind [`models::Forecaster`].
//! * [`eval`]: error metrics, the weekly-retraining backtest engine,
//!   clear-sky-index stratification, daily bias densities, the Wilcoxon
//!   signed-rank test and the measured-vs-forecast weather substitution study.
//! * [`synth`]: synthetic fleets with a known power model and controllable
//!   weather forecast error.

pub mod data;
pub mod eval;
pub mod models;
pub mod seed;
pub mod solar;
pub mod synth;

pub use data::{
    DataError, Dataset, Features, HourlySample, PlantRecord, PowerRecord, Provenance, SampleSet,
    Timestamp, WeatherKind, WeatherRecord,
};
pub use eval::{BacktestConfig, BacktestReport, EvalError, MetricReport};
pub use models::{Forecaster, ModelError, ModelKind};
pub use solar::{SunPosition, TiltedIrradiance};
pub use synth::{generate_fleet, SynthConfig};
