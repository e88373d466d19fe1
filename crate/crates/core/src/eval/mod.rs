//! Error metrics, the rolling backtest, stratified tables, daily bias
//! densities, significance testing and the weather substitution study.

mod backtest;
mod density;
mod error;
mod metrics;
pub mod persist;
mod substitution;
mod tables;
mod wilcoxon;

pub use backtest::{
    run_backtest, BacktestConfig, BacktestReport, EnsembleFold, FoldFailure, HourRecord,
    PlantSeries, SCHEMA_VERSION,
};
pub use density::{
    daily_nmbe, daily_nmbe_density, kernel_density, silverman_bandwidth, DensityEstimate,
    GRID_POINTS, MIN_DAYS,
};
pub use error::EvalError;
pub use metrics::{compute_metrics, MetricAccumulator, MetricReport, Scope};
pub use persist::MetricsDocument;
pub use substitution::{weather_substitution, SubstitutionModel, SubstitutionReport};
pub use tables::{
    compute_tables, csi_bucket, csi_bucket_label, csi_stratify, MetricTables, ModelTables,
    PlantWeighted, Schedule, CSI_BUCKETS,
};
pub use wilcoxon::{wilcoxon_signed_rank, SignificanceResult, TestMethod, EXACT_MAX_N, MIN_PAIRS};
