//! Plant, weather and power data: records, ingestion, provider blending,
//! alignment into hourly samples and rolling train/test splits.
//!
//! All timestamps are UTC hour starts. Local time only appears inside the
//! solar geometry.

mod align;
mod blend;
mod error;
pub mod io;
mod prepare;
mod records;
mod split;

pub use align::{align, AlignOutput};
pub use blend::{blend_providers, Blend};
pub use error::DataError;
pub use io::{load_csv, Dataset, Records, Schema};
pub use prepare::{prepare_plants, DroppedHours, PlantInputs, PrepareOptions};
pub use records::{
    format_ts, parse_ts, AvailabilityInterval, FeatureKind, Features, HourlySample,
    NominalSchedule, PlantRecord, PlantRegistry, PlantRow, PowerRecord, Provenance, SampleSet,
    Timestamp, WeatherKind, WeatherRecord,
};
pub use split::{rolling_folds, split_rolling, Fold};

/// One hour, the native resolution of every series.
pub fn hour() -> chrono::Duration {
    chrono::Duration::hours(1)
}

/// One week, the default retraining step.
pub fn week() -> chrono::Duration {
    chrono::Duration::weeks(1)
}
