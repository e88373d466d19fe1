use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },

    #[error("{path}: line {line}, column `{column}`: {message}")]
    Field {
        path: String,
        line: u64,
        column: &'static str,
        message: String,
    },

    #[error("{path}: line {line}: unknown plant_id `{plant_id}`")]
    UnknownPlant {
        path: String,
        line: u64,
        plant_id: String,
    },

    #[error("{path}: line {line}: no nominal power defined for plant `{plant_id}` at {timestamp}")]
    NoNominalPower {
        path: String,
        line: u64,
        plant_id: String,
        timestamp: String,
    },

    #[error("{path}: line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },

    #[error("plant `{plant_id}`: {message}")]
    Schedule { plant_id: String, message: String },

    #[error("provider series have no common hour with each other and the reference")]
    EmptyOverlap,

    #[error("reference series covers {hours} common hours, at least one week (168) is required")]
    ShortReference { hours: usize },

    #[error("plant `{0}`: weather and power share no common hour")]
    NoCommonHours(String),

    #[error("plant `{plant_id}`: duplicate {series} timestamp {timestamp}")]
    Duplicate {
        plant_id: String,
        series: &'static str,
        timestamp: String,
    },

    #[error("samples are not strictly increasing in time at index {0}")]
    Unsorted(usize),

    #[error("initial training end {0} is not strictly inside the sample range")]
    TrainEndOutOfRange(String),

    #[error("step of {step_hours} h exceeds the remaining test span of {remaining_hours} h")]
    StepTooLarge {
        step_hours: i64,
        remaining_hours: i64,
    },

    #[error("invalid input: {0}")]
    Invalid(String),
}
