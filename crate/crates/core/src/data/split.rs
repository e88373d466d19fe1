use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::records::{format_ts, SampleSet, Timestamp};
use super::{hour, DataError};

/// One rolling-origin fold: train on `[train_start, train_end)`, test on
/// `[train_end, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train_start: Timestamp,
    pub train_end: Timestamp,
    pub test_end: Timestamp,
}

impl Fold {
    pub fn test_start(&self) -> Timestamp {
        self.train_end
    }

    pub fn contains_test(&self, ts: &Timestamp) -> bool {
        self.train_end <= *ts && *ts < self.test_end
    }
}

/// Folds over the span `[start, end)`. Fold `i` trains on
/// `[start, initial_train_end + i·step)` and tests on the following step; the
/// last test window is truncated at `end`.
pub fn rolling_folds(
    start: Timestamp,
    end: Timestamp,
    initial_train_end: Timestamp,
    step: Duration,
) -> Result<Vec<Fold>, DataError> {
    if step <= Duration::zero() {
        return Err(DataError::Invalid("rolling step must be positive".into()));
    }
    if !(start < initial_train_end && initial_train_end < end) {
        return Err(DataError::TrainEndOutOfRange(format_ts(&initial_train_end)));
    }
    let remaining = end - initial_train_end;
    if remaining < step {
        return Err(DataError::StepTooLarge {
            step_hours: step.num_hours(),
            remaining_hours: remaining.num_hours(),
        });
    }
    let mut folds = Vec::new();
    let mut train_end = initial_train_end;
    while train_end < end {
        let test_end = (train_end + step).min(end);
        folds.push(Fold {
            index: folds.len(),
            train_start: start,
            train_end,
            test_end,
        });
        train_end = test_end;
    }
    Ok(folds)
}

/// Rolling folds over the hours covered by `samples`: from the first sample
/// to one hour past the last. `initial_train_end` must be after the first
/// sample and before the last.
pub fn split_rolling(
    samples: &SampleSet,
    initial_train_end: Timestamp,
    step: Duration,
) -> Result<Vec<Fold>, DataError> {
    let (Some(first), Some(last)) = (samples.first_ts(), samples.last_ts()) else {
        return Err(DataError::Invalid("empty sample set".into()));
    };
    if initial_train_end >= last {
        return Err(DataError::TrainEndOutOfRange(format_ts(&initial_train_end)));
    }
    rolling_folds(first, last + hour(), initial_train_end, step)
}
