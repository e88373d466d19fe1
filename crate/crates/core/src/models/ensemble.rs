//! Stacked combination of member forecasts with least-squares weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelError, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsConfig {
    /// Trailing window, in weeks, of out-of-sample member forecasts the
    /// weights are fitted on.
    pub validation_weeks: i64,
    /// Members; empty means every other selected model.
    pub members: Vec<ModelKind>,
}

impl Default for EnsConfig {
    fn default() -> Self {
        Self {
            validation_weeks: 8,
            members: Vec::new(),
        }
    }
}

impl EnsConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.validation_weeks <= 0 {
            return Err(ModelError::InvalidConfig("ens.validation_weeks must be positive".into()));
        }
        if self.members.contains(&ModelKind::Ens) {
            return Err(ModelError::InvalidConfig("ens cannot be its own member".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    /// Minimum-norm least-squares weights.
    pub raw: Vec<f64>,
    /// `raw` rescaled to unit sum; used for prediction.
    pub normalized: Vec<f64>,
}

/// Minimum-norm least-squares weights of `predictions` (row-major
/// `hours × members`) against `targets`, via the pseudoinverse.
pub fn ens_fit(predictions: &[f64], members: usize, targets: &[f64]) -> Result<EnsembleWeights, ModelError> {
    let hours = targets.len();
    if members == 0 || predictions.len() != hours * members {
        return Err(ModelError::DimensionMismatch {
            expected: hours * members,
            got: predictions.len(),
        });
    }
    if hours < members + 1 {
        return Err(ModelError::InsufficientData {
            needed: members + 1,
            got: hours,
        });
    }
    if predictions.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("ensemble inputs"));
    }
    if predictions.iter().all(|&v| v == 0.0) {
        return Err(ModelError::AllZeroPredictions);
    }
    // Identical members share their group's weight evenly, which is the
    // minimum-norm split; solving on distinct columns keeps that split exact.
    let column = |j: usize| (0..hours).map(move |i| predictions[i * members + j]);
    let mut group_of = vec![0usize; members];
    let mut groups: Vec<usize> = Vec::new();
    for j in 0..members {
        match groups.iter().position(|&g| column(g).zip(column(j)).all(|(x, y)| x.to_bits() == y.to_bits())) {
            Some(k) => group_of[j] = k,
            None => {
                group_of[j] = groups.len();
                groups.push(j);
            }
        }
    }
    let distinct = groups.len();
    let w: Vec<f64> = if distinct == 1 {
        let (num, den) = column(groups[0])
            .zip(targets)
            .fold((0.0, 0.0), |(n, d), (x, y)| (n + x * y, d + x * x));
        vec![num / den]
    } else {
        let a = DMatrix::from_fn(hours, distinct, |i, k| predictions[i * members + groups[k]]);
        let b = DVector::from_column_slice(targets);
        let svd = a.svd(true, true);
        let tol = svd.singular_values.max() * (hours.max(distinct) as f64) * f64::EPSILON;
        svd.solve(&b, tol).map_err(|_| ModelError::RankDeficient)?.iter().copied().collect()
    };
    let sizes: Vec<usize> = (0..distinct).map(|k| group_of.iter().filter(|&&g| g == k).count()).collect();
    let raw: Vec<f64> = group_of.iter().map(|&k| w[k] / sizes[k] as f64).collect();
    let sum: f64 = raw.iter().sum();
    if !(sum.abs() > 1e-12) {
        return Err(ModelError::DegenerateWeights(sum));
    }
    let normalized = raw.iter().map(|w| w / sum).collect();
    Ok(EnsembleWeights { raw, normalized })
}

/// Dot product of member outputs with the normalised weights.
pub fn ens_predict(weights: &EnsembleWeights, outputs: &[f64]) -> Result<f64, ModelError> {
    if outputs.len() != weights.normalized.len() {
        return Err(ModelError::DimensionMismatch {
            expected: weights.normalized.len(),
            got: outputs.len(),
        });
    }
    Ok(weights.normalized.iter().zip(outputs).map(|(w, o)| w * o).sum())
}
