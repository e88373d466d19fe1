use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, Features};

use super::ModelError;

/// Ordered list of model inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(Vec<FeatureKind>);

impl FeatureSet {
    pub fn new(kinds: Vec<FeatureKind>) -> Self {
        Self(kinds)
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn extract_into(&self, f: &Features, out: &mut Vec<f64>) -> Result<(), ModelError> {
        for &k in &self.0 {
            let v = f.get(k).ok_or(ModelError::MissingFeature(k.name()))?;
            if !v.is_finite() {
                return Err(ModelError::NonFinite(k.name()));
            }
            out.push(v);
        }
        Ok(())
    }

    pub fn extract(&self, f: &Features) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(self.0.len());
        self.extract_into(f, &mut out)?;
        Ok(out)
    }
}

/// Per-feature affine map of the training range onto `[0, 1]`.
///
/// Values outside the training range map outside `[0, 1]`; a feature with
/// zero range maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Bounds over row-major data with `dim` columns.
    pub fn fit(data: &[f64], dim: usize) -> Self {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in data.chunks_exact(dim) {
            for j in 0..dim {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            (v - self.min[j]) / range
        } else {
            0.0
        }
    }

    pub fn transform_in_place(&self, data: &mut [f64]) {
        let dim = self.dim();
        for row in data.chunks_exact_mut(dim) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.scale(j, *v);
            }
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect()
    }
}
