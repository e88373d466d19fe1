//! k-nearest-neighbour regression with Gaussian similarity weights
//! `w_i = exp(-d_i² / (σ²·d_1²))` relative to the closest neighbour.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{HourlySample, Timestamp};

use super::{
    daytime, full_features, FeatureSet, Forecaster, MinMaxScaler, ModelDescription, ModelError,
    ModelKind, ModelSnapshot,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub sigma: f64,
    pub features: FeatureSet,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 300,
            sigma: 4.0,
            features: full_features(),
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 {
            return Err(ModelError::InvalidConfig("knn.k must be at least 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(ModelError::InvalidConfig("knn.sigma must be positive".into()));
        }
        if self.features.is_empty() {
            return Err(ModelError::InvalidConfig("knn.features is empty".into()));
        }
        Ok(())
    }
}

/// Unnormalised similarity of a neighbour at distance `d` when the closest
/// one is at `d1 > 0`.
pub fn gaussian_weight(d: f64, d1: f64, sigma: f64) -> f64 {
    (-(d * d) / (sigma * sigma * d1 * d1)).exp()
}

/// Weighted kNN estimate over already-scaled row-major `points`.
///
/// Ties in distance are broken by training index. With a zero nearest
/// distance the result is the plain mean over every training point at zero
/// distance.
pub fn knn_predict(points: &[f64], targets: &[f64], dim: usize, query: &[f64], k: usize, sigma: f64) -> Result<f64, ModelError> {
    let n = targets.len();
    if n == 0 {
        return Err(ModelError::InsufficientData { needed: 1, got: 0 });
    }
    if query.len() != dim || points.len() != n * dim {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    let mut dist: Vec<(f64, usize)> = points
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, row)| {
            let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();

    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    let k = k.min(n);
    if k < n {
        dist.select_nth_unstable_by(k - 1, cmp);
        dist.truncate(k);
    }
    let d1_sq = dist.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);

    if d1_sq == 0.0 {
        let zeros: Vec<f64> = points
            .chunks_exact(dim)
            .zip(targets)
            .filter(|(row, _)| row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() == 0.0)
            .map(|(_, &t)| t)
            .collect();
        return Ok(zeros.iter().sum::<f64>() / zeros.len() as f64);
    }

    let denom = sigma * sigma * d1_sq;
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for &(d2, i) in &dist {
        let w = (-d2 / denom).exp();
        wsum += w;
        acc += w * targets[i];
    }
    Ok(acc / wsum)
}

/// Neighbour store over scaled daytime training samples; targets are raw kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub config: KnnConfig,
    scaler: Option<MinMaxScaler>,
    points: Vec<f64>,
    targets: Vec<f64>,
}

impl KnnModel {
    pub fn new(config: KnnConfig) -> Self {
        Self {
            config,
            scaler: None,
            points: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

impl Forecaster for KnnModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Knn
    }

    fn fit(&mut self, train: &[HourlySample], _now: Timestamp) -> Result<(), ModelError> {
        let rows = daytime(train);
        if rows.is_empty() {
            return Err(ModelError::InsufficientData { needed: 1, got: 0 });
        }
        let dim = self.config.features.len();
        let mut points = Vec::with_capacity(rows.len() * dim);
        for s in &rows {
            self.config.features.extract_into(&s.features, &mut points)?;
        }
        let scaler = MinMaxScaler::fit(&points, dim);
        scaler.transform_in_place(&mut points);
        self.targets = rows.iter().map(|s| s.measured_power).collect();
        self.points = points;
        self.scaler = Some(scaler);
        Ok(())
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        let scaler = self.scaler.as_ref().ok_or(ModelError::NotFitted)?;
        let query = scaler.transform(&self.config.features.extract(&sample.features)?);
        knn_predict(
            &self.points,
            &self.targets,
            scaler.dim(),
            &query,
            self.config.k,
            self.config.sigma,
        )
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Knn, &self.config)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Knn(self.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_at_twice_the_nearest_distance() {
        assert!((gaussian_weight(2.0, 1.0, 4.0) - (-0.25f64).exp()).abs() < 1e-15);
        assert!((gaussian_weight(2.0, 1.0, 4.0) - 0.778_800_783_071_404_9).abs() < 1e-12);
    }

    #[test]
    fn equidistant_neighbours_average_uniformly() {
        // four points on a unit circle around the query
        let pts = [1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let y = [1.0, 2.0, 3.0, 6.0];
        let p = knn_predict(&pts, &y, 2, &[0.0, 0.0], 4, 4.0).unwrap();
        assert!((p - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_match_returns_its_target() {
        let pts = [0.0, 0.0, 0.5, 0.5, 0.9, 0.9];
        let y = [100.0, 500.0, 900.0];
        assert_eq!(knn_predict(&pts, &y, 2, &[0.5, 0.5], 3, 4.0).unwrap(), 500.0);
    }

    #[test]
    fn empty_training_set() {
        assert!(knn_predict(&[], &[], 2, &[0.0, 0.0], 3, 4.0).is_err());
    }
}
