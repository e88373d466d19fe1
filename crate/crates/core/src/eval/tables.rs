//! Metric tables derived from per-hour records: by month, plant, CSI bucket
//! and rolling week.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::{Fold, Timestamp};
use crate::models::ModelKind;

use super::{HourRecord, MetricAccumulator, MetricReport, Scope};

/// Upper edges of the clear-sky-index buckets: `≤ 0.1`, then width-0.1 bins
/// to 1.0. Values above 1 fall in the top bucket.
pub const CSI_BUCKETS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub fn csi_bucket(csi: f64) -> usize {
    CSI_BUCKETS[..9].iter().filter(|&&edge| edge < csi).count()
}

pub fn csi_bucket_label(bucket: usize) -> String {
    if bucket == 0 {
        "<=0.1".to_string()
    } else {
        format!("({:.1},{:.1}]", CSI_BUCKETS[bucket - 1], CSI_BUCKETS[bucket])
    }
}

/// The rolling schedule a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub initial_train_end: Timestamp,
    pub step_hours: i64,
    pub folds: Vec<Fold>,
}

impl Schedule {
    /// Index of the fold whose test window holds `ts`.
    pub fn fold_of(&self, ts: &Timestamp) -> Option<usize> {
        let i = self.folds.partition_point(|f| f.test_end <= *ts);
        self.folds.get(i).filter(|f| f.contains_test(ts)).map(|f| f.index)
    }
}

/// Unweighted mean of per-plant metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantWeighted {
    pub nmae: f64,
    pub nrmse: f64,
    pub mae: f64,
    pub nmbe: f64,
    pub plants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTables {
    pub model: ModelKind,
    /// Pooled over every forecast hour of every plant.
    pub hour_weighted: Option<MetricReport>,
    pub plant_weighted: Option<PlantWeighted>,
    /// Populated months only.
    pub by_month: Vec<MetricReport>,
    pub by_plant: Vec<MetricReport>,
    /// Populated buckets only; hours with undefined CSI are excluded.
    pub by_csi: Vec<MetricReport>,
    /// Fleet nMAE per fold; `None` when every hour of the fold is missing.
    pub weekly_nmae: Vec<Option<f64>>,
    /// Test hours without a forecast.
    pub missing_hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTables {
    pub models: Vec<ModelTables>,
}

impl MetricTables {
    pub fn get(&self, model: ModelKind) -> Option<&ModelTables> {
        self.models.iter().find(|t| t.model == model)
    }
}

#[derive(Default)]
struct Sums {
    overall: MetricAccumulator,
    month: BTreeMap<u32, MetricAccumulator>,
    plant: BTreeMap<String, MetricAccumulator>,
    plant_order: Vec<String>,
    csi: BTreeMap<usize, MetricAccumulator>,
    week: Vec<MetricAccumulator>,
    missing: usize,
}

/// Builds every table from per-hour records alone.
pub fn compute_tables(records: &[HourRecord], models: &[ModelKind], schedule: &Schedule) -> MetricTables {
    let mut sums: BTreeMap<ModelKind, Sums> = models.iter().map(|&m| (m, Sums::default())).collect();
    for s in sums.values_mut() {
        s.week = vec![MetricAccumulator::new(); schedule.folds.len()];
    }
    for r in records {
        let Some(s) = sums.get_mut(&r.model) else {
            continue;
        };
        if !s.plant.contains_key(&r.plant_id) {
            s.plant_order.push(r.plant_id.clone());
            s.plant.insert(r.plant_id.clone(), MetricAccumulator::new());
        }
        let Some(f) = r.forecast else {
            s.missing += 1;
            continue;
        };
        let push = |acc: &mut MetricAccumulator| acc.push(f, r.measured, r.nominal);
        push(&mut s.overall);
        push(s.month.entry(r.timestamp.month()).or_default());
        push(s.plant.get_mut(&r.plant_id).expect("inserted above"));
        if let Some(c) = r.csi {
            push(s.csi.entry(csi_bucket(c)).or_default());
        }
        if let Some(w) = schedule.fold_of(&r.timestamp) {
            push(&mut s.week[w]);
        }
    }
    let models = models
        .iter()
        .map(|&m| {
            let s = &sums[&m];
            let by_plant: Vec<MetricReport> = s
                .plant_order
                .iter()
                .filter_map(|p| s.plant[p].report(Scope::Plant(p.clone())))
                .collect();
            let plant_weighted = (!by_plant.is_empty()).then(|| {
                let k = by_plant.len() as f64;
                let mean = |f: fn(&MetricReport) -> f64| by_plant.iter().map(f).sum::<f64>() / k;
                PlantWeighted {
                    nmae: mean(|r| r.nmae),
                    nrmse: mean(|r| r.nrmse),
                    mae: mean(|r| r.mae),
                    nmbe: mean(|r| r.nmbe),
                    plants: by_plant.len(),
                }
            });
            ModelTables {
                model: m,
                hour_weighted: s.overall.report(Scope::Overall),
                plant_weighted,
                by_month: s.month.iter().filter_map(|(&k, a)| a.report(Scope::Month(k))).collect(),
                by_plant,
                by_csi: s.csi.iter().filter_map(|(&k, a)| a.report(Scope::CsiBucket(k))).collect(),
                weekly_nmae: s.week.iter().map(|a| a.report(Scope::Overall).map(|r| r.nmae)).collect(),
                missing_hours: s.missing,
            }
        })
        .collect();
    MetricTables { models }
}

/// Per-bucket metrics of one model over hours with a defined CSI.
pub fn csi_stratify(records: &[HourRecord], model: ModelKind) -> Vec<MetricReport> {
    let mut buckets: BTreeMap<usize, MetricAccumulator> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model == model) {
        if let (Some(f), Some(c)) = (r.forecast, r.csi) {
            buckets.entry(csi_bucket(c)).or_default().push(f, r.measured, r.nominal);
        }
    }
    buckets
        .into_iter()
        .filter_map(|(k, a)| a.report(Scope::CsiBucket(k)))
        .collect()
}
