//! Rolling-origin backtest: weekly retraining per plant and model, with
//! out-of-sample stacking for the ensemble.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    hour, rolling_folds, DroppedHours, Fold, HourlySample, PlantInputs, SampleSet, Timestamp,
};
use crate::models::{
    clamp_at_elevation, ens_fit, AnyModel, ens_predict, Forecaster, ModelError, ModelKind, ModelsConfig,
};
use crate::seed;

use super::{compute_tables, csi_stratify, EvalError, MetricReport, MetricTables, Schedule};

/// Version of the persisted metrics document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub models: Vec<ModelKind>,
    pub models_config: ModelsConfig,
    pub initial_train_end: Timestamp,
    pub step_hours: i64,
    pub seed: u64,
}

impl BacktestConfig {
    /// Weekly steps, default hyperparameters, seed 0.
    pub fn new(models: Vec<ModelKind>, initial_train_end: Timestamp) -> Self {
        Self {
            models,
            models_config: ModelsConfig::default(),
            initial_train_end,
            step_hours: 168,
            seed: 0,
        }
    }

    /// Ensemble members: the configured list, or every other selected model.
    pub fn ens_members(&self) -> Vec<ModelKind> {
        if self.models_config.ens.members.is_empty() {
            self.models.iter().copied().filter(|&m| m != ModelKind::Ens).collect()
        } else {
            self.models_config.ens.members.clone()
        }
    }

    /// Selected models plus any ensemble member not selected explicitly.
    pub fn effective_models(&self) -> Vec<ModelKind> {
        let mut out: Vec<ModelKind> = Vec::new();
        for &m in &self.models {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.contains(&ModelKind::Ens) {
            for m in self.ens_members() {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.models.is_empty() {
            return Err(EvalError::Config("no models selected".into()));
        }
        if self.step_hours <= 0 {
            return Err(EvalError::Config("step_hours must be positive".into()));
        }
        self.models_config.validate()?;
        if self.models.contains(&ModelKind::Ens) {
            let members = self.ens_members();
            if members.len() < 2 {
                return Err(EvalError::Config(format!(
                    "ens needs at least two member models, got {}",
                    members.len()
                )));
            }
            if members.iter().collect::<BTreeSet<_>>().len() != members.len() {
                return Err(EvalError::Config("duplicate ens member".into()));
            }
        }
        Ok(())
    }
}

/// One plant's samples with the clear-sky index of each hour.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSeries {
    pub samples: SampleSet,
    pub csi: BTreeMap<Timestamp, f64>,
    pub dropped: DroppedHours,
}

impl PlantSeries {
    pub fn new(samples: SampleSet, csi: BTreeMap<Timestamp, f64>) -> Self {
        Self {
            samples,
            csi,
            dropped: DroppedHours::default(),
        }
    }

    pub fn plant_id(&self) -> &str {
        self.samples.plant_id()
    }

    pub fn forecast_driven(inputs: &PlantInputs) -> Self {
        Self {
            samples: inputs.forecast.clone(),
            csi: inputs.csi.clone(),
            dropped: inputs.dropped,
        }
    }

    /// `None` when the plant has no measured weather.
    pub fn measurement_driven(inputs: &PlantInputs) -> Option<Self> {
        Some(Self {
            samples: inputs.measured.clone()?,
            csi: inputs.csi.clone(),
            dropped: inputs.dropped,
        })
    }
}

/// One test hour of one model at one plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub timestamp: Timestamp,
    pub plant_id: String,
    pub model: ModelKind,
    /// `None` when the fold's fit or prediction failed.
    pub forecast: Option<f64>,
    pub measured: f64,
    pub nominal: f64,
    pub csi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub plant_id: String,
    pub model: ModelKind,
    pub fold: usize,
    pub error: String,
}

/// Ensemble weights fitted for one plant and fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFold {
    pub plant_id: String,
    pub fold: usize,
    pub members: Vec<ModelKind>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub validation_hours: usize,
    /// Squared residuals of the raw weights on the validation window.
    pub sse: f64,
    /// Each member's squared residuals on the same hours.
    pub member_sse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub schedule: Schedule,
    pub models: Vec<ModelKind>,
    pub plants: Vec<String>,
    pub hourly: Vec<HourRecord>,
    pub tables: MetricTables,
    pub ensemble: Vec<EnsembleFold>,
    pub failures: Vec<FoldFailure>,
    pub dropped: BTreeMap<String, DroppedHours>,
}

impl BacktestReport {
    pub fn overall(&self, model: ModelKind) -> Option<&MetricReport> {
        self.tables.get(model)?.hour_weighted.as_ref()
    }

    pub fn weekly_nmae(&self, model: ModelKind) -> Option<&[Option<f64>]> {
        self.tables.get(model).map(|t| t.weekly_nmae.as_slice())
    }

    pub fn csi_stratify(&self, model: ModelKind) -> Vec<MetricReport> {
        csi_stratify(&self.hourly, model)
    }

    pub fn records(&self, model: ModelKind) -> impl Iterator<Item = &HourRecord> {
        self.hourly.iter().filter(move |r| r.model == model)
    }

    /// Rebuilds the metric tables from the hourly records.
    pub fn recompute_tables(&self) -> MetricTables {
        compute_tables(&self.hourly, &self.models, &self.schedule)
    }
}

struct MemberRun {
    /// Clamped forecast per sample index; covers test hours and the
    /// ensemble warm-up window.
    preds: Vec<Option<f64>>,
    failures: Vec<FoldFailure>,
}

fn fit_predict(
    model: &mut dyn Forecaster,
    train: &[HourlySample],
    now: Timestamp,
    test: &[HourlySample],
) -> Result<Vec<f64>, ModelError> {
    model.fit(train, now)?;
    test.iter()
        .map(|s| {
            let raw = model.predict(s)?;
            Ok(clamp_at_elevation(raw, s.nominal_power, s.features.sun_elevation))
        })
        .collect()
}

fn index_of(samples: &[HourlySample], ts: Timestamp) -> usize {
    samples.partition_point(|s| s.timestamp < ts)
}

const WARMUP_STREAM: u64 = u64::MAX;

fn run_member(
    series: &PlantSeries,
    kind: ModelKind,
    config: &BacktestConfig,
    folds: &[Fold],
    warmup: Option<Duration>,
) -> Result<MemberRun, EvalError> {
    let samples = series.samples.samples();
    let plant = series.plant_id();
    let plant_stream = seed::hash_str(plant);
    let mut preds = vec![None; samples.len()];
    let mut failures = Vec::new();

    if let Some(window) = warmup {
        let start = config.initial_train_end - window;
        let (lo, hi) = (index_of(samples, start), index_of(samples, config.initial_train_end));
        if lo > 0 && hi > lo {
            let seed = seed::derive(config.seed, &[plant_stream, kind.stream_id(), WARMUP_STREAM]);
            let mut model = config.models_config.build(kind, seed)?;
            match fit_predict(&mut model, &samples[..lo], start, &samples[lo..hi]) {
                Ok(p) => {
                    for (slot, v) in preds[lo..hi].iter_mut().zip(p) {
                        *slot = Some(v);
                    }
                }
                Err(e) => log::warn!("{plant}/{kind}: ensemble warm-up fit failed: {e}"),
            }
        }
    }

    let mut previous: Option<AnyModel> = None;
    for fold in folds {
        let (lo, hi) = (index_of(samples, fold.train_end), index_of(samples, fold.test_end));
        if lo == hi {
            continue;
        }
        let train = &samples[..lo];
        assert!(
            train.last().map_or(true, |s| s.timestamp < fold.test_start()),
            "training sample inside the test window"
        );
        let seed = seed::derive(config.seed, &[plant_stream, kind.stream_id(), fold.index as u64]);
        let mut model = config.models_config.build(kind, seed)?;
        if let Some(p) = &previous {
            model.inherit(p);
        }
        match fit_predict(&mut model, train, fold.train_end, &samples[lo..hi]) {
            Ok(p) => {
                for (slot, v) in preds[lo..hi].iter_mut().zip(p) {
                    *slot = Some(v);
                }
                previous = Some(model);
            }
            Err(e) => {
                log::warn!("{plant}/{kind}: fold {} failed: {e}", fold.index);
                failures.push(FoldFailure {
                    plant_id: plant.to_string(),
                    model: kind,
                    fold: fold.index,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(MemberRun { preds, failures })
}

struct EnsembleRun {
    preds: Vec<Option<f64>>,
    weights: Vec<EnsembleFold>,
    failures: Vec<FoldFailure>,
}

fn run_ensemble(
    series: &PlantSeries,
    members: &[(ModelKind, &MemberRun)],
    folds: &[Fold],
    window: Duration,
) -> EnsembleRun {
    let samples = series.samples.samples();
    let plant = series.plant_id();
    let m = members.len();
    let row = |i: usize| -> Option<Vec<f64>> { members.iter().map(|(_, r)| r.preds[i]).collect() };
    let mut preds = vec![None; samples.len()];
    let mut weights = Vec::new();
    let mut failures = Vec::new();
    for fold in folds {
        let (lo, hi) = (index_of(samples, fold.train_end), index_of(samples, fold.test_end));
        if lo == hi {
            continue;
        }
        let vlo = index_of(samples, fold.train_end - window);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in vlo..lo {
            if let Some(r) = row(i) {
                x.extend_from_slice(&r);
                y.push(samples[i].measured_power);
            }
        }
        let w = match ens_fit(&x, m, &y) {
            Ok(w) => w,
            Err(e) => {
                log::warn!("{plant}/ens: fold {} failed: {e}", fold.index);
                failures.push(FoldFailure {
                    plant_id: plant.to_string(),
                    model: ModelKind::Ens,
                    fold: fold.index,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let mut sse = 0.0;
        let mut member_sse = vec![0.0; m];
        for (r, t) in x.chunks_exact(m).zip(&y) {
            let fit: f64 = r.iter().zip(&w.raw).map(|(p, w)| p * w).sum();
            sse += (fit - t).powi(2);
            for (acc, p) in member_sse.iter_mut().zip(r) {
                *acc += (p - t).powi(2);
            }
        }
        for i in lo..hi {
            if let Some(r) = row(i) {
                let s = &samples[i];
                let raw = ens_predict(&w, &r).expect("member count matches");
                preds[i] = Some(clamp_at_elevation(raw, s.nominal_power, s.features.sun_elevation));
            }
        }
        weights.push(EnsembleFold {
            plant_id: plant.to_string(),
            fold: fold.index,
            members: members.iter().map(|(k, _)| *k).collect(),
            raw: w.raw,
            normalized: w.normalized,
            validation_hours: y.len(),
            sse,
            member_sse,
        });
    }
    EnsembleRun {
        preds,
        weights,
        failures,
    }
}

/// Runs every selected model over the rolling schedule for every plant.
/// Folds span the whole fleet; a plant without hours in a fold skips it.
pub fn run_backtest(series: &[PlantSeries], config: &BacktestConfig) -> Result<BacktestReport, EvalError> {
    config.validate()?;
    if series.is_empty() {
        return Err(EvalError::Config("no plants".into()));
    }
    let mut ids = BTreeSet::new();
    for s in series {
        if !ids.insert(s.plant_id()) {
            return Err(EvalError::Config(format!("plant `{}` given twice", s.plant_id())));
        }
    }
    let start = series.iter().filter_map(|s| s.samples.first_ts()).min().ok_or(EvalError::Empty)?;
    let end = series.iter().filter_map(|s| s.samples.last_ts()).max().ok_or(EvalError::Empty)? + hour();
    let folds = rolling_folds(start, end, config.initial_train_end, Duration::hours(config.step_hours))?;

    let models = config.effective_models();
    let with_ens = models.contains(&ModelKind::Ens);
    let members = if with_ens { config.ens_members() } else { Vec::new() };
    let window = Duration::weeks(config.models_config.ens.validation_weeks);

    let jobs: Vec<(usize, ModelKind)> = (0..series.len())
        .flat_map(|p| models.iter().filter(|&&m| m != ModelKind::Ens).map(move |&m| (p, m)))
        .collect();
    let runs: Vec<MemberRun> = jobs
        .par_iter()
        .map(|&(p, m)| {
            let warmup = members.contains(&m).then_some(window);
            run_member(&series[p], m, config, &folds, warmup)
        })
        .collect::<Result<_, _>>()?;
    let mut by_job: BTreeMap<(usize, ModelKind), MemberRun> = jobs.into_iter().zip(runs).collect();

    let mut ensemble = Vec::new();
    let mut failures = Vec::new();
    if with_ens {
        let ens_runs: Vec<EnsembleRun> = (0..series.len())
            .into_par_iter()
            .map(|p| {
                let inputs: Vec<(ModelKind, &MemberRun)> =
                    members.iter().map(|&m| (m, &by_job[&(p, m)])).collect();
                run_ensemble(&series[p], &inputs, &folds, window)
            })
            .collect();
        for (p, run) in ens_runs.into_iter().enumerate() {
            ensemble.extend(run.weights);
            by_job.insert(
                (p, ModelKind::Ens),
                MemberRun {
                    preds: run.preds,
                    failures: run.failures,
                },
            );
        }
    }

    let mut hourly = Vec::new();
    for (p, s) in series.iter().enumerate() {
        let samples = s.samples.samples();
        let first_test = index_of(samples, config.initial_train_end);
        for &m in &models {
            let run = &by_job[&(p, m)];
            failures.extend(run.failures.iter().cloned());
            for (sample, pred) in samples[first_test..].iter().zip(&run.preds[first_test..]) {
                hourly.push(HourRecord {
                    timestamp: sample.timestamp,
                    plant_id: s.plant_id().to_string(),
                    model: m,
                    forecast: *pred,
                    measured: sample.measured_power,
                    nominal: sample.nominal_power,
                    csi: s.csi.get(&sample.timestamp).copied(),
                });
            }
        }
    }
    let schedule = Schedule {
        initial_train_end: config.initial_train_end,
        step_hours: config.step_hours,
        folds,
    };
    let tables = compute_tables(&hourly, &models, &schedule);
    Ok(BacktestReport {
        schedule,
        models,
        plants: series.iter().map(|s| s.plant_id().to_string()).collect(),
        hourly,
        tables,
        ensemble,
        failures,
        dropped: series.iter().map(|s| (s.plant_id().to_string(), s.dropped)).collect(),
    })
}
