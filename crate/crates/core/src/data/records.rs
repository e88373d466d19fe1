use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::DataError;

pub type Timestamp = DateTime<Utc>;

/// Parses an ISO-8601 UTC hour-start timestamp such as `2015-11-09T13:00:00Z`.
pub fn parse_ts(s: &str) -> Result<Timestamp, String> {
    let dt = DateTime::parse_from_rfc3339(s.trim()).map_err(|e| format!("`{s}`: {e}"))?;
    if dt.offset().local_minus_utc() != 0 {
        return Err(format!("`{s}` is not a UTC timestamp"));
    }
    let dt = dt.with_timezone(&Utc);
    if dt.minute() != 0 || dt.second() != 0 || dt.nanosecond() != 0 {
        return Err(format!("`{s}` is not on an hour boundary"));
    }
    Ok(dt)
}

pub fn format_ts(ts: &Timestamp) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Static plant metadata as stored in `plants.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRow {
    pub plant_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub tilt: f64,
    pub surface_azimuth: f64,
    pub albedo: f64,
}

/// One row of `availability.csv`: `[start, end)` with a constant nominal power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityInterval {
    pub plant_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub nominal_kw: f64,
}

/// Piecewise-constant available nominal power.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NominalSchedule {
    intervals: Vec<(Timestamp, Timestamp, f64)>,
}

impl NominalSchedule {
    /// Builds a schedule, rejecting empty/overlapping intervals and
    /// non-positive power. Gaps are allowed here; hours that fall into one
    /// are rejected when power rows are checked against the schedule.
    pub fn new(
        plant_id: &str,
        mut intervals: Vec<(Timestamp, Timestamp, f64)>,
    ) -> Result<Self, DataError> {
        let err = |message: String| DataError::Schedule {
            plant_id: plant_id.to_string(),
            message,
        };
        intervals.sort_by_key(|iv| iv.0);
        for (start, end, kw) in &intervals {
            if end <= start {
                return Err(err(format!(
                    "empty interval [{}, {})",
                    format_ts(start),
                    format_ts(end)
                )));
            }
            if !(kw.is_finite() && *kw > 0.0) {
                return Err(err(format!("nominal power {kw} is not strictly positive")));
            }
        }
        for pair in intervals.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(err(format!(
                    "intervals starting at {} and {} overlap",
                    format_ts(&pair[0].0),
                    format_ts(&pair[1].0)
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn constant(start: Timestamp, end: Timestamp, nominal_kw: f64) -> Self {
        Self {
            intervals: vec![(start, end, nominal_kw)],
        }
    }

    pub fn nominal_at(&self, ts: &Timestamp) -> Option<f64> {
        let idx = self.intervals.partition_point(|iv| iv.0 <= *ts);
        let (_, end, kw) = self.intervals.get(idx.checked_sub(1)?)?;
        (ts < end).then_some(*kw)
    }

    pub fn intervals(&self) -> &[(Timestamp, Timestamp, f64)] {
        &self.intervals
    }

    /// Largest nominal power on the schedule (the plant's rated size).
    pub fn peak_kw(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.2).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord {
    pub plant_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Panel tilt from horizontal, degrees in `[0, 90]`.
    pub tilt: f64,
    /// Panel azimuth clockwise from North, degrees in `[0, 360)`.
    pub surface_azimuth: f64,
    pub albedo: f64,
    pub nominal_power_schedule: NominalSchedule,
}

impl PlantRecord {
    pub fn row(&self) -> PlantRow {
        PlantRow {
            plant_id: self.plant_id.clone(),
            name: self.name.clone(),
            latitude: self.latitude,
            longitude: self.longitude,
            tilt: self.tilt,
            surface_azimuth: self.surface_azimuth,
            albedo: self.albedo,
        }
    }

    pub fn surface(&self) -> crate::solar::Surface {
        crate::solar::Surface {
            tilt: self.tilt,
            azimuth: self.surface_azimuth,
            albedo: self.albedo,
        }
    }
}

/// Plants keyed by id, each with its availability schedule attached.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlantRegistry {
    plants: BTreeMap<String, PlantRecord>,
}

impl PlantRegistry {
    pub fn from_rows(
        rows: Vec<PlantRow>,
        availability: Vec<AvailabilityInterval>,
    ) -> Result<Self, DataError> {
        let mut by_plant: BTreeMap<String, Vec<(Timestamp, Timestamp, f64)>> = BTreeMap::new();
        for iv in availability {
            by_plant
                .entry(iv.plant_id)
                .or_default()
                .push((iv.start, iv.end, iv.nominal_kw));
        }
        let mut plants = BTreeMap::new();
        for row in rows {
            let intervals = by_plant.remove(&row.plant_id).unwrap_or_default();
            if intervals.is_empty() {
                return Err(DataError::Schedule {
                    plant_id: row.plant_id,
                    message: "no availability interval".into(),
                });
            }
            let schedule = NominalSchedule::new(&row.plant_id, intervals)?;
            let id = row.plant_id.clone();
            let record = PlantRecord {
                plant_id: row.plant_id,
                name: row.name,
                latitude: row.latitude,
                longitude: row.longitude,
                tilt: row.tilt,
                surface_azimuth: row.surface_azimuth,
                albedo: row.albedo,
                nominal_power_schedule: schedule,
            };
            if plants.insert(id.clone(), record).is_some() {
                return Err(DataError::Invalid(format!("duplicate plant_id `{id}`")));
            }
        }
        if let Some(orphan) = by_plant.keys().next() {
            return Err(DataError::Schedule {
                plant_id: orphan.clone(),
                message: "availability references an unknown plant".into(),
            });
        }
        Ok(Self { plants })
    }

    pub fn insert(&mut self, plant: PlantRecord) {
        self.plants.insert(plant.plant_id.clone(), plant);
    }

    pub fn get(&self, plant_id: &str) -> Option<&PlantRecord> {
        self.plants.get(plant_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PlantRecord> {
        self.plants.values()
    }

    pub fn len(&self) -> usize {
        self.plants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plants.is_empty()
    }

    pub fn availability(&self) -> Vec<AvailabilityInterval> {
        self.iter()
            .flat_map(|p| {
                p.nominal_power_schedule
                    .intervals()
                    .iter()
                    .map(|&(start, end, nominal_kw)| AvailabilityInterval {
                        plant_id: p.plant_id.clone(),
                        start,
                        end,
                        nominal_kw,
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherKind {
    Forecast,
    Measured,
}

impl fmt::Display for WeatherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeatherKind::Forecast => "forecast",
            WeatherKind::Measured => "measured",
        })
    }
}

impl FromStr for WeatherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "forecast" => Ok(WeatherKind::Forecast),
            "measured" => Ok(WeatherKind::Measured),
            other => Err(format!("unknown weather kind `{other}`")),
        }
    }
}

/// Horizontal irradiance components and temperature for one plant-hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub plant_id: String,
    pub timestamp: Timestamp,
    pub provider: String,
    pub kind: WeatherKind,
    pub ghi: f64,
    pub dhi: f64,
    pub bhi: f64,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub plant_id: String,
    pub timestamp: Timestamp,
    pub power: f64,
}

/// Model inputs for one hour: tilted-plane irradiance and sun angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub gti: f64,
    pub dti: f64,
    pub bti: f64,
    pub sun_azimuth: f64,
    pub sun_elevation: f64,
    pub temperature: Option<f64>,
}

impl Features {
    pub fn get(&self, kind: FeatureKind) -> Option<f64> {
        match kind {
            FeatureKind::Gti => Some(self.gti),
            FeatureKind::Dti => Some(self.dti),
            FeatureKind::Bti => Some(self.bti),
            FeatureKind::SunAzimuth => Some(self.sun_azimuth),
            FeatureKind::SunElevation => Some(self.sun_elevation),
            FeatureKind::Temperature => self.temperature,
        }
    }

    pub fn is_daytime(&self) -> bool {
        self.sun_elevation > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Gti,
    Dti,
    Bti,
    SunAzimuth,
    SunElevation,
    Temperature,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Gti => "gti",
            FeatureKind::Dti => "dti",
            FeatureKind::Bti => "bti",
            FeatureKind::SunAzimuth => "sun_azimuth",
            FeatureKind::SunElevation => "sun_elevation",
            FeatureKind::Temperature => "temperature",
        }
    }

    pub fn is_irradiance(self) -> bool {
        matches!(self, FeatureKind::Gti | FeatureKind::Dti | FeatureKind::Bti)
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "gti" => FeatureKind::Gti,
            "dti" => FeatureKind::Dti,
            "bti" => FeatureKind::Bti,
            "sun_azimuth" => FeatureKind::SunAzimuth,
            "sun_elevation" => FeatureKind::SunElevation,
            "temperature" => FeatureKind::Temperature,
            other => return Err(format!("unknown feature `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlySample {
    pub timestamp: Timestamp,
    pub features: Features,
    pub measured_power: f64,
    pub nominal_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ForecastDriven,
    MeasurementDriven,
}

/// Time-ordered samples for one plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    plant_id: String,
    provenance: Provenance,
    samples: Vec<HourlySample>,
}

impl SampleSet {
    pub fn new(
        plant_id: impl Into<String>,
        provenance: Provenance,
        samples: Vec<HourlySample>,
    ) -> Result<Self, DataError> {
        if let Some(i) = samples
            .windows(2)
            .position(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(DataError::Unsorted(i + 1));
        }
        Ok(Self {
            plant_id: plant_id.into(),
            provenance,
            samples,
        })
    }

    pub fn plant_id(&self) -> &str {
        &self.plant_id
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn samples(&self) -> &[HourlySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_ts(&self) -> Option<Timestamp> {
        self.samples.first().map(|s| s.timestamp)
    }

    pub fn last_ts(&self) -> Option<Timestamp> {
        self.samples.last().map(|s| s.timestamp)
    }

    /// Samples with `start <= timestamp < end`.
    pub fn window(&self, start: Timestamp, end: Timestamp) -> &[HourlySample] {
        let lo = self.samples.partition_point(|s| s.timestamp < start);
        let hi = self.samples.partition_point(|s| s.timestamp < end);
        &self.samples[lo..hi.max(lo)]
    }

    /// Samples strictly before `end`.
    pub fn before(&self, end: Timestamp) -> &[HourlySample] {
        let hi = self.samples.partition_point(|s| s.timestamp < end);
        &self.samples[..hi]
    }
}
