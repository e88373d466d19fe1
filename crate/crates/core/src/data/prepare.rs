use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::solar::{clear_sky_ghi, clear_sky_index, Transposition};

use super::align::align;
use super::blend::blend_providers;
use super::io::Dataset;
use super::records::{
    PlantRecord, PowerRecord, Provenance, SampleSet, Timestamp, WeatherKind, WeatherRecord,
};
use super::DataError;

/// How weather series are selected when turning a dataset into samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    /// Forecast providers to use; one is used as is, two are blended. Empty
    /// means every forecast provider present for the plant.
    #[serde(default)]
    pub forecast_providers: Vec<String>,
    /// Measured provider; `None` accepts the only one present.
    #[serde(default)]
    pub measured_provider: Option<String>,
    /// End of the blend calibration window, normally the initial training end.
    #[serde(default)]
    pub calibration_end: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedHours {
    pub weather_only: usize,
    pub power_only: usize,
}

/// Everything the backtest needs for one plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantInputs {
    pub plant: PlantRecord,
    /// Samples built from (possibly blended) forecast weather.
    pub forecast: SampleSet,
    /// Samples built from measured weather, when present.
    pub measured: Option<SampleSet>,
    /// Clear-sky index per hour, from measured GHI; absent hours are undefined.
    pub csi: BTreeMap<Timestamp, f64>,
    pub blend_alpha: Option<f64>,
    pub dropped: DroppedHours,
}

impl PlantInputs {
    pub fn csi_at(&self, ts: &Timestamp) -> Option<f64> {
        self.csi.get(ts).copied()
    }
}

fn forecast_series<'m>(
    series: &'m BTreeMap<(WeatherKind, String), Vec<WeatherRecord>>,
    plant_id: &str,
    name: &str,
) -> Result<&'m Vec<WeatherRecord>, DataError> {
    series
        .get(&(WeatherKind::Forecast, name.to_string()))
        .ok_or_else(|| DataError::Invalid(format!("plant `{plant_id}`: no forecast weather from `{name}`")))
}

/// Selects, blends and aligns weather and power for every plant.
pub fn prepare_plants(
    dataset: &Dataset,
    opts: &PrepareOptions,
    solar: &dyn Transposition,
) -> Result<Vec<PlantInputs>, DataError> {
    let mut weather: BTreeMap<&str, BTreeMap<(WeatherKind, String), Vec<WeatherRecord>>> =
        BTreeMap::new();
    for r in &dataset.weather {
        weather
            .entry(r.plant_id.as_str())
            .or_default()
            .entry((r.kind, r.provider.clone()))
            .or_default()
            .push(r.clone());
    }
    let mut power: BTreeMap<&str, Vec<PowerRecord>> = BTreeMap::new();
    for r in &dataset.power {
        power.entry(r.plant_id.as_str()).or_default().push(r.clone());
    }

    let mut out = Vec::with_capacity(dataset.registry.len());
    for plant in dataset.registry.iter() {
        let id = plant.plant_id.as_str();
        let series = weather.remove(id).unwrap_or_default();
        let plant_power = power.remove(id).unwrap_or_default();

        let measured_names: Vec<&str> = series
            .keys()
            .filter(|(k, _)| *k == WeatherKind::Measured)
            .map(|(_, p)| p.as_str())
            .collect();
        let measured_series = match &opts.measured_provider {
            Some(name) => Some(series.get(&(WeatherKind::Measured, name.clone())).ok_or_else(
                || DataError::Invalid(format!("plant `{id}`: no measured weather from `{name}`")),
            )?),
            None if measured_names.len() == 1 => series.get(&(WeatherKind::Measured, measured_names[0].to_string())),
            None if measured_names.is_empty() => None,
            None => {
                return Err(DataError::Invalid(format!(
                    "plant `{id}`: several measured providers ({}), choose one",
                    measured_names.join(", ")
                )))
            }
        };

        let forecast_names: Vec<String> = if opts.forecast_providers.is_empty() {
            series
                .keys()
                .filter(|(k, _)| *k == WeatherKind::Forecast)
                .map(|(_, p)| p.to_string())
                .collect()
        } else {
            opts.forecast_providers.clone()
        };
        let pick = |name: &str| forecast_series(&series, id, name);
        let (forecast_weather, blend_alpha) = match forecast_names.as_slice() {
            [] => {
                return Err(DataError::Invalid(format!(
                    "plant `{id}`: no forecast weather"
                )))
            }
            [one] => (pick(one)?.clone(), None),
            [a, b] => {
                let reference = measured_series.ok_or_else(|| {
                    DataError::Invalid(format!(
                        "plant `{id}`: blending two forecast providers needs a measured reference"
                    ))
                })?;
                let blend = blend_providers(pick(a)?, pick(b)?, reference, opts.calibration_end)?;
                (blend.records, Some(blend.alpha))
            }
            more => {
                return Err(DataError::Invalid(format!(
                    "plant `{id}`: {} forecast providers, at most two can be blended",
                    more.len()
                )))
            }
        };

        let aligned = align(
            &forecast_weather,
            &plant_power,
            plant,
            solar,
            Provenance::ForecastDriven,
        )?;
        let measured = measured_series
            .map(|m| align(m, &plant_power, plant, solar, Provenance::MeasurementDriven))
            .transpose()?;

        let hours: BTreeSet<Timestamp> =
            aligned.samples.samples().iter().map(|s| s.timestamp).collect();
        let csi = measured_series
            .map(|m| {
                m.iter()
                    .filter(|r| hours.contains(&r.timestamp))
                    .filter_map(|r| {
                        let sun = solar.sun(&r.timestamp, plant.latitude, plant.longitude);
                        clear_sky_index(r.ghi, clear_sky_ghi(&sun)).map(|c| (r.timestamp, c))
                    })
                    .collect()
            })
            .unwrap_or_default();

        out.push(PlantInputs {
            plant: plant.clone(),
            forecast: aligned.samples,
            measured: measured.map(|m| m.samples),
            csi,
            blend_alpha,
            dropped: DroppedHours {
                weather_only: aligned.dropped_weather_only,
                power_only: aligned.dropped_power_only,
            },
        });
    }
    Ok(out)
}
