use std::collections::BTreeMap;

use crate::solar::{HorizontalIrradiance, Transposition};

use super::records::{
    format_ts, Features, HourlySample, PlantRecord, PowerRecord, Provenance, SampleSet, Timestamp,
    WeatherRecord,
};
use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutput {
    pub samples: SampleSet,
    /// Weather hours without a matching power record.
    pub dropped_weather_only: usize,
    /// Power hours without matching weather, or outside the nominal schedule.
    pub dropped_power_only: usize,
}

impl AlignOutput {
    pub fn dropped(&self) -> usize {
        self.dropped_weather_only + self.dropped_power_only
    }
}

/// Joins one weather series with the power series of `plant` on common
/// hours, computing sun angles and plane-of-array irradiance for each.
///
/// Input order does not matter; duplicate hours in either series are an
/// error.
pub fn align(
    weather: &[WeatherRecord],
    power: &[PowerRecord],
    plant: &PlantRecord,
    solar: &dyn Transposition,
    provenance: Provenance,
) -> Result<AlignOutput, DataError> {
    let dup = |series, ts: &Timestamp| DataError::Duplicate {
        plant_id: plant.plant_id.clone(),
        series,
        timestamp: format_ts(ts),
    };
    let mut w: BTreeMap<Timestamp, &WeatherRecord> = BTreeMap::new();
    for r in weather {
        if w.insert(r.timestamp, r).is_some() {
            return Err(dup("weather", &r.timestamp));
        }
    }
    let mut p: BTreeMap<Timestamp, f64> = BTreeMap::new();
    for r in power {
        if p.insert(r.timestamp, r.power).is_some() {
            return Err(dup("power", &r.timestamp));
        }
    }

    let surface = plant.surface();
    let mut samples = Vec::new();
    let mut dropped_power_only = 0;
    for (ts, &measured_power) in &p {
        let Some(rec) = w.get(ts) else {
            dropped_power_only += 1;
            continue;
        };
        let Some(nominal_power) = plant.nominal_power_schedule.nominal_at(ts) else {
            dropped_power_only += 1;
            continue;
        };
        let sun = solar.sun(ts, plant.latitude, plant.longitude);
        let tilted = solar.transpose(
            ts,
            HorizontalIrradiance::new(rec.ghi, rec.dhi, rec.bhi),
            &sun,
            &surface,
        );
        samples.push(HourlySample {
            timestamp: *ts,
            features: Features {
                gti: tilted.gti,
                dti: tilted.dti,
                bti: tilted.bti,
                sun_azimuth: sun.azimuth,
                sun_elevation: sun.elevation,
                temperature: rec.temperature,
            },
            measured_power,
            nominal_power,
        });
    }
    if samples.is_empty() {
        return Err(DataError::NoCommonHours(plant.plant_id.clone()));
    }
    let matched = samples.len();
    Ok(AlignOutput {
        samples: SampleSet::new(plant.plant_id.clone(), provenance, samples)?,
        dropped_weather_only: w.len() - matched.min(w.len()),
        dropped_power_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::records::{NominalSchedule, WeatherKind};
    use crate::solar::PerezTransposition;
    use chrono::{Duration, TimeZone, Utc};

    fn plant(tilt: f64) -> PlantRecord {
        let t0 = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
        PlantRecord {
            plant_id: "p".into(),
            name: String::new(),
            latitude: 43.7,
            longitude: 10.4,
            tilt,
            surface_azimuth: 180.0,
            albedo: 0.2,
            nominal_power_schedule: NominalSchedule::constant(t0, t0 + Duration::days(365), 1000.0),
        }
    }

    fn day(hours: std::ops::Range<i64>) -> (Vec<WeatherRecord>, Vec<PowerRecord>) {
        let t0 = Utc.with_ymd_and_hms(2015, 6, 1, 0, 0, 0).unwrap();
        let w = (0..24)
            .map(|h| WeatherRecord {
                plant_id: "p".into(),
                timestamp: t0 + Duration::hours(h),
                provider: "x".into(),
                kind: WeatherKind::Measured,
                ghi: 500.0,
                dhi: 200.0,
                bhi: 300.0,
                temperature: None,
            })
            .collect();
        let p = hours
            .map(|h| PowerRecord {
                plant_id: "p".into(),
                timestamp: t0 + Duration::hours(h),
                power: 100.0,
            })
            .collect();
        (w, p)
    }

    #[test]
    fn full_and_partial_overlap() {
        let (w, p) = day(0..24);
        let out = align(&w, &p, &plant(30.0), &PerezTransposition, Provenance::ForecastDriven).unwrap();
        assert_eq!(out.samples.len(), 24);
        assert_eq!(out.dropped(), 0);

        let (w, p) = day(6..18);
        let out = align(&w, &p, &plant(30.0), &PerezTransposition, Provenance::ForecastDriven).unwrap();
        assert_eq!(out.samples.len(), 12);
        assert_eq!(out.dropped_weather_only, 12);
        assert_eq!(out.dropped(), 12);
    }

    #[test]
    fn horizontal_plant_sees_ghi() {
        let (w, p) = day(0..24);
        let out = align(&w, &p, &plant(0.0), &PerezTransposition, Provenance::ForecastDriven).unwrap();
        for s in out.samples.samples() {
            if s.features.sun_elevation > 0.0 {
                assert!((s.features.gti - 500.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn order_independent_and_idempotent() {
        let (mut w, mut p) = day(0..24);
        let a = align(&w, &p, &plant(30.0), &PerezTransposition, Provenance::ForecastDriven).unwrap();
        w.reverse();
        p.swap(3, 17);
        let b = align(&w, &p, &plant(30.0), &PerezTransposition, Provenance::ForecastDriven).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_common_hours_is_an_error() {
        let (w, _) = day(0..24);
        assert!(matches!(
            align(&w, &[], &plant(30.0), &PerezTransposition, Provenance::ForecastDriven),
            Err(DataError::NoCommonHours(_))
        ));
    }
}
