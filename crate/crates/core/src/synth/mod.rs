//! Synthetic fleets: a known quadratic power model driven by clear-sky
//! irradiance modulated by an AR(1) clear-sky index, with measured weather,
//! erroneous weather forecasts and measured power.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    hour, AvailabilityInterval, DataError, Dataset, PlantRegistry, PlantRow, PowerRecord,
    Timestamp, WeatherKind, WeatherRecord,
};
use crate::seed;
use crate::solar::{clear_sky_ghi, HorizontalIrradiance, PerezTransposition, Surface, Transposition};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A plant and its true power coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthPlant {
    pub plant_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub tilt: f64,
    pub surface_azimuth: f64,
    #[serde(default = "default_albedo")]
    pub albedo: f64,
    pub nominal_kw: f64,
    /// Linear coefficient of the true power curve; positive.
    pub c1: f64,
    /// Quadratic coefficient; negative.
    pub c2: f64,
}

fn default_albedo() -> f64 {
    0.2
}

/// AR(1) clear-sky index: a latent state `z_t = μ + ρ(z_{t-1} − μ) + σ·e_t`
/// started at `μ`, reported clipped to `[floor, ceiling]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudProcess {
    pub mean: f64,
    pub rho: f64,
    pub innovation_sd: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for CloudProcess {
    fn default() -> Self {
        Self {
            mean: 0.65,
            rho: 0.9,
            innovation_sd: 0.12,
            floor: 0.05,
            ceiling: 1.0,
        }
    }
}

/// Ambient temperature: a seasonal and a diurnal cosine plus white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Climate {
    /// Annual mean, °C.
    pub mean: f64,
    pub seasonal_amplitude: f64,
    pub diurnal_amplitude: f64,
    /// Day of year of the seasonal minimum.
    pub coldest_day: f64,
    /// Local solar hour of the diurnal minimum.
    pub coldest_hour: f64,
    pub noise_sd: f64,
}

impl Default for Climate {
    fn default() -> Self {
        Self {
            mean: 15.0,
            seasonal_amplitude: 8.0,
            diurnal_amplitude: 5.0,
            coldest_day: -10.0,
            coldest_hour: 3.0,
            noise_sd: 1.0,
        }
    }
}

impl Climate {
    /// Temperature at `ts` for a site at `longitude`, given a standard
    /// normal draw.
    pub fn at(&self, ts: &Timestamp, longitude: f64, noise: f64) -> f64 {
        let doy = ts.ordinal() as f64;
        let solar_hour = ts.hour() as f64 + 0.5 + longitude / 15.0;
        self.mean - self.seasonal_amplitude * (2.0 * PI * (doy - self.coldest_day) / 365.0).cos()
            - self.diurnal_amplitude * (2.0 * PI * (solar_hour - self.coldest_hour) / 24.0).cos()
            + self.noise_sd * noise
    }
}

/// Error of one forecast provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastError {
    pub provider: String,
    /// Relative bias of forecast GHI.
    pub bias: f64,
    /// Relative sd of the multiplicative GHI error.
    pub sd: f64,
    /// Weight of the shared per-day component, in `[0, 1)`.
    pub day_correlation: f64,
    /// Additive clear-sky-index error, scaled by the true cloudiness
    /// `1 − CSI` so overcast hours are forecast worse than clear ones.
    pub cloud_error_sd: f64,
    /// Additive sd of forecast temperature, °C.
    pub temperature_sd: f64,
}

impl Default for ForecastError {
    fn default() -> Self {
        Self {
            provider: "nwp".into(),
            bias: 0.0,
            sd: 0.15,
            day_correlation: 0.5,
            cloud_error_sd: 0.3,
            temperature_sd: 1.0,
        }
    }
}

impl ForecastError {
    /// No error at all: the forecast reproduces the measured weather.
    pub fn exact(provider: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            bias: 0.0,
            sd: 0.0,
            day_correlation: 0.0,
            cloud_error_sd: 0.0,
            temperature_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: Timestamp,
    /// Exclusive.
    pub end: Timestamp,
    /// Explicit plants; when empty, `n_plants` plants are drawn from the seed.
    pub plants: Vec<SynthPlant>,
    pub n_plants: usize,
    /// Relative power loss per °C above 25 °C.
    pub derate: f64,
    pub cloud: CloudProcess,
    pub climate: Climate,
    pub forecasts: Vec<ForecastError>,
    /// Sd of additive daytime power noise, relative to nominal power.
    pub measurement_noise_sd: f64,
    pub measured_provider: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start: Timestamp::from_naive_utc_and_offset(
                NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
                chrono::Utc,
            ),
            end: Timestamp::from_naive_utc_and_offset(
                NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
                chrono::Utc,
            ),
            plants: Vec::new(),
            n_plants: 4,
            derate: 0.004,
            cloud: CloudProcess::default(),
            climate: Climate::default(),
            forecasts: vec![ForecastError::default()],
            measurement_noise_sd: 0.01,
            measured_provider: "satellite".into(),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::Invalid(msg.to_string()))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        check(self.end - self.start >= Duration::weeks(8), "horizon must span at least 8 weeks")?;
        check(
            self.start.minute() == 0 && self.start.second() == 0 && self.end.minute() == 0 && self.end.second() == 0,
            "horizon bounds must be whole hours",
        )?;
        check(!self.plants.is_empty() || self.n_plants > 0, "no plants")?;
        check(self.derate >= 0.0, "derate must be non-negative")?;
        check(
            self.climate.seasonal_amplitude >= 0.0 && self.climate.diurnal_amplitude >= 0.0 && self.climate.noise_sd >= 0.0,
            "climate amplitudes and noise must be non-negative",
        )?;
        check(self.measurement_noise_sd >= 0.0, "measurement_noise_sd must be non-negative")?;
        let c = &self.cloud;
        check((0.0..1.0).contains(&c.rho), "cloud.rho must lie in [0, 1)")?;
        check(c.innovation_sd >= 0.0, "cloud.innovation_sd must be non-negative")?;
        check(
            0.0 <= c.floor && c.floor < c.ceiling && c.ceiling <= crate::solar::CSI_CAP,
            "cloud bounds must satisfy 0 <= floor < ceiling <= 1.5",
        )?;
        check(!self.forecasts.is_empty(), "at least one forecast provider is needed")?;
        for f in &self.forecasts {
            check(!f.provider.is_empty() && f.provider != self.measured_provider, "forecast provider names must be non-empty and differ from the measured provider")?;
            check(f.sd >= 0.0 && f.cloud_error_sd >= 0.0 && f.temperature_sd >= 0.0, "forecast sds must be non-negative")?;
            check((0.0..1.0).contains(&f.day_correlation), "day_correlation must lie in [0, 1)")?;
            check(f.bias > -1.0, "forecast bias must exceed -1")?;
        }
        let mut names: Vec<&str> = self.forecasts.iter().map(|f| f.provider.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        check(names.len() == self.forecasts.len(), "duplicate forecast provider")?;
        for p in &self.plants {
            check(p.c1 > 0.0 && p.c2 < 0.0, "plant coefficients need c1 > 0 and c2 < 0")?;
            check(p.nominal_kw > 0.0, "nominal_kw must be positive")?;
            check((-90.0..=90.0).contains(&p.latitude) && (-180.0..=180.0).contains(&p.longitude), "plant location out of range")?;
            check((0.0..=90.0).contains(&p.tilt) && (0.0..360.0).contains(&p.surface_azimuth), "plant orientation out of range")?;
            check((0.0..=1.0).contains(&p.albedo), "albedo must lie in [0, 1]")?;
        }
        Ok(())
    }

    /// The explicit plants, or `n_plants` drawn deterministically from the seed.
    pub fn resolved_plants(&self) -> Vec<SynthPlant> {
        if !self.plants.is_empty() {
            return self.plants.clone();
        }
        let mut rng = seed::rng(self.seed, &[seed::hash_str("plants")]);
        (0..self.n_plants)
            .map(|i| {
                let round = |v: f64, step: f64| (v / step).round() * step;
                SynthPlant {
                    plant_id: format!("plant{:02}", i + 1),
                    latitude: round(rng.gen_range(37.0..46.0), 0.01),
                    longitude: round(rng.gen_range(8.0..16.0), 0.01),
                    tilt: round(rng.gen_range(15.0..35.0), 1.0),
                    surface_azimuth: round(rng.gen_range(160.0..200.0), 1.0),
                    albedo: 0.2,
                    nominal_kw: round(rng.gen_range(200.0..1000.0), 10.0),
                    c1: round(rng.gen_range(0.78..0.88), 0.001),
                    c2: round(rng.gen_range(-0.08..-0.03), 0.001),
                }
            })
            .collect()
    }
}

/// Diffuse fraction of GHI: `clamp(1 − 0.75·CSI, 0.15, 1)`.
pub fn diffuse_fraction(csi: f64) -> f64 {
    (1.0 - 0.75 * csi).clamp(0.15, 1.0)
}

/// Day-correlated standard normal draws: `√ρ·z_day + √(1−ρ)·e_h`, with one
/// `z_day` per UTC date.
fn correlated_normals(timestamps: &[Timestamp], day_correlation: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (wd, wh) = (day_correlation.sqrt(), (1.0 - day_correlation).sqrt());
    let mut day = None;
    let mut z_day = 0.0;
    timestamps
        .iter()
        .map(|ts| {
            let d = ts.date_naive();
            if day != Some(d) {
                day = Some(d);
                z_day = rng.sample(StandardNormal);
            }
            let e: f64 = rng.sample(StandardNormal);
            wd * z_day + wh * e
        })
        .collect()
}

/// Multiplies each hour by `(1 + bias)·exp(sd·ε − sd²/2)`, with `ε` a
/// day-correlated standard normal, and floors the result at zero.
pub fn inject_forecast_error(
    timestamps: &[Timestamp],
    truth: &[f64],
    bias: f64,
    sd: f64,
    day_correlation: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = seed::rng(seed, &[]);
    let eps = correlated_normals(timestamps, day_correlation, &mut rng);
    truth
        .iter()
        .zip(eps)
        .map(|(v, e)| (v * error_factor(bias, sd, e)).max(0.0))
        .collect()
}

fn error_factor(bias: f64, sd: f64, e: f64) -> f64 {
    (1.0 + bias) * (sd * e - sd * sd / 2.0).exp()
}

/// AR(1) clear-sky index series of `n` hours.
pub fn cloud_series(cloud: &CloudProcess, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z = cloud.mean;
    (0..n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            z = cloud.mean + cloud.rho * (z - cloud.mean) + cloud.innovation_sd * e;
            z.clamp(cloud.floor, cloud.ceiling)
        })
        .collect()
}

struct PlantData {
    plant: SynthPlant,
    weather: Vec<WeatherRecord>,
    power: Vec<PowerRecord>,
}

fn generate_plant(cfg: &SynthConfig, plant: &SynthPlant, hours: &[Timestamp]) -> PlantData {
    let solar = PerezTransposition;
    let stream = seed::hash_str(&plant.plant_id);
    let mut cloud_rng = seed::rng(cfg.seed, &[stream, seed::hash_str("cloud")]);
    let mut temp_rng = seed::rng(cfg.seed, &[stream, seed::hash_str("temperature")]);
    let mut noise_rng = seed::rng(cfg.seed, &[stream, seed::hash_str("power")]);
    let surface = Surface {
        tilt: plant.tilt,
        azimuth: plant.surface_azimuth,
        albedo: plant.albedo,
    };

    let csi = cloud_series(&cfg.cloud, hours.len(), &mut cloud_rng);
    let suns: Vec<_> = hours.iter().map(|ts| solar.sun(ts, plant.latitude, plant.longitude)).collect();
    let clear: Vec<f64> = suns.iter().map(clear_sky_ghi).collect();
    let temps: Vec<f64> = hours
        .iter()
        .map(|ts| cfg.climate.at(ts, plant.longitude, temp_rng.sample::<f64, _>(StandardNormal)))
        .collect();

    let horizontal = |ghi: f64, kd: f64| {
        let dhi = ghi * kd;
        HorizontalIrradiance::new(ghi, dhi, ghi - dhi)
    };
    let record = |i: usize, provider: &str, kind, h: HorizontalIrradiance, t: f64| WeatherRecord {
        plant_id: plant.plant_id.clone(),
        timestamp: hours[i],
        provider: provider.to_string(),
        kind,
        ghi: h.ghi,
        dhi: h.dhi,
        bhi: h.bhi,
        temperature: Some(t),
    };

    let mut weather = Vec::with_capacity(hours.len() * (1 + cfg.forecasts.len()));
    let mut power = Vec::with_capacity(hours.len());
    for i in 0..hours.len() {
        let h = horizontal(clear[i] * csi[i], diffuse_fraction(csi[i]));
        weather.push(record(i, &cfg.measured_provider, WeatherKind::Measured, h, temps[i]));
        let noise: f64 = noise_rng.sample(StandardNormal);
        let p = if suns[i].elevation <= 0.0 {
            0.0
        } else {
            let g = solar.transpose(&hours[i], h, &suns[i], &surface).gti / 1000.0;
            let loss = 1.0 - cfg.derate * (temps[i] - 25.0).max(0.0);
            let raw = plant.nominal_kw * (plant.c1 * g + plant.c2 * g * g) * loss
                + plant.nominal_kw * cfg.measurement_noise_sd * noise;
            raw.clamp(0.0, plant.nominal_kw)
        };
        power.push(PowerRecord {
            plant_id: plant.plant_id.clone(),
            timestamp: hours[i],
            power: p,
        });
    }

    for f in &cfg.forecasts {
        let pstream = seed::hash_str(&f.provider);
        let mut rng = seed::rng(cfg.seed, &[stream, pstream, seed::hash_str("cloud")]);
        let cloud_eps = correlated_normals(hours, f.day_correlation, &mut rng);
        let mut rng = seed::rng(cfg.seed, &[stream, pstream, seed::hash_str("ghi")]);
        let ghi_eps = correlated_normals(hours, f.day_correlation, &mut rng);
        let mut rng = seed::rng(cfg.seed, &[stream, pstream, seed::hash_str("temperature")]);
        for i in 0..hours.len() {
            let csi_f = (csi[i] + f.cloud_error_sd * (1.0 - csi[i]) * cloud_eps[i])
                .clamp(cfg.cloud.floor, cfg.cloud.ceiling);
            let m = error_factor(f.bias, f.sd, ghi_eps[i]);
            let ghi = (clear[i] * csi_f * m).max(0.0);
            let h = horizontal(ghi, diffuse_fraction(csi_f * m));
            let dt: f64 = rng.sample(StandardNormal);
            weather.push(record(i, &f.provider, WeatherKind::Forecast, h, temps[i] + f.temperature_sd * dt));
        }
    }
    PlantData {
        plant: plant.clone(),
        weather,
        power,
    }
}

/// Generates a complete dataset for the configured fleet. Plants are
/// generated in parallel, each from its own derived seed.
pub fn generate_fleet(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let plants = cfg.resolved_plants();
    let mut hours = Vec::new();
    let mut ts = cfg.start;
    while ts < cfg.end {
        hours.push(ts);
        ts += hour();
    }
    let data: Vec<PlantData> = plants
        .par_iter()
        .map(|p| generate_plant(cfg, p, &hours))
        .collect();

    let rows = data
        .iter()
        .map(|d| PlantRow {
            plant_id: d.plant.plant_id.clone(),
            name: d.plant.plant_id.clone(),
            latitude: d.plant.latitude,
            longitude: d.plant.longitude,
            tilt: d.plant.tilt,
            surface_azimuth: d.plant.surface_azimuth,
            albedo: d.plant.albedo,
        })
        .collect();
    let availability = data
        .iter()
        .map(|d| AvailabilityInterval {
            plant_id: d.plant.plant_id.clone(),
            start: cfg.start,
            end: cfg.end,
            nominal_kw: d.plant.nominal_kw,
        })
        .collect();
    let registry = PlantRegistry::from_rows(rows, availability)?;
    let mut weather = Vec::new();
    let mut power = Vec::new();
    for d in data {
        weather.extend(d.weather);
        power.extend(d.power);
    }
    Ok(Dataset {
        registry,
        weather,
        power,
    })
}
