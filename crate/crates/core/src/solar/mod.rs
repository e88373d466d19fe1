//! Solar geometry and irradiance: sun position, clear-sky GHI, Perez
//! transposition onto the panel plane and the clear-sky index.

mod clearsky;
mod perez;
mod position;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::Timestamp;

pub use clearsky::{clear_sky_ghi, extraterrestrial_normal};
pub use perez::{
    clearness_bin, cos_incidence, perez_sky_diffuse, perez_transpose, perez_transpose_with,
    relative_air_mass, CLEARNESS_EDGES, ELEVATION_FLOOR_DEG, F1, F2,
};
pub use position::{days_since_j2000, hourly_sun_position, sun_position};

/// Solar constant in W/m².
pub const SOLAR_CONSTANT: f64 = 1367.0;

/// Clear-sky GHI below which the clear-sky index is undefined (W/m²).
pub const CSI_NIGHT_THRESHOLD: f64 = 5.0;

/// Upper cap of the clear-sky index.
pub const CSI_CAP: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPosition {
    /// Degrees clockwise from North in `[0, 360)`.
    pub azimuth: f64,
    /// Degrees above the horizon in `[-90, 90]`.
    pub elevation: f64,
}

/// Panel orientation and ground reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub tilt: f64,
    pub azimuth: f64,
    pub albedo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HorizontalIrradiance {
    pub ghi: f64,
    pub dhi: f64,
    pub bhi: f64,
}

impl HorizontalIrradiance {
    pub fn new(ghi: f64, dhi: f64, bhi: f64) -> Self {
        Self { ghi, dhi, bhi }
    }
}

/// Irradiance components on the panel plane, W/m².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TiltedIrradiance {
    pub gti: f64,
    pub dti: f64,
    pub bti: f64,
    pub ground_reflected: f64,
}

/// Measured over clear-sky GHI, capped at [`CSI_CAP`]. `None` when the
/// clear-sky value is below [`CSI_NIGHT_THRESHOLD`].
pub fn clear_sky_index(measured_ghi: f64, clear_ghi: f64) -> Option<f64> {
    if !(clear_ghi >= CSI_NIGHT_THRESHOLD) {
        return None;
    }
    Some((measured_ghi.max(0.0) / clear_ghi).min(CSI_CAP))
}

/// Source of the per-hour geometry and plane-of-array irradiance used to
/// build model features.
pub trait Transposition: Sync {
    fn sun(&self, hour_start: &Timestamp, latitude: f64, longitude: f64) -> SunPosition;

    fn transpose(
        &self,
        hour_start: &Timestamp,
        h: HorizontalIrradiance,
        sun: &SunPosition,
        surface: &Surface,
    ) -> TiltedIrradiance;
}

/// Sun at mid-hour from the low-precision ephemeris and Perez transposition
/// with day-of-year extraterrestrial irradiance.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerezTransposition;

impl Transposition for PerezTransposition {
    fn sun(&self, hour_start: &Timestamp, latitude: f64, longitude: f64) -> SunPosition {
        hourly_sun_position(hour_start, latitude, longitude)
    }

    fn transpose(
        &self,
        hour_start: &Timestamp,
        h: HorizontalIrradiance,
        sun: &SunPosition,
        surface: &Surface,
    ) -> TiltedIrradiance {
        let dni_extra = extraterrestrial_normal(hour_start.ordinal());
        perez_transpose_with(h, sun, surface, dni_extra)
    }
}
