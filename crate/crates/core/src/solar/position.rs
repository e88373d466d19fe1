//! Low-precision solar ephemeris (Astronomical Almanac series), accurate to
//! roughly 0.01° in declination and well under 0.5° in elevation for
//! 1950–2050.

use chrono::{Duration, Timelike};

use crate::data::Timestamp;

use super::SunPosition;

const J2000_UNIX_SECONDS: f64 = 946_728_000.0;

/// Days since 2000-01-01T12:00 UT (J2000.0).
pub fn days_since_j2000(ts: &Timestamp) -> f64 {
    let secs = ts.timestamp() as f64 + f64::from(ts.nanosecond()) * 1e-9;
    (secs - J2000_UNIX_SECONDS) / 86_400.0
}

/// Sun azimuth (clockwise from North) and elevation at a UTC instant.
///
/// Elevation is geometric (no refraction correction).
pub fn sun_position(ts: &Timestamp, latitude: f64, longitude: f64) -> SunPosition {
    let n = days_since_j2000(ts);
    let mean_long = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let mean_anom = (357.528 + 0.985_600_3 * n).rem_euclid(360.0).to_radians();
    let ecl_long = (mean_long + 1.915 * mean_anom.sin() + 0.020 * (2.0 * mean_anom).sin())
        .rem_euclid(360.0)
        .to_radians();
    let obliquity = (23.439 - 0.000_000_4 * n).to_radians();

    let ra = (obliquity.cos() * ecl_long.sin()).atan2(ecl_long.cos());
    let dec = (obliquity.sin() * ecl_long.sin()).asin();

    let gmst_hours = (18.697_374_558 + 24.065_709_824_419_08 * n).rem_euclid(24.0);
    let hour_angle = (gmst_hours * 15.0 + longitude - ra.to_degrees()).to_radians();

    let lat = latitude.clamp(-90.0, 90.0).to_radians();
    let sin_el = lat.sin() * dec.sin() + lat.cos() * dec.cos() * hour_angle.cos();
    let elevation = sin_el.clamp(-1.0, 1.0).asin().to_degrees();

    let az = (-dec.cos() * hour_angle.sin())
        .atan2(dec.sin() * lat.cos() - dec.cos() * lat.sin() * hour_angle.cos());
    let mut azimuth = az.to_degrees().rem_euclid(360.0);
    if azimuth >= 360.0 {
        azimuth = 0.0;
    }
    SunPosition { azimuth, elevation }
}

/// Sun position at the middle of the hour starting at `hour_start`, the
/// representative instant for hourly-averaged irradiance.
pub fn hourly_sun_position(hour_start: &Timestamp, latitude: f64, longitude: f64) -> SunPosition {
    sun_position(&(*hour_start + Duration::minutes(30)), latitude, longitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn j2000_epoch() {
        let t = Utc.with_ymd_and_hms(2000, 1, 1, 12, 0, 0).unwrap();
        assert_eq!(days_since_j2000(&t), 0.0);
    }

    #[test]
    fn azimuth_stays_in_range() {
        let t0 = Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap();
        for h in 0..24 * 400 {
            let s = sun_position(&(t0 + Duration::hours(h)), -60.0 + (h % 120) as f64, 0.0);
            assert!((0.0..360.0).contains(&s.azimuth));
            assert!((-90.0..=90.0).contains(&s.elevation));
        }
    }
}
