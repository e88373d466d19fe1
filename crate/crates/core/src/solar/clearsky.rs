use super::SunPosition;

/// Haurwitz clear-sky global horizontal irradiance in W/m².
///
/// `GHI = 1098 · cos z · exp(-0.057 / cos z)`, zero with the sun at or below
/// the horizon.
pub fn clear_sky_ghi(sun: &SunPosition) -> f64 {
    if sun.elevation <= 0.0 {
        return 0.0;
    }
    let cos_z = sun.elevation.to_radians().sin();
    1098.0 * cos_z * (-0.057 / cos_z).exp()
}

/// Extraterrestrial normal irradiance for a day of year.
pub fn extraterrestrial_normal(day_of_year: u32) -> f64 {
    let b = 2.0 * std::f64::consts::PI * f64::from(day_of_year) / 365.0;
    super::SOLAR_CONSTANT * (1.0 + 0.033 * b.cos())
}
