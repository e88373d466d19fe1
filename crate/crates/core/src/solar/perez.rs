//! Perez (1990) anisotropic sky diffuse model and plane-of-array
//! transposition.

use super::{HorizontalIrradiance, Surface, SunPosition, TiltedIrradiance, SOLAR_CONSTANT};

/// Below this sun elevation (degrees) beam irradiance is not recovered from
/// the horizontal components.
pub const ELEVATION_FLOOR_DEG: f64 = 5.0;

/// Upper edges of the first seven sky-clearness bins; the eighth bin is open.
pub const CLEARNESS_EDGES: [f64; 7] = [1.065, 1.23, 1.5, 1.95, 2.8, 4.5, 6.2];

/// Circumsolar brightening coefficients `[f11, f12, f13]` per clearness bin
/// (all-sites composite set).
pub const F1: [[f64; 3]; 8] = [
    [-0.008, 0.588, -0.062],
    [0.130, 0.683, -0.151],
    [0.330, 0.487, -0.221],
    [0.568, 0.187, -0.295],
    [0.873, -0.392, -0.362],
    [1.132, -1.237, -0.412],
    [1.060, -1.600, -0.359],
    [0.678, -0.327, -0.250],
];

/// Horizon brightening coefficients `[f21, f22, f23]` per clearness bin.
pub const F2: [[f64; 3]; 8] = [
    [-0.060, 0.072, -0.022],
    [-0.019, 0.066, -0.029],
    [0.055, -0.064, -0.026],
    [0.109, -0.152, -0.014],
    [0.226, -0.462, 0.001],
    [0.288, -0.823, 0.056],
    [0.264, -1.127, 0.131],
    [0.156, -1.377, 0.251],
];

const KAPPA: f64 = 1.041;

/// Kasten–Young relative air mass for a zenith angle in degrees.
pub fn relative_air_mass(zenith_deg: f64) -> f64 {
    1.0 / (zenith_deg.to_radians().cos() + 0.505_72 * (96.079_95 - zenith_deg).powf(-1.6364))
}

/// Cosine of the angle of incidence between the sun and the panel normal.
pub fn cos_incidence(sun: &SunPosition, surface: &Surface) -> f64 {
    let zen = (90.0 - sun.elevation).to_radians();
    let tilt = surface.tilt.to_radians();
    let daz = (sun.azimuth - surface.azimuth).to_radians();
    (tilt.cos() * zen.cos() + tilt.sin() * zen.sin() * daz.cos()).clamp(-1.0, 1.0)
}

/// Index of the clearness bin holding `epsilon`.
pub fn clearness_bin(epsilon: f64) -> usize {
    CLEARNESS_EDGES.iter().filter(|&&e| e < epsilon).count()
}

/// Sky diffuse irradiance on the tilted plane.
pub fn perez_sky_diffuse(
    dhi: f64,
    dni: f64,
    dni_extra: f64,
    sun: &SunPosition,
    surface: &Surface,
) -> f64 {
    if dhi <= 0.0 {
        return 0.0;
    }
    let zenith_deg = 90.0 - sun.elevation;
    let z = zenith_deg.to_radians();
    let kz3 = KAPPA * z.powi(3);
    let epsilon = ((dhi + dni) / dhi + kz3) / (1.0 + kz3);
    let bin = clearness_bin(epsilon);
    let delta = dhi * relative_air_mass(zenith_deg) / dni_extra;

    let [f11, f12, f13] = F1[bin];
    let [f21, f22, f23] = F2[bin];
    let f1 = (f11 + f12 * delta + f13 * z).max(0.0);
    let f2 = f21 + f22 * delta + f23 * z;

    let tilt = surface.tilt.to_radians();
    let a = cos_incidence(sun, surface).max(0.0);
    let b = z.cos().max(85f64.to_radians().cos());
    let sky = dhi * ((1.0 - f1) * (1.0 + tilt.cos()) / 2.0 + f1 * a / b + f2 * tilt.sin());
    sky.max(0.0)
}

/// Transposes horizontal components onto the panel plane with the standard
/// solar constant as extraterrestrial irradiance.
pub fn perez_transpose(
    h: HorizontalIrradiance,
    sun: &SunPosition,
    surface: &Surface,
) -> TiltedIrradiance {
    perez_transpose_with(h, sun, surface, SOLAR_CONSTANT)
}

/// Transposes horizontal components onto the panel plane.
///
/// With the sun below the horizon every component is zero. Between the
/// horizon and [`ELEVATION_FLOOR_DEG`] the beam is not recovered and all of
/// GHI is treated as isotropic diffuse.
pub fn perez_transpose_with(
    h: HorizontalIrradiance,
    sun: &SunPosition,
    surface: &Surface,
    dni_extra: f64,
) -> TiltedIrradiance {
    if sun.elevation <= 0.0 {
        return TiltedIrradiance::default();
    }
    let ghi = h.ghi.max(0.0);
    let dhi = h.dhi.max(0.0);
    let bhi = h.bhi.max(0.0);
    let tilt = surface.tilt.to_radians();
    let ground_reflected = ghi * surface.albedo * (1.0 - tilt.cos()) / 2.0;

    let (bti, dti) = if sun.elevation < ELEVATION_FLOOR_DEG {
        (0.0, ghi * (1.0 + tilt.cos()) / 2.0)
    } else {
        let dni = bhi / sun.elevation.to_radians().sin();
        let bti = dni * cos_incidence(sun, surface).max(0.0);
        let dti = perez_sky_diffuse(dhi, dni, dni_extra, sun, surface);
        (bti, dti)
    };

    TiltedIrradiance {
        gti: bti + dti + ground_reflected,
        dti,
        bti,
        ground_reflected,
    }
}
