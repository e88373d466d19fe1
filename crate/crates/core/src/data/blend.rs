use std::collections::BTreeMap;

use super::records::{Timestamp, WeatherKind, WeatherRecord};
use super::DataError;

/// Minimum number of calibration hours shared with the reference series.
pub const MIN_REFERENCE_HOURS: usize = 168;

/// Name given to the provider of blended records.
pub const BLEND_PROVIDER: &str = "blend";

#[derive(Debug, Clone, PartialEq)]
pub struct Blend {
    /// Weight of provider `a`; provider `b` gets `1 - alpha`.
    pub alpha: f64,
    /// Number of hours the weight was fitted on.
    pub calibration_hours: usize,
    pub records: Vec<WeatherRecord>,
}

/// Least-squares weight `α` minimising `Σ(α·a + (1-α)·b - r)²`, clipped to
/// `[0, 1]`. Identical inputs give `0.5`.
pub fn blend_weight(a: &[f64], b: &[f64], r: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&a, &b), &r) in a.iter().zip(b).zip(r) {
        let d = a - b;
        num += d * (r - b);
        den += d * d;
    }
    if den <= f64::EPSILON * num.abs().max(1.0) {
        return 0.5;
    }
    (num / den).clamp(0.0, 1.0)
}

fn by_hour(series: &[WeatherRecord]) -> BTreeMap<Timestamp, &WeatherRecord> {
    series.iter().map(|r| (r.timestamp, r)).collect()
}

/// Combines two forecast providers into one series with a single weight
/// calibrated against the reference GHI on hours before `calibration_end`
/// (all shared hours when `None`). The output covers every hour present in
/// both providers.
pub fn blend_providers(
    a: &[WeatherRecord],
    b: &[WeatherRecord],
    reference: &[WeatherRecord],
    calibration_end: Option<Timestamp>,
) -> Result<Blend, DataError> {
    let ma = by_hour(a);
    let mb = by_hour(b);
    let mr = by_hour(reference);
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if x.plant_id != y.plant_id || reference.iter().any(|r| r.plant_id != x.plant_id) {
            return Err(DataError::Invalid(
                "blended series must belong to the same plant".into(),
            ));
        }
    }

    let (mut xa, mut xb, mut xr) = (Vec::new(), Vec::new(), Vec::new());
    let mut any_overlap = false;
    for (ts, ra) in &ma {
        let (Some(rb), Some(rr)) = (mb.get(ts), mr.get(ts)) else {
            continue;
        };
        any_overlap = true;
        if calibration_end.map_or(true, |end| *ts < end) {
            xa.push(ra.ghi);
            xb.push(rb.ghi);
            xr.push(rr.ghi);
        }
    }
    if !any_overlap {
        return Err(DataError::EmptyOverlap);
    }
    if xr.len() < MIN_REFERENCE_HOURS {
        return Err(DataError::ShortReference { hours: xr.len() });
    }
    let alpha = blend_weight(&xa, &xb, &xr);
    let mix = |x: f64, y: f64| alpha * x + (1.0 - alpha) * y;

    let records = ma
        .iter()
        .filter_map(|(ts, ra)| {
            let rb = mb.get(ts)?;
            let dhi = mix(ra.dhi, rb.dhi);
            let bhi = mix(ra.bhi, rb.bhi);
            let temperature = match (ra.temperature, rb.temperature) {
                (Some(x), Some(y)) => Some(mix(x, y)),
                (x, y) => x.or(y),
            };
            Some(WeatherRecord {
                plant_id: ra.plant_id.clone(),
                timestamp: *ts,
                provider: BLEND_PROVIDER.to_string(),
                kind: WeatherKind::Forecast,
                ghi: dhi + bhi,
                dhi,
                bhi,
                temperature,
            })
        })
        .collect();

    Ok(Blend {
        alpha,
        calibration_hours: xr.len(),
        records,
    })
}
