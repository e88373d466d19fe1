//! CSV ingestion and emission for the four dataset files.
//!
//! Headers are matched exactly. Floats are written with Rust's shortest
//! round-trip formatting so a write/read cycle reproduces every value.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::records::{
    format_ts, parse_ts, AvailabilityInterval, PlantRegistry, PlantRow, PowerRecord, Timestamp,
    WeatherKind, WeatherRecord,
};
use super::DataError;

pub const PLANTS_HEADER: &str = "plant_id,name,latitude,longitude,tilt_deg,azimuth_deg,albedo";
pub const AVAILABILITY_HEADER: &str = "plant_id,start_ts,end_ts,nominal_kw";
pub const WEATHER_HEADER: &str = "plant_id,ts_utc,provider,kind,ghi_wm2,dhi_wm2,bhi_wm2,temp_c";
pub const POWER_HEADER: &str = "plant_id,ts_utc,power_kw";

pub const PLANTS_FILE: &str = "plants.csv";
pub const AVAILABILITY_FILE: &str = "availability.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const POWER_FILE: &str = "power.csv";

/// Measured power may exceed nominal by this factor (metering noise).
pub const POWER_NOMINAL_TOLERANCE: f64 = 1.05;
/// Allowed `|ghi - (dhi + bhi)|` in W/m².
pub const CLOSURE_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Plants,
    Availability,
    Weather,
    Power,
}

impl Schema {
    pub fn header(self) -> &'static str {
        match self {
            Schema::Plants => PLANTS_HEADER,
            Schema::Availability => AVAILABILITY_HEADER,
            Schema::Weather => WEATHER_HEADER,
            Schema::Power => POWER_HEADER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Plants(Vec<PlantRow>),
    Availability(Vec<AvailabilityInterval>),
    Weather(Vec<WeatherRecord>),
    Power(Vec<PowerRecord>),
}

struct RowCtx<'a> {
    path: &'a str,
    line: u64,
    record: &'a csv::StringRecord,
    columns: &'a [&'static str],
}

impl RowCtx<'_> {
    fn field_err(&self, column: &'static str, message: impl Into<String>) -> DataError {
        DataError::Field {
            path: self.path.to_string(),
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn raw(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("").trim()
    }

    fn string(&self, idx: usize) -> Result<String, DataError> {
        let s = self.raw(idx);
        if s.is_empty() {
            return Err(self.field_err(self.columns[idx], "empty value"));
        }
        Ok(s.to_string())
    }

    fn float(&self, idx: usize) -> Result<f64, DataError> {
        let s = self.raw(idx);
        let v: f64 = s
            .parse()
            .map_err(|_| self.field_err(self.columns[idx], format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.field_err(self.columns[idx], "non-finite value"));
        }
        Ok(v)
    }

    fn opt_float(&self, idx: usize) -> Result<Option<f64>, DataError> {
        if self.raw(idx).is_empty() {
            Ok(None)
        } else {
            self.float(idx).map(Some)
        }
    }

    fn ts(&self, idx: usize) -> Result<Timestamp, DataError> {
        parse_ts(self.raw(idx)).map_err(|m| self.field_err(self.columns[idx], m))
    }

    fn in_range(&self, idx: usize, v: f64, lo: f64, hi: f64, hi_open: bool) -> Result<(), DataError> {
        let ok = v >= lo && if hi_open { v < hi } else { v <= hi };
        if ok {
            Ok(())
        } else {
            let close = if hi_open { ")" } else { "]" };
            Err(self.field_err(
                self.columns[idx],
                format!("{v} outside [{lo}, {hi}{close}"),
            ))
        }
    }
}

fn for_each_row(
    path: &Path,
    schema: Schema,
    mut f: impl FnMut(&RowCtx<'_>) -> Result<(), DataError>,
) -> Result<(), DataError> {
    let path_str = path.display().to_string();
    let csv_err = |source| DataError::Csv {
        path: path_str.clone(),
        source,
    };
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let header = reader.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != schema.header() {
        return Err(DataError::Header {
            path: path_str,
            expected: schema.header().to_string(),
            found: header,
        });
    }
    let columns: Vec<&'static str> = schema.header().split(',').collect();
    let mut record = csv::StringRecord::new();
    loop {
        if !reader.read_record(&mut record).map_err(csv_err)? {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        f(&RowCtx {
            path: &path_str,
            line,
            record: &record,
            columns: &columns,
        })?;
    }
    Ok(())
}

/// Reads one dataset file. Weather, power and availability rows are checked
/// against `registry` when one is supplied (unknown plants, nominal power).
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: Schema,
    registry: Option<&PlantRegistry>,
) -> Result<Records, DataError> {
    let path = path.as_ref();
    match schema {
        Schema::Plants => {
            let mut rows = Vec::new();
            for_each_row(path, schema, |r| {
                let latitude = r.float(2)?;
                r.in_range(2, latitude, -90.0, 90.0, false)?;
                let longitude = r.float(3)?;
                r.in_range(3, longitude, -180.0, 180.0, false)?;
                let tilt = r.float(4)?;
                r.in_range(4, tilt, 0.0, 90.0, false)?;
                let surface_azimuth = r.float(5)?;
                r.in_range(5, surface_azimuth, 0.0, 360.0, true)?;
                let albedo = r.float(6)?;
                r.in_range(6, albedo, 0.0, 1.0, false)?;
                rows.push(PlantRow {
                    plant_id: r.string(0)?,
                    name: r.raw(1).to_string(),
                    latitude,
                    longitude,
                    tilt,
                    surface_azimuth,
                    albedo,
                });
                Ok(())
            })?;
            Ok(Records::Plants(rows))
        }
        Schema::Availability => {
            let mut rows = Vec::new();
            for_each_row(path, schema, |r| {
                let plant_id = r.string(0)?;
                check_plant(r, registry, &plant_id)?;
                let start = r.ts(1)?;
                let end = r.ts(2)?;
                if end <= start {
                    return Err(r.field_err("end_ts", "end must be after start"));
                }
                let nominal_kw = r.float(3)?;
                if nominal_kw <= 0.0 {
                    return Err(r.field_err("nominal_kw", "nominal power must be positive"));
                }
                rows.push(AvailabilityInterval {
                    plant_id,
                    start,
                    end,
                    nominal_kw,
                });
                Ok(())
            })?;
            Ok(Records::Availability(rows))
        }
        Schema::Weather => {
            let mut rows = Vec::new();
            let mut last: BTreeMap<(String, String, WeatherKind), Timestamp> = BTreeMap::new();
            for_each_row(path, schema, |r| {
                let plant_id = r.string(0)?;
                check_plant(r, registry, &plant_id)?;
                let timestamp = r.ts(1)?;
                let provider = r.string(2)?;
                let kind: WeatherKind = r.raw(3).parse().map_err(|m: String| r.field_err("kind", m))?;
                let mut irr = [0.0; 3];
                for (k, v) in irr.iter_mut().enumerate() {
                    *v = r.float(4 + k)?;
                    if *v < 0.0 {
                        return Err(r.field_err(r.columns[4 + k], format!("negative irradiance {v}")));
                    }
                }
                let [ghi, dhi, bhi] = irr;
                if (ghi - (dhi + bhi)).abs() > CLOSURE_TOLERANCE {
                    return Err(DataError::Row {
                        path: r.path.to_string(),
                        line: r.line,
                        message: format!("ghi {ghi} differs from dhi + bhi = {} by more than {CLOSURE_TOLERANCE} W/m²", dhi + bhi),
                    });
                }
                let temperature = r.opt_float(7)?;
                let key = (plant_id.clone(), provider.clone(), kind);
                if let Some(prev) = last.get(&key) {
                    if timestamp <= *prev {
                        return Err(r.field_err("ts_utc", format!(
                            "timestamps must be strictly increasing per (plant, provider, kind); {} follows {}",
                            format_ts(&timestamp),
                            format_ts(prev)
                        )));
                    }
                }
                last.insert(key, timestamp);
                rows.push(WeatherRecord {
                    plant_id,
                    timestamp,
                    provider,
                    kind,
                    ghi,
                    dhi,
                    bhi,
                    temperature,
                });
                Ok(())
            })?;
            Ok(Records::Weather(rows))
        }
        Schema::Power => {
            let mut rows = Vec::new();
            for_each_row(path, schema, |r| {
                let plant_id = r.string(0)?;
                check_plant(r, registry, &plant_id)?;
                let timestamp = r.ts(1)?;
                let power = r.float(2)?;
                if power < 0.0 {
                    return Err(r.field_err("power_kw", format!("negative power {power}")));
                }
                if let Some(reg) = registry {
                    let plant = reg.get(&plant_id).expect("checked above");
                    let nominal = plant
                        .nominal_power_schedule
                        .nominal_at(&timestamp)
                        .ok_or_else(|| DataError::NoNominalPower {
                            path: r.path.to_string(),
                            line: r.line,
                            plant_id: plant_id.clone(),
                            timestamp: format_ts(&timestamp),
                        })?;
                    if power > POWER_NOMINAL_TOLERANCE * nominal {
                        return Err(r.field_err(
                            "power_kw",
                            format!("{power} kW exceeds {POWER_NOMINAL_TOLERANCE} x nominal {nominal} kW"),
                        ));
                    }
                }
                rows.push(PowerRecord {
                    plant_id,
                    timestamp,
                    power,
                });
                Ok(())
            })?;
            Ok(Records::Power(rows))
        }
    }
}

fn check_plant(r: &RowCtx<'_>, registry: Option<&PlantRegistry>, plant_id: &str) -> Result<(), DataError> {
    match registry {
        Some(reg) if reg.get(plant_id).is_none() => Err(DataError::UnknownPlant {
            path: r.path.to_string(),
            line: r.line,
            plant_id: plant_id.to_string(),
        }),
        _ => Ok(()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_plants(mut w: impl Write, rows: &[PlantRow]) -> std::io::Result<()> {
    writeln!(w, "{PLANTS_HEADER}")?;
    for p in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            quote(&p.plant_id),
            quote(&p.name),
            p.latitude,
            p.longitude,
            p.tilt,
            p.surface_azimuth,
            p.albedo
        )?;
    }
    Ok(())
}

pub fn write_availability(mut w: impl Write, rows: &[AvailabilityInterval]) -> std::io::Result<()> {
    writeln!(w, "{AVAILABILITY_HEADER}")?;
    for a in rows {
        writeln!(
            w,
            "{},{},{},{}",
            quote(&a.plant_id),
            format_ts(&a.start),
            format_ts(&a.end),
            a.nominal_kw
        )?;
    }
    Ok(())
}

pub fn write_weather(mut w: impl Write, rows: &[WeatherRecord]) -> std::io::Result<()> {
    writeln!(w, "{WEATHER_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            quote(&r.plant_id),
            format_ts(&r.timestamp),
            quote(&r.provider),
            r.kind,
            r.ghi,
            r.dhi,
            r.bhi,
            fmt_opt(r.temperature)
        )?;
    }
    Ok(())
}

pub fn write_power(mut w: impl Write, rows: &[PowerRecord]) -> std::io::Result<()> {
    writeln!(w, "{POWER_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{}",
            quote(&r.plant_id),
            format_ts(&r.timestamp),
            r.power
        )?;
    }
    Ok(())
}

/// A complete dataset: plants with schedules, weather and power series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub registry: PlantRegistry,
    pub weather: Vec<WeatherRecord>,
    pub power: Vec<PowerRecord>,
}

impl Dataset {
    /// Loads `plants.csv`, `availability.csv`, `weather.csv` and `power.csv`
    /// from `dir`, in dependency order.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DataError> {
        let dir = dir.as_ref();
        let Records::Plants(plants) = load_csv(dir.join(PLANTS_FILE), Schema::Plants, None)? else {
            unreachable!()
        };
        let ids: PlantRegistry = PlantRegistry::from_rows(
            plants.clone(),
            plants
                .iter()
                .map(|p| AvailabilityInterval {
                    plant_id: p.plant_id.clone(),
                    start: Timestamp::MIN_UTC,
                    end: Timestamp::MAX_UTC,
                    nominal_kw: 1.0,
                })
                .collect(),
        )?;
        let Records::Availability(avail) =
            load_csv(dir.join(AVAILABILITY_FILE), Schema::Availability, Some(&ids))?
        else {
            unreachable!()
        };
        let registry = PlantRegistry::from_rows(plants, avail)?;
        let Records::Weather(weather) =
            load_csv(dir.join(WEATHER_FILE), Schema::Weather, Some(&registry))?
        else {
            unreachable!()
        };
        let Records::Power(power) = load_csv(dir.join(POWER_FILE), Schema::Power, Some(&registry))?
        else {
            unreachable!()
        };
        Ok(Self {
            registry,
            weather,
            power,
        })
    }

    /// Writes the four dataset files into `dir` (which must exist).
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let dir = dir.as_ref();
        let rows: Vec<PlantRow> = self.registry.iter().map(|p| p.row()).collect();
        write_file(&dir.join(PLANTS_FILE), |w| write_plants(w, &rows))?;
        write_file(&dir.join(AVAILABILITY_FILE), |w| {
            write_availability(w, &self.registry.availability())
        })?;
        write_file(&dir.join(WEATHER_FILE), |w| write_weather(w, &self.weather))?;
        write_file(&dir.join(POWER_FILE), |w| write_power(w, &self.power))?;
        Ok(())
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_file(
    path: &Path,
    f: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("tmp~");
    {
        let file = fs::File::create(&tmp).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn registry() -> PlantRegistry {
        let start = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
        PlantRegistry::from_rows(
            vec![PlantRow {
                plant_id: "p1".into(),
                name: "One".into(),
                latitude: 43.7,
                longitude: 10.4,
                tilt: 30.0,
                surface_azimuth: 180.0,
                albedo: 0.2,
            }],
            vec![
                AvailabilityInterval {
                    plant_id: "p1".into(),
                    start,
                    end: start + chrono::Duration::days(10),
                    nominal_kw: 1000.0,
                },
                AvailabilityInterval {
                    plant_id: "p1".into(),
                    start: start + chrono::Duration::days(11),
                    end: start + chrono::Duration::days(20),
                    nominal_kw: 900.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn minimal_plants_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "plants.csv",
            "plant_id,name,latitude,longitude,tilt_deg,azimuth_deg,albedo\np1,One,43.7,10.4,30,180,0.2\n",
        );
        let Records::Plants(rows) = load_csv(&p, Schema::Plants, None).unwrap() else {
            panic!()
        };
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].plant_id, "p1");
        assert_eq!(rows[0].tilt, 30.0);
    }

    #[test]
    fn header_must_match_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "power.csv", "plant,ts_utc,power_kw\n");
        assert!(matches!(
            load_csv(&p, Schema::Power, None),
            Err(DataError::Header { .. })
        ));
    }

    #[test]
    fn negative_irradiance_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "weather.csv",
            "plant_id,ts_utc,provider,kind,ghi_wm2,dhi_wm2,bhi_wm2,temp_c\n\
             p1,2015-01-01T10:00:00Z,a,forecast,100,40,60,\n\
             p1,2015-01-01T11:00:00Z,a,forecast,-5,0,0,12\n",
        );
        let err = load_csv(&p, Schema::Weather, Some(&registry())).unwrap_err();
        match &err {
            DataError::Field { line, column, .. } => {
                assert_eq!(*line, 3);
                assert_eq!(*column, "ghi_wm2");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("line 3"));
        assert!(err.to_string().contains("ghi_wm2"));
    }

    #[test]
    fn weather_checks_closure_order_and_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let head = "plant_id,ts_utc,provider,kind,ghi_wm2,dhi_wm2,bhi_wm2,temp_c\n";
        let reg = registry();
        let bad_closure = write(dir.path(), "a.csv", &format!("{head}p1,2015-01-01T10:00:00Z,a,forecast,100,10,60,\n"));
        assert!(matches!(load_csv(&bad_closure, Schema::Weather, Some(&reg)), Err(DataError::Row { .. })));
        let unordered = write(
            dir.path(),
            "b.csv",
            &format!("{head}p1,2015-01-01T10:00:00Z,a,forecast,0,0,0,\np1,2015-01-01T09:00:00Z,a,forecast,0,0,0,\n"),
        );
        assert!(load_csv(&unordered, Schema::Weather, Some(&reg)).is_err());
        // the same hour from another provider is fine
        let two = write(
            dir.path(),
            "c.csv",
            &format!("{head}p1,2015-01-01T10:00:00Z,a,forecast,0,0,0,\np1,2015-01-01T10:00:00Z,b,forecast,0,0,0,\n"),
        );
        assert!(load_csv(&two, Schema::Weather, Some(&reg)).is_ok());
        let bad_ts = write(dir.path(), "d.csv", &format!("{head}p1,2015-01-01 10:00,a,forecast,0,0,0,\n"));
        let err = load_csv(&bad_ts, Schema::Weather, Some(&reg)).unwrap_err();
        assert!(matches!(err, DataError::Field { column: "ts_utc", .. }));
        let unknown = write(dir.path(), "e.csv", &format!("{head}zz,2015-01-01T10:00:00Z,a,forecast,0,0,0,\n"));
        assert!(matches!(load_csv(&unknown, Schema::Weather, Some(&reg)), Err(DataError::UnknownPlant { .. })));
    }

    #[test]
    fn power_in_schedule_gap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        // day 10 (0-based) is the gap between the two availability intervals
        let p = write(
            dir.path(),
            "power.csv",
            "plant_id,ts_utc,power_kw\np1,2015-01-05T12:00:00Z,500\np1,2015-01-11T12:00:00Z,500\n",
        );
        let err = load_csv(&p, Schema::Power, Some(&registry())).unwrap_err();
        assert!(matches!(err, DataError::NoNominalPower { line: 3, .. }));
        assert!(err.to_string().contains("no nominal power defined"));
    }

    #[test]
    fn power_above_tolerance_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(dir.path(), "ok.csv", "plant_id,ts_utc,power_kw\np1,2015-01-05T12:00:00Z,1049\n");
        assert!(load_csv(&ok, Schema::Power, Some(&registry())).is_ok());
        let bad = write(dir.path(), "bad.csv", "plant_id,ts_utc,power_kw\np1,2015-01-05T12:00:00Z,1051\n");
        assert!(load_csv(&bad, Schema::Power, Some(&registry())).is_err());
        let neg = write(dir.path(), "neg.csv", "plant_id,ts_utc,power_kw\np1,2015-01-05T12:00:00Z,-1\n");
        assert!(load_csv(&neg, Schema::Power, Some(&registry())).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reg = registry();
        let t = Utc.with_ymd_and_hms(2015, 1, 2, 11, 0, 0).unwrap();
        let ds = Dataset {
            registry: reg,
            weather: vec![WeatherRecord {
                plant_id: "p1".into(),
                timestamp: t,
                provider: "nwp,a".into(),
                kind: WeatherKind::Forecast,
                ghi: 0.1 + 0.2,
                dhi: 0.1,
                bhi: 0.2,
                temperature: Some(-3.25),
            }],
            power: vec![PowerRecord {
                plant_id: "p1".into(),
                timestamp: t,
                power: 1.0 / 3.0,
            }],
        };
        ds.write_dir(dir.path()).unwrap();
        let back = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(back, ds);
    }
}
