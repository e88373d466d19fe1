//! The four pipeline commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use pvbench_core::data::io::{write_file, AVAILABILITY_FILE, PLANTS_FILE, POWER_FILE, WEATHER_FILE};
use pvbench_core::data::{prepare_plants, Dataset, Timestamp};
use pvbench_core::eval::persist::{write_weekly, HOURLY_FILE, METRICS_FILE, WEEKLY_FILE};
use pvbench_core::eval::{
    compute_metrics, csi_bucket_label, daily_nmbe_density, run_backtest, wilcoxon_signed_rank, BacktestConfig,
    BacktestReport, DensityEstimate, EvalError, MetricReport, PlantSeries, SignificanceResult, CSI_BUCKETS,
};
use pvbench_core::models::ModelKind;
use pvbench_core::solar::PerezTransposition;
use pvbench_core::synth::generate_fleet;
use serde::Serialize;
use serde_json::json;

use crate::config::{usage, Inputs, RunConfig};
use crate::manifest::{FileEntry, Manifest};
use crate::svg::{self, Series};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_DIR: &str = "report";
pub const COMPARE_DIR: &str = "compare";

/// Reference average nMAE (%) from a proprietary 32-plant fleet; not
/// reproducible on synthetic or other fleets.
pub const REFERENCE_NMAE: [(&str, f64); 2] = [("gb", 3.26), ("ens", 3.07)];

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FOLD_FAILURES: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportBy {
    Month,
    Plant,
    Csi,
    Weekly,
    Density,
}

impl ReportBy {
    pub fn name(self) -> &'static str {
        match self {
            ReportBy::Month => "month",
            ReportBy::Plant => "plant",
            ReportBy::Csi => "csi",
            ReportBy::Weekly => "weekly",
            ReportBy::Density => "density",
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl Common {
    /// The configuration with the seed flag applied, and its file entry.
    fn load_config(&self) -> anyhow::Result<(RunConfig, FileEntry)> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| usage(format!("no configuration: pass --config or set {}", crate::config::CONFIG_ENV)))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let entry = FileEntry::of(path, path.display().to_string())?;
        Ok((cfg, entry))
    }

    /// Refuses to touch existing outputs unless forced, then creates `dir`.
    fn prepare_output(&self, dir: &Path, names: &[String]) -> anyhow::Result<()> {
        if !self.force {
            if let Some(existing) = names.iter().map(|n| dir.join(n)).find(|p| p.exists()) {
                return Err(usage(format!(
                    "refusing to overwrite {}; pass --force to replace it",
                    existing.display()
                )));
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn synth(common: &Common) -> anyhow::Result<u8> {
    let (cfg, entry) = common.load_config()?;
    let synth = cfg
        .synth_config()
        .ok_or_else(|| usage("synth needs a [synth] section in the configuration"))?;
    let dir = cfg.output_dir(common.out.as_deref(), "data")?;
    let files = names(&[PLANTS_FILE, AVAILABILITY_FILE, WEATHER_FILE, POWER_FILE]);
    let mut all = files.clone();
    all.push(MANIFEST_FILE.into());
    common.prepare_output(&dir, &all)?;

    let ds = generate_fleet(&synth)?;
    ds.write_dir(&dir)?;
    let mut manifest = Manifest::new("synth", Some(cfg.seed), Some(entry));
    manifest.add_outputs(&dir, &files)?;
    manifest.write(&dir.join(MANIFEST_FILE))?;
    eprintln!(
        "wrote {} plants, {} power rows, {} weather rows to {}",
        ds.registry.len(),
        ds.power.len(),
        ds.weather.len(),
        dir.display()
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Default)]
pub struct BacktestFlags {
    pub models: Option<Vec<ModelKind>>,
    pub tolerate_failures: bool,
}

pub fn backtest(common: &Common, flags: &BacktestFlags) -> anyhow::Result<u8> {
    let (cfg, entry) = common.load_config()?;
    let initial_train_end: Timestamp = cfg
        .backtest
        .initial_train_end
        .ok_or_else(|| usage("[backtest] initial_train_end is required"))?;
    let bcfg = BacktestConfig {
        models: flags.models.clone().unwrap_or_else(|| cfg.backtest.models.clone()),
        models_config: cfg.models.clone(),
        initial_train_end,
        step_hours: cfg.backtest.step_hours,
        seed: cfg.seed,
    };
    bcfg.validate().map_err(|e| usage(e.to_string()))?;
    let dir = cfg.output_dir(common.out.as_deref(), "backtest")?;
    let files = names(&[HOURLY_FILE, METRICS_FILE, WEEKLY_FILE]);
    let mut all = files.clone();
    all.push(MANIFEST_FILE.into());
    common.prepare_output(&dir, &all)?;

    let mut manifest = Manifest::new("backtest", Some(cfg.seed), Some(entry));
    let ds = match (&cfg.data, cfg.synth_config()) {
        (Some(data), _) => {
            for f in [PLANTS_FILE, AVAILABILITY_FILE, WEATHER_FILE, POWER_FILE] {
                let p = data.dir.join(f);
                manifest.inputs.push(FileEntry::of(&p, p.display().to_string())?);
            }
            Dataset::load_dir(&data.dir)?
        }
        (None, Some(synth)) => generate_fleet(&synth)?,
        (None, None) => unreachable!("validated at load"),
    };
    let prepared = prepare_plants(&ds, &cfg.prepare_options(), &PerezTransposition)?;
    let series: Vec<PlantSeries> = match cfg.backtest.inputs {
        Inputs::Forecast => prepared.iter().map(PlantSeries::forecast_driven).collect(),
        Inputs::Measured => prepared
            .iter()
            .map(|p| {
                PlantSeries::measurement_driven(p)
                    .ok_or_else(|| anyhow::anyhow!("plant `{}` has no measured weather", p.plant.plant_id))
            })
            .collect::<anyhow::Result<_>>()?,
    };

    let report = run_backtest(&series, &bcfg)?;
    report.write_dir(&dir)?;
    manifest.add_outputs(&dir, &files)?;
    manifest.write(&dir.join(MANIFEST_FILE))?;

    for m in &report.models {
        match report.overall(*m) {
            Some(r) => eprintln!("{m:>6}  nMAE {:.3}%  nRMSE {:.3}%  nMBE {:+.3}%  ({} h)", r.nmae, r.nrmse, r.nmbe, r.n_hours),
            None => eprintln!("{m:>6}  no forecasts"),
        }
    }
    if report.failures.is_empty() {
        return Ok(EXIT_OK);
    }
    eprintln!("{} (plant, model, fold) fits failed", report.failures.len());
    for f in report.failures.iter().take(10) {
        eprintln!("  {} {} fold {}: {}", f.plant_id, f.model, f.fold, f.error);
    }
    if flags.tolerate_failures || cfg.backtest.tolerate_failures {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_FOLD_FAILURES)
    }
}

/// The backtest directory named on the command line, or the configured one.
fn backtest_dir(common: &Common, dir: Option<&Path>) -> anyhow::Result<PathBuf> {
    match dir {
        Some(d) => Ok(d.to_path_buf()),
        None => {
            let (cfg, _) = common.load_config()?;
            let out = cfg
                .out
                .ok_or_else(|| usage("no backtest directory given and no `out` in the configuration"))?;
            Ok(out.join("backtest"))
        }
    }
}

fn load_report(dir: &Path, manifest: &mut Manifest) -> anyhow::Result<BacktestReport> {
    let report = BacktestReport::load_dir(dir).with_context(|| format!("cannot load backtest from {}", dir.display()))?;
    for f in [METRICS_FILE, HOURLY_FILE] {
        let p = dir.join(f);
        manifest.inputs.push(FileEntry::of(&p, p.display().to_string())?);
    }
    Ok(report)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A model-per-row nMAE table.
struct WideTable {
    columns: Vec<String>,
    rows: Vec<(ModelKind, Vec<Option<f64>>)>,
}

impl WideTable {
    fn csv(&self) -> String {
        let mut s = String::from("model");
        for c in &self.columns {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (m, vals) in &self.rows {
            s.push_str(m.name());
            for v in vals {
                let _ = write!(s, ",{}", cell(*v));
            }
            s.push('\n');
        }
        s
    }

    fn series(&self, take: usize) -> Vec<Series> {
        self.rows
            .iter()
            .map(|(m, v)| Series {
                name: m.name().to_string(),
                values: v[..take].to_vec(),
            })
            .collect()
    }
}

const MONTHS: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];

fn month_table(report: &BacktestReport) -> WideTable {
    let mut columns = names(&MONTHS);
    columns.push("avg".into());
    let rows = report
        .tables
        .models
        .iter()
        .map(|t| {
            let mut v = vec![None; 13];
            for r in &t.by_month {
                if let pvbench_core::eval::Scope::Month(m) = r.scope {
                    v[m as usize - 1] = Some(r.nmae);
                }
            }
            v[12] = t.hour_weighted.as_ref().map(|r| r.nmae);
            (t.model, v)
        })
        .collect();
    WideTable { columns, rows }
}

fn plant_table(report: &BacktestReport) -> WideTable {
    let mut columns = report.plants.clone();
    columns.push("avg".into());
    let rows = report
        .tables
        .models
        .iter()
        .map(|t| {
            let by: BTreeMap<&str, f64> = t
                .by_plant
                .iter()
                .filter_map(|r| match &r.scope {
                    pvbench_core::eval::Scope::Plant(p) => Some((p.as_str(), r.nmae)),
                    _ => None,
                })
                .collect();
            let mut v: Vec<Option<f64>> = report.plants.iter().map(|p| by.get(p.as_str()).copied()).collect();
            v.push(t.plant_weighted.as_ref().map(|w| w.nmae));
            (t.model, v)
        })
        .collect();
    WideTable { columns, rows }
}

fn csi_table(report: &BacktestReport) -> WideTable {
    let columns = (0..CSI_BUCKETS.len()).map(csi_bucket_label).collect();
    let rows = report
        .tables
        .models
        .iter()
        .map(|t| {
            let mut v = vec![None; CSI_BUCKETS.len()];
            for r in &t.by_csi {
                if let pvbench_core::eval::Scope::CsiBucket(b) = r.scope {
                    v[b] = Some(r.nmae);
                }
            }
            (t.model, v)
        })
        .collect();
    WideTable { columns, rows }
}

fn tables_json(report: &BacktestReport, pick: impl Fn(&pvbench_core::eval::ModelTables) -> serde_json::Value) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = report
        .tables
        .models
        .iter()
        .map(|t| (t.model.name().to_string(), pick(t)))
        .collect();
    serde_json::Value::Object(map)
}

/// Linear interpolation of a density onto `x`, zero outside its grid.
fn interpolate(d: &DensityEstimate, x: f64) -> f64 {
    let g = &d.grid;
    if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
        return 0.0;
    }
    let i = g.partition_point(|&v| v <= x).min(g.len() - 1).max(1);
    let (x0, x1) = (g[i - 1], g[i]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    d.density[i - 1] + t * (d.density[i] - d.density[i - 1])
}

struct Rendered {
    csv: String,
    json: serde_json::Value,
    svg: String,
}

fn render(report: &BacktestReport, by: ReportBy) -> anyhow::Result<Rendered> {
    let y = "nMAE (%)";
    Ok(match by {
        ReportBy::Month => {
            let t = month_table(report);
            let x: Vec<f64> = (1..=12).map(f64::from).collect();
            let reference: serde_json::Map<String, serde_json::Value> =
                REFERENCE_NMAE.iter().map(|(m, v)| (m.to_string(), json!(v))).collect();
            Rendered {
                csv: t.csv(),
                json: json!({
                    "by": "month",
                    "columns": t.columns,
                    "models": tables_json(report, |m| json!(m.by_month)),
                    "overall": tables_json(report, |m| json!(m.hour_weighted)),
                    "reference_avg_nmae": reference,
                    "reference_note": "Published averages from a proprietary 32-plant fleet with commercial weather feeds; reference context only, not reproducible targets.",
                }),
                svg: svg::line_chart("Monthly error (nMAE)", "month", y, &x, &t.series(12)),
            }
        }
        ReportBy::Plant => {
            let t = plant_table(report);
            let n = report.plants.len();
            Rendered {
                csv: t.csv(),
                json: json!({
                    "by": "plant",
                    "columns": t.columns,
                    "models": tables_json(report, |m| json!(m.by_plant)),
                    "plant_weighted": tables_json(report, |m| json!(m.plant_weighted)),
                }),
                svg: svg::bar_chart("Error by plant (nMAE)", "plant", y, &report.plants, &t.series(n)),
            }
        }
        ReportBy::Csi => {
            let t = csi_table(report);
            Rendered {
                csv: t.csv(),
                json: json!({
                    "by": "csi",
                    "columns": t.columns,
                    "bucket_upper_edges": CSI_BUCKETS,
                    "models": tables_json(report, |m| json!(m.by_csi)),
                }),
                svg: svg::bar_chart("Error by clear-sky index (nMAE)", "clear-sky index", y, &t.columns, &t.series(CSI_BUCKETS.len())),
            }
        }
        ReportBy::Weekly => {
            let mut csv = Vec::new();
            write_weekly(&mut csv, &report.schedule, &report.tables)?;
            let x: Vec<f64> = report.schedule.folds.iter().map(|f| f.index as f64).collect();
            let series: Vec<Series> = report
                .tables
                .models
                .iter()
                .map(|t| Series {
                    name: t.model.name().to_string(),
                    values: t.weekly_nmae.clone(),
                })
                .collect();
            Rendered {
                csv: String::from_utf8(csv)?,
                json: json!({
                    "by": "weekly",
                    "schedule": report.schedule,
                    "models": tables_json(report, |m| json!(m.weekly_nmae)),
                }),
                svg: svg::line_chart("Weekly error (nMAE)", "week", y, &x, &series),
            }
        }
        ReportBy::Density => {
            let mut densities: Vec<(ModelKind, DensityEstimate)> = Vec::new();
            for &m in &report.models {
                match daily_nmbe_density(report, m) {
                    Ok(d) => densities.push((m, d)),
                    Err(e) => eprintln!("skipping {m}: {e}"),
                }
            }
            if densities.is_empty() {
                bail!("no model has enough test days for a bias density");
            }
            let mut csv = String::from("model,nmbe,density\n");
            for (m, d) in &densities {
                for (x, v) in d.grid.iter().zip(&d.density) {
                    let _ = writeln!(csv, "{m},{x},{v}");
                }
            }
            let lo = densities.iter().map(|(_, d)| d.grid[0]).fold(f64::INFINITY, f64::min);
            let hi = densities.iter().map(|(_, d)| d.grid[d.grid.len() - 1]).fold(f64::NEG_INFINITY, f64::max);
            let x: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
            let series: Vec<Series> = densities
                .iter()
                .map(|(m, d)| Series {
                    name: m.name().to_string(),
                    values: x.iter().map(|&v| Some(interpolate(d, v))).collect(),
                })
                .collect();
            let map: serde_json::Map<String, serde_json::Value> =
                densities.iter().map(|(m, d)| (m.name().to_string(), json!(d))).collect();
            Rendered {
                csv,
                json: json!({ "by": "density", "models": map }),
                svg: svg::line_chart("Daily bias density", "daily nMBE (%)", "density", &x, &series),
            }
        }
    })
}

pub fn report(common: &Common, dir: Option<&Path>, by: ReportBy) -> anyhow::Result<u8> {
    let dir = backtest_dir(common, dir)?;
    let out = common.out.clone().unwrap_or_else(|| dir.join(REPORT_DIR));
    let stem = format!("by_{}", by.name());
    let files = vec![format!("{stem}.csv"), format!("{stem}.json"), format!("{stem}.svg")];
    let manifest_name = format!("{stem}.manifest.json");
    let mut all = files.clone();
    all.push(manifest_name.clone());

    let mut manifest = Manifest::new("report", None, None);
    let report = load_report(&dir, &mut manifest)?;
    common.prepare_output(&out, &all)?;
    let r = render(&report, by)?;
    let json = serde_json::to_string_pretty(&r.json)?;
    write_file(&out.join(&files[0]), |w| w.write_all(r.csv.as_bytes()))?;
    write_file(&out.join(&files[1]), |w| writeln!(w, "{json}"))?;
    write_file(&out.join(&files[2]), |w| w.write_all(r.svg.as_bytes()))?;
    manifest.add_outputs(&out, &files)?;
    manifest.write(&out.join(manifest_name))?;
    eprintln!("wrote {} report to {}", by.name(), out.display());
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub model_a: ModelKind,
    pub model_b: ModelKind,
    /// Hours where both models produced a forecast.
    pub n_pairs: usize,
    pub a: MetricReport,
    pub b: MetricReport,
    /// nMAE of `a` minus nMAE of `b` on the paired hours, in percent.
    pub nmae_delta: f64,
    /// Wilcoxon test on the paired hourly absolute errors.
    pub significance: SignificanceResult,
}

/// Pairs the two models' hourly absolute errors and tests them.
pub fn compare_models(report: &BacktestReport, a: ModelKind, b: ModelKind) -> anyhow::Result<Comparison> {
    for m in [a, b] {
        if !report.models.contains(&m) {
            return Err(usage(EvalError::UnknownModel(m.name().into()).to_string()));
        }
    }
    let b_hours: BTreeMap<(&str, Timestamp), f64> = report
        .records(b)
        .filter_map(|r| Some(((r.plant_id.as_str(), r.timestamp), r.forecast?)))
        .collect();
    let (mut fa, mut fb, mut meas, mut nom) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in report.records(a) {
        let (Some(x), Some(&y)) = (r.forecast, b_hours.get(&(r.plant_id.as_str(), r.timestamp))) else {
            continue;
        };
        fa.push(x);
        fb.push(y);
        meas.push(r.measured);
        nom.push(r.nominal);
    }
    let ma = compute_metrics(&fa, &meas, &nom)?;
    let mb = compute_metrics(&fb, &meas, &nom)?;
    let ea: Vec<f64> = fa.iter().zip(&meas).map(|(f, m)| (f - m).abs()).collect();
    let eb: Vec<f64> = fb.iter().zip(&meas).map(|(f, m)| (f - m).abs()).collect();
    let significance = wilcoxon_signed_rank(&ea, &eb)?;
    Ok(Comparison {
        model_a: a,
        model_b: b,
        n_pairs: fa.len(),
        nmae_delta: ma.nmae - mb.nmae,
        a: ma,
        b: mb,
        significance,
    })
}

pub fn compare(common: &Common, dir: &Path, a: ModelKind, b: ModelKind) -> anyhow::Result<u8> {
    let out = common.out.clone().unwrap_or_else(|| dir.join(COMPARE_DIR));
    let stem = format!("{a}_vs_{b}");
    let file = format!("{stem}.json");
    let manifest_name = format!("{stem}.manifest.json");

    let mut manifest = Manifest::new("compare", None, None);
    let report = load_report(dir, &mut manifest)?;
    let cmp = compare_models(&report, a, b)?;
    common.prepare_output(&out, &[file.clone(), manifest_name.clone()])?;
    let json = serde_json::to_string_pretty(&cmp)?;
    write_file(&out.join(&file), |w| writeln!(w, "{json}"))?;
    manifest.add_outputs(&out, &[file])?;
    manifest.write(&out.join(manifest_name))?;
    println!("{json}");
    Ok(EXIT_OK)
}

/// Maps an error to its documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<crate::config::UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}
