//! The run configuration document.

use std::fmt;
use std::path::{Path, PathBuf};

use pvbench_core::data::{PrepareOptions, Timestamp};
use pvbench_core::models::{ModelKind, ModelsConfig};
use pvbench_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_ENV: &str = "PVBENCH_CONFIG";

/// Bad configuration or command-line usage; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding plants.csv, availability.csv, weather.csv and power.csv.
    pub dir: PathBuf,
    #[serde(default)]
    pub forecast_providers: Vec<String>,
    #[serde(default)]
    pub measured_provider: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inputs {
    /// Features from forecast weather, the operational setting.
    #[default]
    Forecast,
    /// Features from measured weather.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub models: Vec<ModelKind>,
    pub initial_train_end: Option<Timestamp>,
    pub step_hours: i64,
    pub inputs: Inputs,
    /// Exit 0 even if some (plant, model, fold) fits failed.
    pub tolerate_failures: bool,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            models: ModelKind::METHODS.to_vec(),
            initial_train_end: None,
            step_hours: 168,
            inputs: Inputs::Forecast,
            tolerate_failures: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Run directory; commands write below it unless `--out` is given.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub models: ModelsConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| usage(format!("invalid configuration: {e}")))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(usage(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        match (&cfg.data, &cfg.synth) {
            (Some(_), Some(_)) => return Err(usage("configuration has both [data] and [synth]; choose one")),
            (None, None) => return Err(usage("configuration needs a [data] or a [synth] section")),
            _ => {}
        }
        if let Some(s) = &cfg.synth {
            s.validate().map_err(|e| usage(e.to_string()))?;
        }
        cfg.models.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads `path` and resolves relative paths inside it against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read configuration {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &mut cfg.data {
            d.dir = base.join(&d.dir);
        }
        if let Some(o) = &mut cfg.out {
            *o = base.join(&*o);
        }
        Ok(cfg)
    }

    /// Synth section with the run seed applied.
    pub fn synth_config(&self) -> Option<SynthConfig> {
        self.synth.clone().map(|mut s| {
            s.seed = self.seed;
            s
        })
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        let mut opts = PrepareOptions {
            calibration_end: self.backtest.initial_train_end,
            ..PrepareOptions::default()
        };
        if let Some(d) = &self.data {
            opts.forecast_providers = d.forecast_providers.clone();
            opts.measured_provider = d.measured_provider.clone();
        }
        opts
    }

    /// Output directory of a command: `--out`, else `<out>/<sub>`.
    pub fn output_dir(&self, flag: Option<&Path>, sub: &str) -> anyhow::Result<PathBuf> {
        match (flag, &self.out) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(o)) => Ok(o.join(sub)),
            (None, None) => Err(usage("no output directory: set `out` in the configuration or pass --out")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 3

[synth]
start = "2015-01-01T00:00:00Z"
end = "2015-04-01T00:00:00Z"
n_plants = 2

[backtest]
models = ["gb", "knn"]
initial_train_end = "2015-03-01T00:00:00Z"
"#;

    #[test]
    fn minimal_document() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.backtest.models, vec![ModelKind::Gb, ModelKind::Knn]);
        assert_eq!(cfg.synth_config().unwrap().seed, 3);
        assert_eq!(cfg.backtest.step_hours, 168);
        assert_eq!(cfg.models, ModelsConfig::default());
    }

    #[test]
    fn rejects_bad_documents() {
        let is_usage = |t: &str| RunConfig::parse(t).unwrap_err().downcast_ref::<UsageError>().is_some();
        assert!(is_usage(&MINIMAL.replace("schema_version = 1", "schema_version = 2")));
        assert!(is_usage(&MINIMAL.replace("seed = 3", "seed = 3\nbogus = 1")));
        assert!(is_usage(&format!("{MINIMAL}\n[data]\ndir = \"x\"\n")));
        assert!(is_usage("schema_version = 1\n"));
        assert!(is_usage(&format!("{MINIMAL}\n[models.knn]\nk = 0\n")));
    }
}
