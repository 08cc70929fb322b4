//! Run configuration files and their resolution into concrete scenarios.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mhe_core::sim::{self, Scenario, ACADEMIC_DEFAULT_CYCLES, ACADEMIC_DEFAULT_PERIOD};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Academic,
    Car,
    Custom,
}

/// Contents of a `--config` file. Every field is optional; omitted fields
/// fall back to the scenario defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_fallback: Option<bool>,
    /// Partial scenario merged over the defaults (objects merge key by key).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overrides: Option<Value>,
    /// Partial estimator setups keyed by label, merged the same way.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub estimator_overrides: BTreeMap<String, Value>,
    /// Complete scenario for `scenario = "custom"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<Scenario>,
}

/// A manifest written by `run` also works as a config: its `config` member
/// is a fully resolved custom configuration.
#[derive(Deserialize)]
struct ManifestConfig {
    config: RunConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let is_manifest = value.get("config").is_some() && value.get("runs").is_some();
        if is_manifest {
            let m: ManifestConfig =
                serde_json::from_value(value).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(m.config)
        } else {
            serde_json::from_value(value).map_err(|e| ConfigError::Invalid(e.to_string()))
        }
    }
}

/// Everything `run` needs, after merging file, flags and defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub reference_fallback: bool,
}

impl ResolvedRun {
    /// Self-contained config that reproduces this run.
    pub fn echo(&self) -> RunConfig {
        RunConfig {
            scenario: Some(ScenarioKind::Custom),
            seeds: Some(self.seeds.clone()),
            out: Some(self.out.clone()),
            reference_fallback: Some(self.reference_fallback),
            custom: Some(self.scenario.clone()),
            ..RunConfig::default()
        }
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, p) => *slot = p.clone(),
    }
}

fn apply_overrides(scenario: Scenario, cfg: &RunConfig) -> Result<Scenario, ConfigError> {
    let mut value =
        serde_json::to_value(&scenario).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if let Some(patch) = &cfg.overrides {
        if !patch.is_object() {
            return Err(ConfigError::Invalid("`overrides` must be an object".into()));
        }
        merge(&mut value, patch);
    }
    for (label, patch) in &cfg.estimator_overrides {
        let list = value["estimators"]
            .as_array_mut()
            .expect("estimators serialize as a list");
        let slot = list
            .iter_mut()
            .find(|e| e["label"] == Value::String(label.clone()))
            .ok_or_else(|| ConfigError::Invalid(format!("no estimator labelled `{label}`")))?;
        merge(slot, patch);
    }
    serde_json::from_value(value).map_err(|e| ConfigError::Invalid(e.to_string()))
}

/// Parses `1..5` (inclusive), `1,2,7` or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let parse = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid seed `{s}`"))
    };
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (parse(lo)?, parse(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(format!("empty seed range `{text}`"));
        }
        Ok((lo..=hi).collect())
    } else {
        text.split(',').map(parse).collect()
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub scenario: Option<ScenarioKind>,
    pub period: Option<usize>,
    pub cycles: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub reference_fallback: bool,
}

/// Output directory precedence: `--out`, then `MHE_LAB_OUT`, then the config
/// file, then `runs`.
pub fn resolve(
    file: Option<RunConfig>,
    flags: FlagOverrides,
    env_out: Option<PathBuf>,
) -> Result<ResolvedRun, ConfigError> {
    let cfg = file.unwrap_or_default();
    let kind = flags
        .scenario
        .or(cfg.scenario)
        .unwrap_or(ScenarioKind::Academic);
    let period = flags
        .period
        .or(cfg.period)
        .unwrap_or(ACADEMIC_DEFAULT_PERIOD);
    let cycles = flags
        .cycles
        .or(cfg.cycles)
        .unwrap_or(ACADEMIC_DEFAULT_CYCLES);
    if kind != ScenarioKind::Academic && (flags.period.is_some() || flags.cycles.is_some()) {
        return Err(ConfigError::Invalid(
            "--period and --cycles apply to the academic scenario only".into(),
        ));
    }
    if period == 0 || cycles == 0 {
        return Err(ConfigError::Invalid(
            "period and cycles must be positive".into(),
        ));
    }
    let base = match kind {
        ScenarioKind::Academic => sim::academic_scenario(period, cycles),
        ScenarioKind::Car => sim::car_scenario(1),
        ScenarioKind::Custom => cfg.custom.clone().ok_or_else(|| {
            ConfigError::Invalid("scenario `custom` needs a `custom` member".into())
        })?,
    };
    if kind != ScenarioKind::Custom && cfg.custom.is_some() {
        return Err(ConfigError::Invalid(
            "`custom` is only allowed with scenario `custom`".into(),
        ));
    }
    let scenario = apply_overrides(base, &cfg)?;
    let model = scenario
        .model
        .build()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    scenario
        .validate(model.as_ref())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let seeds = flags
        .seeds
        .or(cfg.seeds)
        .unwrap_or_else(|| vec![scenario.seed]);
    if seeds.is_empty() {
        return Err(ConfigError::Invalid("seed list is empty".into()));
    }
    let out = flags
        .out
        .or(env_out)
        .or(cfg.out)
        .unwrap_or_else(|| PathBuf::from("runs"));
    Ok(ResolvedRun {
        scenario,
        seeds,
        out,
        reference_fallback: flags.reference_fallback || cfg.reference_fallback.unwrap_or(false),
    })
}
