//! The TOML run configuration.

use std::fmt;
use std::path::Path;

use fleet_core::benchmarks::Method;
use fleet_core::dataset::{CsvSchema, SplitMode, SplitSpec, SyntheticScenario};
use fleet_core::decision::{UtilityTable, WindPrior};
use fleet_core::inference::ChainConfig;
use fleet_core::model::ModelSpec;
use fleet_core::prediction::BootstrapConfig;
use serde::Deserialize;

/// A configuration problem, tagged with the key path it concerns.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: Option<SyntheticScenario>,
    pub model: Option<ModelSpec>,
    pub chains: ChainConfig,
    pub split: SplitSection,
    pub data: DataSection,
    pub prediction: PredictionSection,
    pub benchmark: BenchmarkSection,
    pub analysis: AnalysisSection,
    pub decision: DecisionSection,
    pub selection: SelectionSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Share of each task's rows used for training.
    pub fraction: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fraction: 0.7,
            mode: SplitMode::Random,
            seed: 0,
        }
    }
}

impl SplitSection {
    pub fn spec(&self) -> SplitSpec {
        match self.mode {
            SplitMode::Random => SplitSpec::random(self.fraction, self.seed),
            SplitMode::Ordered => SplitSpec::ordered(self.fraction),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub columns: CsvSchema,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionSection {
    pub n_points: usize,
    /// Grid limits; the model's input range when unset.
    pub x_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for PredictionSection {
    fn default() -> Self {
        Self {
            n_points: 101,
            x_range: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub bootstrap: BootstrapConfig,
    pub coral_eps: f64,
    pub methods: Vec<Method>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            bootstrap: BootstrapConfig::default(),
            coral_eps: 1e-6,
            methods: vec![Method::Cp, Method::Crl, Method::Stl, Method::Mtl],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Parameters for the correlation matrix; one per task by default.
    pub selector: Option<String>,
    /// Parameters compared against single-task fits; empty skips the comparison.
    pub reduction: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionSection {
    /// Operating condition whose population predictive drives the decision.
    pub group: usize,
    pub wind: WindPrior,
    pub table: UtilityTable,
    pub n_mc: usize,
    pub n_outer: usize,
    pub n_inner: usize,
    pub seed: u64,
}

impl Default for DecisionSection {
    fn default() -> Self {
        Self {
            group: 1,
            wind: WindPrior::default(),
            table: UtilityTable::default(),
            n_mc: 100_000,
            n_outer: 2000,
            n_inner: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub candidates: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            candidates: (2..=8).collect(),
            folds: 20,
            seed: 0,
        }
    }
}

const SCENARIO_FAMILIES: [&str; 2] = ["truck_hazard", "wind_power"];
const MODEL_FAMILIES: [&str; 2] = ["hazard", "power"];

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("<root>", e.message()))?;
        check_family(&value, "scenario", &SCENARIO_FAMILIES)?;
        check_family(&value, "model", &MODEL_FAMILIES)?;
        let config: Config = serde_path_to_error::deserialize(toml::Value::Table(value)).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::new(if key == "." { "<root>".into() } else { key }, e.into_inner())
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(s) = &self.scenario {
            s.validate().map_err(|e| ConfigError::new("scenario", e))?;
        }
        self.chains.validate().map_err(|e| ConfigError::new("chains", e))?;
        let f = self.split.fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(ConfigError::new("split.fraction", format!("{f} is not inside (0, 1)")));
        }
        if self.prediction.n_points < 2 {
            return Err(ConfigError::new("prediction.n_points", "need at least 2 grid points"));
        }
        if self.benchmark.bootstrap.trials < 1 {
            return Err(ConfigError::new("benchmark.bootstrap.trials", "need at least one trial"));
        }
        if self.benchmark.coral_eps.is_nan() || self.benchmark.coral_eps <= 0.0 {
            return Err(ConfigError::new("benchmark.coral_eps", "must be positive"));
        }
        let d = &self.decision;
        d.table.validate().map_err(|e| ConfigError::new("decision.table", e))?;
        d.wind.validate().map_err(|e| ConfigError::new("decision.wind", e))?;
        for (key, n) in [("decision.n_mc", d.n_mc), ("decision.n_outer", d.n_outer), ("decision.n_inner", d.n_inner)] {
            if n < 1 {
                return Err(ConfigError::new(key, "must be at least 1"));
            }
        }
        if self.selection.candidates.is_empty() || self.selection.candidates.contains(&0) {
            return Err(ConfigError::new("selection.candidates", "need one or more positive basis sizes"));
        }
        if self.selection.folds < 2 {
            return Err(ConfigError::new("selection.folds", "need at least 2 folds"));
        }
        Ok(())
    }

    /// The configured model, else the one matching the scenario, else the
    /// default hazard model.
    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        if let Some(m) = &self.model {
            return Ok(m.clone());
        }
        match &self.scenario {
            Some(SyntheticScenario::TruckHazard(s)) => Ok(ModelSpec::Hazard(fleet_core::hazard::HazardConfig {
                n_basis: s.n_basis,
                x_range: Some(s.x_range),
                ..Default::default()
            })),
            Some(SyntheticScenario::WindPower(_)) => Ok(ModelSpec::Power(Default::default())),
            None => Ok(ModelSpec::Hazard(Default::default())),
        }
    }
}

fn check_family(root: &toml::Table, section: &str, known: &[&str]) -> Result<(), ConfigError> {
    let Some(table) = root.get(section) else {
        return Ok(());
    };
    let key = format!("{section}.family");
    let Some(table) = table.as_table() else {
        return Err(ConfigError::new(section, "expected a table"));
    };
    match table.get("family") {
        None => Err(ConfigError::new(key, format!("missing; expected one of {}", known.join(", ")))),
        Some(toml::Value::String(f)) if known.contains(&f.as_str()) => Ok(()),
        Some(other) => Err(ConfigError::new(
            key,
            format!("unknown family {other}; expected one of {}", known.join(", ")),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c.chains, ChainConfig::default());
        assert_eq!(c.model_spec().unwrap(), ModelSpec::Hazard(Default::default()));
    }

    #[test]
    fn unknown_family_names_the_key() {
        let e = Config::parse("[model]\nfamily = \"weibull\"\n").unwrap_err();
        assert_eq!(e.key, "model.family");
        let e = Config::parse("[scenario]\nfamily = \"boat\"\n").unwrap_err();
        assert_eq!(e.key, "scenario.family");
    }

    #[test]
    fn bad_values_name_their_path() {
        let e = Config::parse("[chains]\nn_chains = \"four\"\n").unwrap_err();
        assert_eq!(e.key, "chains.n_chains");
        let e = Config::parse("[chains]\nn_samples = 0\n").unwrap_err();
        assert_eq!(e.key, "chains");
        let e = Config::parse("[split]\nfraction = 1.5\n").unwrap_err();
        assert_eq!(e.key, "split.fraction");
        let e = Config::parse("[prediction]\nnpoints = 3\n").unwrap_err();
        assert_eq!(e.key, "prediction.npoints");
    }
}
