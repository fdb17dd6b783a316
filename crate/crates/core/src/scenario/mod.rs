//! Config-driven scenario runner: parses a TOML scenario file, executes the
//! named experiment on a replica pool, and emits a reproducible report
//! (JSON + CSV tables + optional SVG plots).

pub mod report;
pub mod runs;

use crate::error::{Error, Result};
use report::{emit_report, Report, RunOutput};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// The scenarios the CLI knows about.
pub const SCENARIO_NAMES: [&str; 9] = [
    "theorem1-power",
    "theorem1-exp",
    "theorem1-superexp",
    "lemma6",
    "corollary-l5",
    "chain-moments",
    "theorem2-marginals",
    "density-oracles",
    "edgeworth-scan",
];

/// Parsed scenario file. Unknown top-level keys are rejected; the `params`
/// table is validated against the scenario's own schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 0 lets the pool pick the hardware default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_plots")]
    pub plots: bool,
    #[serde(default)]
    pub params: toml::Table,
}

fn default_seed() -> u64 {
    42
}

fn default_plots() -> bool {
    true
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("cannot parse scenario file: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    fn params_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        let value = toml::Value::Table(self.params.clone());
        value
            .try_into()
            .map_err(|e| Error::Config(format!("invalid params for {}: {e}", self.scenario)))
    }

    /// Validate the scenario name and the parameter table, returning the
    /// fully resolved parameter set as JSON (defaults filled in).
    pub fn validate(&self) -> Result<serde_json::Value> {
        macro_rules! resolve {
            ($ty:ty) => {{
                let p: $ty = self.params_as()?;
                Ok(serde_json::to_value(&p)?)
            }};
        }
        match self.scenario.as_str() {
            "theorem1-power" => resolve!(runs::Theorem1PowerParams),
            "theorem1-exp" => resolve!(runs::Theorem1ExpParams),
            "theorem1-superexp" => resolve!(runs::Theorem1SuperexpParams),
            "lemma6" => resolve!(runs::Lemma6Params),
            "corollary-l5" => resolve!(runs::CorollaryL5Params),
            "chain-moments" => resolve!(runs::ChainMomentsParams),
            "theorem2-marginals" => resolve!(runs::Theorem2MarginalsParams),
            "density-oracles" => resolve!(runs::DensityOraclesParams),
            "edgeworth-scan" => resolve!(runs::EdgeworthScanParams),
            other => Err(Error::UnknownScenario(other.into())),
        }
    }

    /// Execute the scenario (no file IO).
    pub fn execute(&self) -> Result<(serde_json::Value, RunOutput)> {
        let resolved = self.validate()?;
        let output = match self.scenario.as_str() {
            "theorem1-power" => {
                runs::run_theorem1_power(&self.params_as()?, self.seed, self.threads)?
            }
            "theorem1-exp" => runs::run_theorem1_exp(&self.params_as()?, self.seed, self.threads)?,
            "theorem1-superexp" => {
                runs::run_theorem1_superexp(&self.params_as()?, self.seed, self.threads)?
            }
            "lemma6" => runs::run_lemma6(&self.params_as()?, self.seed, self.threads)?,
            "corollary-l5" => runs::run_corollary_l5(&self.params_as()?, self.seed, self.threads)?,
            "chain-moments" => {
                runs::run_chain_moments(&self.params_as()?, self.seed, self.threads)?
            }
            "theorem2-marginals" => {
                runs::run_theorem2_marginals(&self.params_as()?, self.seed, self.threads)?
            }
            "density-oracles" => {
                runs::run_density_oracles(&self.params_as()?, self.seed, self.threads)?
            }
            "edgeworth-scan" => {
                runs::run_edgeworth_scan(&self.params_as()?, self.seed, self.threads)?
            }
            other => return Err(Error::UnknownScenario(other.into())),
        };
        Ok((resolved, output))
    }
}

/// Run a scenario and write its artifacts. Returns the report; the caller
/// maps `report.passed` to the exit code.
pub fn run_scenario(config: &ScenarioConfig, out_override: Option<&Path>) -> Result<Report> {
    let (resolved, output) = config.execute()?;
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| report::default_out_dir(&config.scenario));
    emit_report(
        &out_dir,
        &config.scenario,
        config.seed,
        config.threads,
        resolved,
        &output,
        config.plots,
    )
}
