//! Run configuration, its JSON schema and the metadata block embedded in every output.

use std::path::Path;

use o2bp::montecarlo::{ImportanceMode, MartingaleFunctional, StationaryConfig, TestFunctional};
use o2bp::{EnsembleConfig, HitTarget, O2bpParams, StartSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "o2bp";
pub const DEFAULT_SEED: u64 = 0;
pub const SEED_ENV: &str = "O2BP_DEFAULT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: O2bpParams,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub simulate: SimulateSettings,
    #[serde(default)]
    pub hitting: HittingSettings,
    #[serde(default)]
    pub stationary: StationaryConfig,
    #[serde(default)]
    pub martingale: MartingaleSettings,
    #[serde(default)]
    pub importance: ImportanceSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseSettings>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    /// Record every `stride`-th grid point.
    pub stride: usize,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingSettings {
    pub which: HitTarget,
}

impl Default for HittingSettings {
    fn default() -> Self {
        Self { which: HitTarget::Corner }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleSettings {
    pub functional: MartingaleFunctional,
    pub times: Vec<f64>,
    pub box_k: f64,
}

impl Default for MartingaleSettings {
    fn default() -> Self {
        Self {
            functional: MartingaleFunctional::PowerProduct,
            times: vec![0.5, 1.0, 2.0],
            box_k: o2bp::montecarlo::DEFAULT_BOX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceSettings {
    pub mode: ImportanceMode,
    pub functional: TestFunctional,
}

impl Default for ImportanceSettings {
    fn default() -> Self {
        Self { mode: ImportanceMode::Prop81, functional: TestFunctional::ExpNegSum }
    }
}

/// A parameter that a phase grid can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Alpha,
    Beta,
    Gamma,
    Delta,
    Rho,
    Theta,
    Eta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::Beta => "beta",
            Self::Gamma => "gamma",
            Self::Delta => "delta",
            Self::Rho => "rho",
            Self::Theta => "theta",
            Self::Eta => "eta",
        }
    }

    pub fn set(self, p: &mut O2bpParams, v: f64) {
        let slot = match self {
            Self::Alpha => &mut p.alpha,
            Self::Beta => &mut p.beta,
            Self::Gamma => &mut p.gamma,
            Self::Delta => &mut p.delta,
            Self::Rho => &mut p.rho,
            Self::Theta => &mut p.theta,
            Self::Eta => &mut p.eta,
        };
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub axis: Axis,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl AxisSpec {
    /// Grid point `lo + (hi - lo) i / (steps - 1)`; a single step sits at `lo`.
    pub fn value(&self, i: usize) -> f64 {
        if self.steps <= 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
        }
    }
}

/// What each phase-diagram cell reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseCell {
    Existence,
    Corner,
    XEdge,
    YEdge,
    Stationary,
    Skew,
    /// Monte Carlo frequency of the configured hitting target.
    Hitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSettings {
    /// Columns.
    pub x: AxisSpec,
    /// Rows; a single row when absent.
    pub y: Option<AxisSpec>,
    pub cell: PhaseCell,
}

/// Pass/fail thresholds applied to run summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest accepted Kolmogorov-Smirnov distance.
    pub ks_max: f64,
    /// Largest accepted `|corr(W, Z)|` for the beta-gamma transform.
    pub corr_max: f64,
    /// Standard errors allowed between an estimate and its target.
    pub se_multiple: f64,
    /// Lower bound on a hitting frequency, if any.
    pub hit_min: Option<f64>,
    /// Upper bound on a hitting frequency, if any.
    pub hit_max: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ks_max: 0.02, corr_max: 0.05, se_multiple: 3.0, hit_min: None, hit_max: None }
    }
}

impl RunConfig {
    /// Built-in defaults; stationary runs start from the stationary law.
    pub fn defaults(command: &str, seed: u64) -> Self {
        let start = match command {
            "stationary" => StartSpec::StationaryDraw,
            _ => StartSpec::Point { x: 1.0, y: 1.0 },
        };
        Self {
            schema_version: SCHEMA_VERSION,
            params: O2bpParams::new(1.0, 0.0, 0.0, 1.0, 0.0),
            ensemble: EnsembleConfig::new(1000, seed, 1.0, start),
            simulate: SimulateSettings::default(),
            hitting: HittingSettings::default(),
            stationary: StationaryConfig::default(),
            martingale: MartingaleSettings::default(),
            importance: ImportanceSettings::default(),
            phase: None,
            tolerances: Tolerances::default(),
        }
    }

    /// Reads a config from a bare config file, a JSON summary, or a CSV whose first
    /// line is `# ` followed by a metadata block.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let json = match text.strip_prefix("# ") {
            Some(rest) => rest.lines().next().unwrap_or_default(),
            None => text.as_str(),
        };
        let value: Value =
            serde_json::from_str(json).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let value = match value {
            Value::Object(mut m) if m.contains_key("metadata") => {
                m.remove("metadata").and_then(|mut md| md.get_mut("config").map(Value::take))
            }
            Value::Object(mut m) if m.contains_key("tool") => m.remove("config"),
            v => Some(v),
        }
        .ok_or_else(|| CliError::Input(format!("{}: no config found in metadata", path.display())))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let version = value.get("schema_version").and_then(Value::as_u64);
        if version != Some(u64::from(SCHEMA_VERSION)) {
            return Err(CliError::Input(format!(
                "schema_version must be {SCHEMA_VERSION} (got {})",
                version.map_or("none".to_string(), |v| v.to_string())
            )));
        }
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("config: {e}")))
    }
}

/// Seed precedence: flag, then config file, then `O2BP_DEFAULT_SEED`, then 0.
pub fn fallback_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{SEED_ENV} must be a nonnegative integer (got {s:?})"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Metadata {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed: config.ensemble.seed,
            config: config.clone(),
        }
    }

    /// The single-line `# {...}` header written at the top of CSV outputs.
    pub fn csv_header(&self) -> String {
        format!("# {}\n", serde_json::to_string(self).expect("metadata serializes"))
    }
}
