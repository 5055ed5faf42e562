//! Experiment configuration.
//!
//! Configurations are TOML documents with nested sections. Every run echoes
//! its configuration back into the human-readable summary in canonical form,
//! and the echo parses to the same configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Build an index-set profile for one source pair and save it.
    Construct,
    /// Sample blocks and compress them; saves the last wire-format payload.
    Encode,
    /// Sample (x, y) blocks, compress, decompress, and count block errors.
    Decode,
    /// Multi-decoder chained compression with per-decoder side information.
    ChainSim,
    /// Joint source-channel transmission over a broadcast channel.
    JsccSim,
    /// Construction across several block lengths; reports polarized
    /// fractions in the rate column.
    Sweep,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Construct => "construct",
            Mode::Encode => "encode",
            Mode::Decode => "decode",
            Mode::ChainSim => "chain-sim",
            Mode::JsccSim => "jscc-sim",
            Mode::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default = "default_characteristic")]
    pub characteristic: u32,
    #[serde(default = "default_degree")]
    pub degree: u32,
}

fn default_characteristic() -> u32 {
    2
}

fn default_degree() -> u32 {
    1
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            characteristic: 2,
            degree: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Binary symmetric cross-over with probability `param`.
    Bsc,
    /// Binary erasure with probability `param`.
    Bec,
    /// Side letter equals the source letter.
    Perfect,
    /// Side letter independent of the source letter.
    Uninformative,
    /// Explicit joint table, rows indexed by source letter.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Bsc,
    Bec,
    Identity,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// Keep indices whose error probability is at most `theta`.
    Threshold,
    /// Size the compressed part at ceil(N * (H + delta)) symbols, H taken
    /// as the largest conditional entropy among the decoders.
    TargetSize,
}

impl RuleKind {
    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::Threshold => "threshold",
            RuleKind::TargetSize => "target-size",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    /// Exact density evolution with posterior merging.
    Exact,
    /// Seeded Monte-Carlo estimation.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    /// Block length; a power of two.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Words per chain segment.
    #[serde(default = "default_t")]
    pub t: usize,
    /// Decoder count.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_rule")]
    pub rule: RuleKind,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_construction")]
    pub construction: ConstructionKind,
    #[serde(default = "default_construction_trials")]
    pub construction_trials: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_n() -> usize {
    8
}

fn default_t() -> usize {
    2
}

fn default_k() -> usize {
    1
}

fn default_rule() -> RuleKind {
    RuleKind::TargetSize
}

fn default_theta() -> f64 {
    1e-3
}

fn default_delta() -> f64 {
    0.15
}

fn default_construction() -> ConstructionKind {
    ConstructionKind::Exact
}

fn default_construction_trials() -> usize {
    10_000
}

fn default_budget() -> usize {
    polarsw::construction::DEFAULT_STATE_BUDGET
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            n: default_n(),
            t: default_t(),
            k: default_k(),
            rule: default_rule(),
            theta: default_theta(),
            delta: default_delta(),
            construction: default_construction(),
            construction_trials: default_construction_trials(),
            budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsccConfig {
    /// Channel symbols per source symbol.
    pub kappa: f64,
    /// Channel input prior, one entry per field element.
    pub prior: Vec<f64>,
    /// One channel per user.
    pub channels: Vec<ChannelConfig>,
    /// Error-probability ceiling for a channel coordinate to carry payload.
    #[serde(default = "default_jscc_theta")]
    pub theta: f64,
    /// Distance from the guessing ceiling under which a coordinate still
    /// counts as a priori uniform.
    #[serde(default = "default_jscc_theta_high")]
    pub theta_high: f64,
    /// Seed stream shared by the encoder and all decoders.
    #[serde(default)]
    pub shared_seed: u64,
}

fn default_jscc_theta() -> f64 {
    0.01
}

fn default_jscc_theta_high() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Block lengths to construct, in order.
    pub ns: Vec<usize>,
    /// A coordinate counts as polarized when its error probability is at
    /// most this.
    #[serde(default = "default_pe_threshold")]
    pub pe_threshold: f64,
}

fn default_pe_threshold() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Master seed; every random quantity in a run derives from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trials: usize,
    /// Worker threads; 0 picks the runtime default.
    #[serde(default)]
    pub workers: usize,
    /// Output path prefix for the CSV, summary, and artifacts.
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceConfig>,
    #[serde(default)]
    pub code: CodeConfig,
    /// Per-decoder source pairs for chain-sim and jscc-sim; when absent,
    /// `source` is replicated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decoders: Vec<SourceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jscc: Option<JsccConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_out() -> String {
    "report".to_string()
}

/// Parses a TOML document and checks cross-field requirements.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Canonical serialization; parses back to an equal configuration.
pub fn echo_config(config: &ExperimentConfig) -> String {
    toml::to_string_pretty(config).expect("configuration serializes")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.code.n;
        if n < 2 || !n.is_power_of_two() {
            return Err(ConfigError(format!(
                "code.n must be a power of two of at least 2, got {n}"
            )));
        }
        if self.code.t == 0 {
            return Err(ConfigError("code.t must be at least 1".into()));
        }
        if self.code.k == 0 {
            return Err(ConfigError("code.k must be at least 1".into()));
        }
        if !(self.code.delta.is_finite() && self.code.delta >= 0.0) {
            return Err(ConfigError(format!(
                "code.delta must be non-negative, got {}",
                self.code.delta
            )));
        }
        let needs_source = matches!(
            self.mode,
            Mode::Construct | Mode::Encode | Mode::Decode | Mode::Sweep
        );
        if needs_source && self.source.is_none() {
            return Err(ConfigError(format!(
                "mode {} requires a [source] section",
                self.mode.name()
            )));
        }
        if matches!(self.mode, Mode::ChainSim | Mode::JsccSim) {
            let have = if self.decoders.is_empty() {
                usize::from(self.source.is_some()) * self.code.k
            } else {
                self.decoders.len()
            };
            if have != self.code.k {
                return Err(ConfigError(format!(
                    "mode {} needs {} decoder sources ([[decoders]] entries or a \
                     [source] to replicate), got {have}",
                    self.mode.name(),
                    self.code.k
                )));
            }
        }
        if self.mode == Mode::JsccSim {
            let Some(jscc) = &self.jscc else {
                return Err(ConfigError("mode jscc-sim requires a [jscc] section".into()));
            };
            if jscc.channels.len() != self.code.k {
                return Err(ConfigError(format!(
                    "jscc.channels must list {} channels, got {}",
                    self.code.k,
                    jscc.channels.len()
                )));
            }
        }
        if self.mode == Mode::Sweep {
            let Some(sweep) = &self.sweep else {
                return Err(ConfigError("mode sweep requires a [sweep] section".into()));
            };
            if sweep.ns.is_empty() {
                return Err(ConfigError("sweep.ns must be non-empty".into()));
            }
            for &n in &sweep.ns {
                if n < 2 || !n.is_power_of_two() {
                    return Err(ConfigError(format!(
                        "sweep.ns entries must be powers of two of at least 2, got {n}"
                    )));
                }
            }
        }
        for (i, source) in self
            .source
            .iter()
            .chain(self.decoders.iter())
            .enumerate()
        {
            validate_source(source, i)?;
        }
        Ok(())
    }

    /// The mandatory master seed.
    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError("master seed is mandatory (config `seed` or --seed)".into()))
    }
}

fn validate_source(source: &SourceConfig, position: usize) -> Result<(), ConfigError> {
    match source.kind {
        SourceKind::Bsc | SourceKind::Bec => {
            let Some(p) = source.param else {
                return Err(ConfigError(format!(
                    "source #{position}: kind {:?} requires `param`",
                    source.kind
                )));
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError(format!(
                    "source #{position}: param must lie in [0, 1], got {p}"
                )));
            }
        }
        SourceKind::Table => {
            if source.table.is_none() {
                return Err(ConfigError(format!(
                    "source #{position}: kind table requires `table`"
                )));
            }
        }
        SourceKind::Perfect | SourceKind::Uninformative => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "decode"
seed = 7
trials = 10

[source]
kind = "bsc"
param = 0.11
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = parse_config(MINIMAL).unwrap();
        assert_eq!(config.mode, Mode::Decode);
        assert_eq!(config.seed, Some(7));
        assert_eq!(config.code.n, 8);
        assert_eq!(config.code.delta, 0.15);
        assert_eq!(config.field.characteristic, 2);
        assert_eq!(config.out, "report");
    }

    #[test]
    fn echo_round_trips() {
        let config = parse_config(MINIMAL).unwrap();
        let echoed = echo_config(&config);
        let reparsed = parse_config(&echoed).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn seed_is_mandatory() {
        let config = parse_config("mode = \"sweep\"\n[source]\nkind = \"perfect\"\n[sweep]\nns = [4]\n")
            .unwrap();
        assert!(config.seed().is_err());
    }

    #[test]
    fn field_level_messages() {
        let err = parse_config("mode = \"decode\"\nseed = 1\n[source]\nkind = \"bsc\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("param"), "{err}");

        let err = parse_config(
            "mode = \"decode\"\nseed = 1\n[source]\nkind = \"bsc\"\nparam = 0.1\n[code]\nn = 100\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("code.n"), "{err}");

        let err = parse_config("mode = \"decode\"\nseed = 1\nbogus = 3\n[source]\nkind = \"perfect\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn chain_sim_needs_matching_decoders() {
        let text = r#"
mode = "chain-sim"
seed = 1
[code]
k = 2
[[decoders]]
kind = "bsc"
param = 0.05
"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("decoder sources"), "{err}");
    }

    #[test]
    fn jscc_needs_its_section() {
        let text = r#"
mode = "jscc-sim"
seed = 1
[source]
kind = "bsc"
param = 0.05
"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("jscc"), "{err}");
    }
}
