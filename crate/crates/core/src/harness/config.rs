//! Experiment configuration file (TOML). Every table rejects unknown keys.
//!
//! ```toml
//! master_seed = 42
//! repeats = 3
//! setups = ["baseline", "centralized_dp", "dp_fl_iid", "dp_fl_noniid"]
//! epsilons = [0.5, 5, 15, 20, 25]
//! delta = 1e-5
//!
//! [corpus]
//! path = "corpus.txt"          # relative to the config file
//! format = "phrasebank"
//! encoding = "utf8"
//! # or: [corpus.synthetic] size = 3000, seed = 7
//!
//! [model]        # ModelConfig
//! [split]        # train_fraction = "4/5", seed, shuffle
//! [centralized]  # epochs, lot_size, learning_rate, clip_norm
//! [federated]    # num_clients, client_fraction, rounds, local_epochs, ...
//! [partition]    # shard_size, shards_per_client, seed
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusFormat, SplitSpec, TextEncoding};
use crate::dp::DEFAULT_DELTA;
use crate::error::{Error, Result};
use crate::federated::FederatedConfig;
use crate::models::ModelConfig;
use crate::synth::SynthConfig;
use crate::train::CentralConfig;

/// Default privacy-budget sweep.
pub const DEFAULT_EPSILONS: [f64; 5] = [0.5, 5.0, 15.0, 20.0, 25.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    Baseline,
    CentralizedDp,
    DpFlIid,
    DpFlNoniid,
    FlIid,
    FlNoniid,
}

impl Setup {
    pub const ALL: [Setup; 6] = [
        Setup::Baseline,
        Setup::CentralizedDp,
        Setup::DpFlIid,
        Setup::DpFlNoniid,
        Setup::FlIid,
        Setup::FlNoniid,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Setup::Baseline => "baseline",
            Setup::CentralizedDp => "centralized_dp",
            Setup::DpFlIid => "dp_fl_iid",
            Setup::DpFlNoniid => "dp_fl_noniid",
            Setup::FlIid => "fl_iid",
            Setup::FlNoniid => "fl_noniid",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Setup::Baseline => "Baseline",
            Setup::CentralizedDp => "Centralized DP",
            Setup::DpFlIid => "DP-FL IID",
            Setup::DpFlNoniid => "DP-FL Non IID",
            Setup::FlIid => "FL IID",
            Setup::FlNoniid => "FL Non IID",
        }
    }

    pub fn is_private(self) -> bool {
        matches!(self, Setup::CentralizedDp | Setup::DpFlIid | Setup::DpFlNoniid)
    }

    pub fn is_federated(self) -> bool {
        !matches!(self, Setup::Baseline | Setup::CentralizedDp)
    }

    pub fn is_noniid(self) -> bool {
        matches!(self, Setup::DpFlNoniid | Setup::FlNoniid)
    }

    /// The non-private setup a private one is compared against.
    pub fn counterpart(self) -> Setup {
        match self {
            Setup::CentralizedDp => Setup::Baseline,
            Setup::DpFlIid => Setup::FlIid,
            Setup::DpFlNoniid => Setup::FlNoniid,
            other => other,
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Setup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setup::ALL
            .iter()
            .copied()
            .find(|x| x.tag() == s)
            .ok_or_else(|| format!("unknown setup {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSource {
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    pub encoding: TextEncoding,
    pub synthetic: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub shard_size: usize,
    pub shards_per_client: usize,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            shard_size: 240,
            shards_per_client: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub model: ModelConfig,
    pub split: SplitSpec,
    pub setups: Vec<Setup>,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub repeats: usize,
    pub centralized: CentralConfig,
    pub federated: FederatedConfig,
    pub partition: PartitionConfig,
    pub master_seed: u64,
    /// Derive a fresh train/test split for every run instead of using `split.seed`.
    pub resplit_per_run: bool,
    /// Re-execute the first run and require identical results.
    pub determinism_check: bool,
    /// Write one round-trace file per federated run.
    pub round_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusSource::default(),
            model: ModelConfig::default(),
            split: SplitSpec::default(),
            setups: vec![Setup::Baseline, Setup::CentralizedDp, Setup::DpFlIid, Setup::DpFlNoniid],
            epsilons: DEFAULT_EPSILONS.to_vec(),
            delta: DEFAULT_DELTA,
            repeats: 3,
            centralized: CentralConfig::default(),
            federated: FederatedConfig::default(),
            partition: PartitionConfig::default(),
            master_seed: 0,
            resplit_per_run: false,
            determinism_check: true,
            round_traces: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Error::Config(m);
        if self.repeats == 0 {
            return Err(cfg_err("repeats must be at least 1".into()));
        }
        if self.setups.is_empty() {
            return Err(cfg_err("setups must not be empty".into()));
        }
        let mut seen = self.setups.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.setups.len() {
            return Err(cfg_err("setups must not repeat".into()));
        }
        if self.setups.iter().any(|s| s.is_private()) {
            if self.epsilons.is_empty() {
                return Err(cfg_err("epsilons must be non-empty when a DP setup is present".into()));
            }
            if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
                return Err(cfg_err(format!("epsilon {e} must be positive")));
            }
            let mut eps = self.epsilons.clone();
            eps.sort_by(f64::total_cmp);
            eps.dedup();
            if eps.len() != self.epsilons.len() {
                return Err(cfg_err("epsilons must not repeat".into()));
            }
        }
        crate::dp::validate_delta(self.delta).map_err(|e| cfg_err(e.to_string()))?;
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(_), Some(_)) => return Err(cfg_err("corpus: give either path or synthetic, not both".into())),
            (None, None) => return Err(cfg_err("corpus: one of path or synthetic is required".into())),
            _ => {}
        }
        self.model.validate().map_err(|e| cfg_err(format!("model: {e}")))?;
        self.centralized
            .validate()
            .map_err(|e| cfg_err(format!("centralized: {e}")))?;
        self.federated
            .validate()
            .map_err(|e| cfg_err(format!("federated: {e}")))?;
        if self.partition.shard_size == 0 || self.partition.shards_per_client == 0 {
            return Err(cfg_err(
                "partition: shard_size and shards_per_client must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text`, applies `key=value` overrides on dotted paths, then
    /// deserializes and validates. Override keys are checked against the
    /// schema like any other key.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut doc, key, parse_override_value(value))?;
        }
        let cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_with_overrides(&text, overrides)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(e))))?;
        if let Some(p) = cfg.corpus.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Number of summary cells the grid produces.
    pub fn cell_count(&self) -> usize {
        self.setups
            .iter()
            .map(|s| if s.is_private() { self.epsilons.len() } else { 1 })
            .sum()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[corpus.synthetic]\nsize = 100\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.repeats, 3);
        assert_eq!(cfg.epsilons, DEFAULT_EPSILONS.to_vec());
        assert_eq!(cfg.cell_count(), 1 + 3 * 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("bogus = 1\n[corpus.synthetic]\nsize = 100\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::from_toml_str("[corpus.synthetic]\nsize = 100\n[model]\nwidth = 3\n").unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = ExperimentConfig::from_toml_str("repeats = \n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn overrides_apply_on_dotted_paths() {
        let ov = vec![
            ("repeats".to_string(), "1".to_string()),
            ("federated.rounds".to_string(), "4".to_string()),
            ("model.kind".to_string(), "tiny_transformer".to_string()),
            ("split.train_fraction".to_string(), "\"3/4\"".to_string()),
        ];
        let cfg = ExperimentConfig::from_toml_with_overrides(MINIMAL, &ov).unwrap();
        assert_eq!(cfg.repeats, 1);
        assert_eq!(cfg.federated.rounds, 4);
        assert_eq!(cfg.model.kind, crate::models::ModelKind::TinyTransformer);
        assert_eq!(cfg.split.train_fraction.num, 3);
    }

    #[test]
    fn override_of_unknown_key_fails() {
        let ov = vec![("federated.nope".to_string(), "1".to_string())];
        assert!(ExperimentConfig::from_toml_with_overrides(MINIMAL, &ov).is_err());
    }

    #[test]
    fn validation_failures() {
        assert!(ExperimentConfig::from_toml_str("repeats = 0\n[corpus.synthetic]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("epsilons = []\n[corpus.synthetic]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("").is_err());
        assert!(
            ExperimentConfig::from_toml_str("setups = [\"baseline\", \"baseline\"]\n[corpus.synthetic]\n").is_err()
        );
    }

    #[test]
    fn roundtrips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
