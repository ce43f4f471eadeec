//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use simmst::data::DEFAULT_FRACTIONS;
use simmst::model::SimMstConfig;
use simmst::training::TrainConfig;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "SIMMST_OUTPUT_ROOT";
/// Name of the resolved configuration written next to run outputs.
pub const RESOLVED_CONFIG_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset directory.
    pub path: Option<PathBuf>,
    /// Share of the series given to each split, in time order.
    pub fractions: [f64; 3],
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, overrides both the model initialization seed and the
    /// training shuffle seed.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub data: DataSection,
    pub model: SimMstConfig,
    pub train: TrainConfig,
}

/// A problem with the user's configuration or arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Closest known key, if any is reasonably similar.
fn suggest<'a>(unknown: &str, known: impl Iterator<Item = &'a String>) -> Option<&'a String> {
    known
        .map(|k| (strsim::jaro_winkler(unknown, k), k))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

/// Walks `given` against the key structure of `reference`, reporting the
/// first key that does not exist, with a suggestion.
fn check_keys(given: &toml::Table, reference: &serde_json::Map<String, Value>, prefix: &str) -> anyhow::Result<()> {
    for (key, value) in given {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match reference.get(key) {
            None => {
                let hint = suggest(key, reference.keys())
                    .map(|s| format!("; did you mean `{s}`?"))
                    .unwrap_or_default();
                return Err(usage(format!("unknown configuration key `{path}`{hint}")));
            }
            Some(Value::Object(inner)) => {
                if let toml::Value::Table(t) = value {
                    check_keys(t, inner, &path)?;
                }
            }
            Some(_) => {}
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses TOML text on top of the defaults. Unknown keys are rejected
    /// with a suggestion; type errors name the offending key.
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| usage(format!("invalid configuration: {e}")))?;
        let reference = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        check_keys(&table, reference.as_object().expect("table"), "")?;
        toml::from_str(text).map_err(|e| usage(format!("invalid configuration: {e}")))
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies the top-level seed and validates every section.
    pub fn finalize(mut self) -> anyhow::Result<Self> {
        if let Some(seed) = self.seed {
            self.model.init_seed = seed;
            self.train.seed = seed;
        }
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn data_path(&self) -> anyhow::Result<&Path> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| usage("no dataset given; pass --data or set data.path"))
    }

    /// `output_dir`, else `<root>/<default_name>` where the root comes from
    /// the environment or defaults to `runs`.
    pub fn output_dir(&self, default_name: &str) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| output_root().join(default_name))
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model.hidden_dim, 32);
        assert_eq!(cfg.model.embed_dim, 40);
        assert_eq!(cfg.model.num_layers, 3);
        assert_eq!(cfg.model.topk, 20);
        assert_eq!(cfg.train.learning_rate, 0.001);
    }

    #[test]
    fn typo_is_rejected_with_suggestion() {
        let err = RunConfig::from_toml("[model]\nhiden_dim = 16\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.hiden_dim") && msg.contains("hidden_dim"), "{msg}");
        assert!(err.downcast_ref::<UsageError>().is_some());
        let err = RunConfig::from_toml("sed = 3\n").unwrap_err();
        assert!(err.to_string().contains("did you mean `seed`"), "{err}");
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = RunConfig::from_toml("[train]\nbatch_size = \"big\"\n").unwrap_err();
        assert!(err.to_string().contains("batch_size"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::from_toml("seed = 4\n[model]\nnum_layers = 2\n[train]\nclip_norm = 5.0\n")
            .unwrap()
            .finalize()
            .unwrap();
        cfg.data.path = Some("data/x".into());
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.model.init_seed, 4);
        assert_eq!(back.train.seed, 4);
    }
}
