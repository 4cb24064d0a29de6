//! Run configuration: a TOML file with one section per component.

use std::fmt;
use std::path::{Path, PathBuf};

use qbelief_core::drqn::DrqnConfig;
use qbelief_core::envs::{augment_irrelevant, HikeParams, MountainHike, TMaze, TMazeParams};
use qbelief_core::nn::CellKind;
use qbelief_core::protocol::{BeliefModel, ProtocolConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Shipped configuration holding every reference hyperparameter.
pub const DEFAULTS_TOML: &str = include_str!("../configs/defaults.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    Tmaze {
        length: usize,
        #[serde(default)]
        stochasticity: f64,
        /// Number of appended random-walk coordinates.
        #[serde(default)]
        irrelevant: usize,
    },
    Hike {
        #[serde(default)]
        varying_orientation: bool,
        #[serde(default)]
        irrelevant: usize,
    },
}

impl EnvConfig {
    /// Short identifier used in file names and CSV rows.
    pub fn id(&self) -> String {
        let (base, irrelevant) = match self {
            EnvConfig::Tmaze {
                length,
                stochasticity,
                irrelevant,
            } => {
                let prefix = if *stochasticity > 0.0 {
                    "stochastic-tmaze"
                } else {
                    "tmaze"
                };
                (format!("{prefix}-l{length}"), *irrelevant)
            }
            EnvConfig::Hike {
                varying_orientation,
                irrelevant,
            } => {
                let base = if *varying_orientation { "varying-hike" } else { "hike" };
                (base.to_string(), *irrelevant)
            }
        };
        if irrelevant > 0 {
            format!("{base}-irr{irrelevant}")
        } else {
            base
        }
    }

    /// Builds the environment and hands it to `visitor`.
    pub fn with_model<V: ModelVisitor>(&self, visitor: V) -> qbelief_core::Result<V::Output> {
        let id = self.id();
        match *self {
            EnvConfig::Tmaze {
                length,
                stochasticity,
                irrelevant,
            } => {
                let model = TMaze::new(TMazeParams::stochastic(length, stochasticity))?;
                if irrelevant == 0 {
                    Ok(visitor.visit(&id, &model))
                } else {
                    Ok(visitor.visit(&id, &augment_irrelevant(model, irrelevant)?))
                }
            }
            EnvConfig::Hike {
                varying_orientation,
                irrelevant,
            } => {
                let params = if varying_orientation {
                    HikeParams::varying()
                } else {
                    HikeParams::fixed()
                };
                let model = MountainHike::new(params)?;
                if irrelevant == 0 {
                    Ok(visitor.visit(&id, &model))
                } else {
                    Ok(visitor.visit(&id, &augment_irrelevant(model, irrelevant)?))
                }
            }
        }
    }
}

/// Code that is generic over the environment type.
pub trait ModelVisitor {
    type Output;
    fn visit<P>(self, env_id: &str, model: &P) -> Self::Output
    where
        P: BeliefModel + Sync,
        P::Observation: Send + Sync;
}

fn default_cells() -> Vec<CellKind> {
    vec![CellKind::Gru]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_cells")]
    pub cells: Vec<CellKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Size of the job pool; 0 uses every available core.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub env: EnvConfig,
    #[serde(default)]
    pub drqn: DrqnConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config at `{path}`: {reason}")]
    Invalid { path: String, reason: String },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, reason: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

fn scoped(prefix: &str, e: qbelief_core::Error) -> ConfigError {
    match e {
        qbelief_core::Error::InvalidConfig { field, reason } => {
            ConfigError::invalid(format!("{prefix}.{field}"), reason)
        }
        other => ConfigError::invalid(prefix, other),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn defaults() -> Self {
        Self::from_toml_str(DEFAULTS_TOML).expect("shipped defaults parse")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Git-style content hash of the resolved configuration.
    pub fn hash(&self) -> String {
        content_hash(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cells.is_empty() {
            return Err(ConfigError::invalid("cells", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "must not be empty"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::invalid("seeds", "must be distinct"));
        }
        let mut cells = self.cells.clone();
        cells.sort_by_key(|c| c.name());
        if cells.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::invalid("cells", "must be distinct"));
        }
        match self.env {
            EnvConfig::Tmaze {
                length, stochasticity, ..
            } => {
                if length == 0 {
                    return Err(ConfigError::invalid("env.length", "must be positive"));
                }
                if !(0.0..1.0).contains(&stochasticity) {
                    return Err(ConfigError::invalid("env.stochasticity", "must lie in [0, 1)"));
                }
            }
            EnvConfig::Hike { .. } => {}
        }
        self.drqn.validate().map_err(|e| scoped("drqn", e))?;
        self.protocol.mine.validate().map_err(|e| scoped("protocol.mine", e))?;
        self.protocol.validate().map_err(|e| scoped("protocol", e))?;
        self.env
            .with_model(HorizonCheck(&self.drqn))
            .map_err(|e| scoped("env", e))?
            .map_err(|e| scoped("drqn", e))?;
        Ok(())
    }
}

struct HorizonCheck<'a>(&'a DrqnConfig);

impl ModelVisitor for HorizonCheck<'_> {
    type Output = qbelief_core::Result<usize>;

    fn visit<P>(self, _: &str, model: &P) -> Self::Output
    where
        P: BeliefModel + Sync,
        P::Observation: Send + Sync,
    {
        self.0.resolve_horizon(model)
    }
}

/// SHA-256 over a git blob header followed by the bytes, as lowercase hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_validate_and_hold_the_reference_values() {
        let c = RunConfig::defaults();
        c.validate().unwrap();
        assert_eq!(c.drqn, DrqnConfig::default());
        assert_eq!(c.protocol, ProtocolConfig::default());
        assert_eq!(c.drqn.hidden, 32);
        assert_eq!(c.protocol.mine.width, 256);
        assert_eq!(c.protocol.mine.dataset_size, 10_000);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::defaults();
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "[env]\nkind = \"tmaze\"\nlength = 3\ncolour = 1\n";
        assert!(matches!(RunConfig::from_toml_str(text), Err(ConfigError::Parse(_))));
        let text = "[env]\nkind = \"tmaze\"\nlength = 3\n[drqn]\nhiden = 3\n";
        assert!(matches!(RunConfig::from_toml_str(text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn validation_reports_the_field_path() {
        let mut c = RunConfig::defaults();
        c.protocol.mine.width = 0;
        let ConfigError::Invalid { path, .. } = c.validate().unwrap_err() else {
            panic!()
        };
        assert_eq!(path, "protocol.mine.width");

        let mut c = RunConfig::defaults();
        c.drqn.batch_size = 0;
        let ConfigError::Invalid { path, .. } = c.validate().unwrap_err() else {
            panic!()
        };
        assert_eq!(path, "drqn.batch_size");

        let mut c = RunConfig::defaults();
        c.env = EnvConfig::Tmaze {
            length: 0,
            stochasticity: 0.0,
            irrelevant: 0,
        };
        let ConfigError::Invalid { path, .. } = c.validate().unwrap_err() else {
            panic!()
        };
        assert_eq!(path, "env.length");
    }

    #[test]
    fn env_ids() {
        let t = EnvConfig::Tmaze {
            length: 10,
            stochasticity: 0.0,
            irrelevant: 1,
        };
        assert_eq!(t.id(), "tmaze-l10-irr1");
        let h = EnvConfig::Hike {
            varying_orientation: true,
            irrelevant: 0,
        };
        assert_eq!(h.id(), "varying-hike");
    }

    #[test]
    fn content_hash_matches_git_blob_convention() {
        // sha256 of the bytes `blob 5\0hello`
        assert_eq!(
            content_hash(b"hello"),
            "8aec4e4876f854f688d0ebfc8f37598f38e5fd6903cccc850ca36591175aeb60"
        );
    }
}
