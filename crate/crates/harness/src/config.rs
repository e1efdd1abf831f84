//! Versioned JSON run configuration and its canonical hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use mata_core::env::EnvConfig;
use mata_core::irl::{FeatureAblation, IrlConfig};
use mata_core::marl::MarlConfig;

use crate::error::{HarnessError, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Episodes averaged for the headline reward of a run.
pub const TAIL_EPISODES: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    #[serde(default)]
    pub no_gat: bool,
    #[serde(default)]
    pub no_mhsa: bool,
    #[serde(default)]
    pub no_irl: bool,
}

impl Ablation {
    pub fn features(&self) -> FeatureAblation {
        FeatureAblation {
            no_mhsa: self.no_mhsa,
            no_gat: self.no_gat,
        }
    }

    /// `full`, `no-irl`, or the removed components joined by `+`.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.no_irl, "no-irl"), (self.no_gat, "no-gat"), (self.no_mhsa, "no-mhsa")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

/// Where expert demonstrations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSettings {
    /// Demonstration file for `train`; grids generate their own per cell.
    #[serde(default)]
    pub path: Option<PathBuf>,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            path: None,
            episodes: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub env: EnvConfig,
    pub marl: MarlConfig,
    pub irl: IrlConfig,
    #[serde(default)]
    pub ablation: Ablation,
    /// Keep generator and discriminator at their initial weights.
    #[serde(default)]
    pub freeze_irl: bool,
    #[serde(default)]
    pub demos: DemoSettings,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            version: CONFIG_VERSION,
            env: EnvConfig::desk(),
            marl: MarlConfig::desk(),
            irl: IrlConfig::desk(),
            ablation: Ablation::default(),
            freeze_irl: false,
            demos: DemoSettings::default(),
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs"),
        }
    }

    pub fn benchmark() -> Self {
        Self {
            env: EnvConfig::benchmark(),
            marl: MarlConfig::benchmark(),
            irl: IrlConfig::benchmark(),
            ..Self::desk()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == CONFIG_VERSION as u64 => {}
            Some(v) => {
                return Err(HarnessError::Config(format!(
                    "config version {v} is not supported (expected {CONFIG_VERSION})"
                )))
            }
            None => return Err(HarnessError::Config("missing integer field `version`".into())),
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!("unsupported version {}", self.version)));
        }
        self.env.validate()?;
        self.marl.validate()?;
        self.irl.validate()?;
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seed list is empty".into()));
        }
        if !self.ablation.no_irl && self.demos.episodes == 0 {
            return Err(HarnessError::Config("demos.episodes must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form. Keys are sorted, whitespace is
    /// dropped, and `out_dir` and `demos.path` are excluded.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("out_dir");
            if let Some(Value::Object(demos)) = map.get_mut("demos") {
                demos.remove("path");
            }
        }
        let canonical = canonical_json(&value);
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Compact JSON with object keys in sorted order at every level.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}
