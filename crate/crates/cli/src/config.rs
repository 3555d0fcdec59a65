use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pagectx::corpus::SplitName;
use pagectx::encoder::EncoderConfig;
use pagectx::seqbaselines::{BiLstmConfig, CrfFitConfig};
use pagectx::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a run reads from its config file. Missing sections take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Cap on the encoder's text vocabulary.
    pub vocab_cap: usize,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub features: FeatureSettings,
    pub crf: CrfFitConfig,
    /// Split whose saved predictions the CRF is fitted on.
    pub crf_fit_split: SplitName,
    pub bilstm: BiLstmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vocab_cap: 60_000,
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            features: FeatureSettings::default(),
            crf: CrfFitConfig::default(),
            crf_fit_split: SplitName::Train,
            bilstm: BiLstmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub vocab_cap: usize,
    pub svd_rank: usize,
    pub seed: u64,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            vocab_cap: 60_000,
            svd_rank: 64,
            seed: 0,
        }
    }
}

/// Reads TOML when the extension says so, JSON otherwise.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let parsed = if is_toml {
        toml::from_str(&text).map_err(anyhow::Error::from)
    } else {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed.map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

pub fn load_run_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => read_config(p),
        None => Ok(RunConfig::default()),
    }
}

/// Bad configuration or arguments; exits with code 2 like a clap usage error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "crf_fit_split = \"validation\"\n[train]\nepochs = 3\n").unwrap();
        let cfg: RunConfig = read_config(&p).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.crf_fit_split, SplitName::Validation);
        assert_eq!(cfg.bilstm, BiLstmConfig::default());
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"trian": {}}"#).unwrap();
        let err = read_config::<RunConfig>(&p).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
