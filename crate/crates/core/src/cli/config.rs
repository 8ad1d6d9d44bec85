use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::avril::AvrilConfig;
use crate::baselines::{BcConfig, FittedQConfig};
use crate::diffcore::ModelSpec;
use crate::envs::{EnvSpec, StateSpace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Avril,
    Bc,
    Arl,
}

/// Contents of a `--config` file for `train`.
///
/// `avril` holds the joint-training hyperparameters. Behavioural cloning
/// reuses the decoder and optimiser settings found there.
/// Fitted-Q (`arl`) reads its reward from `reward_checkpoint`, a trained
/// joint model, and its own settings from `arl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub method: Method,
    pub env: EnvSpec,
    #[serde(default)]
    pub avril: AvrilConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arl: Option<FittedQConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_checkpoint: Option<PathBuf>,
}

impl TrainConfig {
    pub fn bc_config(&self) -> BcConfig {
        let a = &self.avril;
        BcConfig {
            decoder_form: a.decoder_form,
            beta: a.beta,
            lr: a.lr,
            batch_size: a.batch_size,
            iters: a.max_iters,
            seed: a.seed,
        }
    }

    pub fn seed(&self) -> u64 {
        match (self.method, &self.arl) {
            (Method::Arl, Some(arl)) => arl.seed,
            _ => self.avril.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.avril.seed = seed;
        if let Some(arl) = &mut self.arl {
            arl.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate().map_err(|e| CliError::Config(format!("env: {e}")))?;
        self.avril.validate().map_err(|e| CliError::Config(format!("avril: {e}")))?;
        if self.method == Method::Arl {
            let arl = self.arl.as_ref().ok_or_else(|| CliError::Config("method `arl` needs an `arl` section".into()))?;
            arl.validate().map_err(|e| CliError::Config(format!("arl: {e}")))?;
            if self.reward_checkpoint.is_none() {
                return Err(CliError::Config("method `arl` needs `reward_checkpoint`".into()));
            }
        }
        Ok(())
    }
}

/// Metadata stored as the config of every checkpoint the tool writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCard {
    pub method: Method,
    pub env: EnvSpec,
    pub space: StateSpace,
    pub n_actions: usize,
    /// Present for joint models only.
    pub encoder: Option<ModelSpec>,
    pub decoder: ModelSpec,
    /// Inverse temperature of the imitator's softmax.
    pub beta: f64,
    pub train: TrainConfig,
}

/// A file used by a run together with its SHA-256.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRef {
    pub fn hash(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

/// Everything needed to rerun a training command; written before training starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub demos: FileRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_checkpoint: Option<FileRef>,
    pub artifacts: Artifacts,
}

/// Deserializes JSON, naming the offending field path on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{what}: at `{path}`: {}", e.into_inner()))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text, &format!("{what} {}", path.display()))
}
