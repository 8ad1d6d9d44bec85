use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{DiffError, Layout, ParamVector};

pub const CHECKPOINT_FORMAT: &str = "avril-checkpoint/1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported checkpoint format {0:?}")]
    Format(String),
    #[error(transparent)]
    Params(#[from] DiffError),
}

/// Model checkpoint: a config plus the raw parameters and their layout.
///
/// Parameters are stored as base64 of the little-endian `f64` bytes, so a
/// save/load cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint<C> {
    pub format: String,
    pub config: C,
    pub layout: Layout,
    #[serde(serialize_with = "encode_params", deserialize_with = "decode_params")]
    pub params: Vec<f64>,
}

impl<C: Serialize + DeserializeOwned> Checkpoint<C> {
    pub fn new(config: C, params: &ParamVector) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config,
            layout: params.layout.clone(),
            params: params.values.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let ckpt: Self = serde_path_to_error::deserialize(de).map_err(|e| CheckpointError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(ckpt.format));
        }
        ckpt.param_vector()?;
        Ok(ckpt)
    }

    pub fn param_vector(&self) -> Result<ParamVector, DiffError> {
        ParamVector::new(self.params.clone(), self.layout.clone())
    }
}

fn encode_params<S: Serializer>(params: &[f64], ser: S) -> Result<S::Ok, S::Error> {
    let bytes: Vec<u8> = params.iter().flat_map(|p| p.to_le_bytes()).collect();
    ser.serialize_str(&STANDARD.encode(bytes))
}

fn decode_params<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
    use serde::de::Error;
    let text = String::deserialize(de)?;
    let bytes = STANDARD.decode(text.as_bytes()).map_err(D::Error::custom)?;
    if bytes.len() % 8 != 0 {
        return Err(D::Error::custom(format!("{} bytes is not a whole number of f64 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
