//! Run manifests written next to every command's outputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStatus {
    pub id: String,
    pub seed: u64,
    pub status: RunStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub replications: Vec<ReplicationStatus>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: Vec<u64>) -> CliResult<Self> {
        Ok(Self {
            command: command.to_string(),
            config_digest: config_digest(config)?,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            replications: Vec::new(),
            outputs: Vec::new(),
        })
    }
}

/// SHA-256 of the compact JSON form with object keys sorted.
pub fn config_digest<C: Serialize>(config: &C) -> CliResult<String> {
    // serde_json's map is ordered by key, so going through Value sorts fields
    let value = serde_json::to_value(config).map_err(|e| CliError::internal(e.to_string()))?;
    let text = serde_json::to_string(&value).map_err(|e| CliError::internal(e.to_string()))?;
    let hash = Sha256::digest(text.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}
