//! Metadata block stamped into every written artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub tool: String,
    pub seed: u64,
    /// SHA-256 of the canonical JSON form of the run configuration.
    pub config_hash: String,
    /// SHA-256 of the raw input bytes.
    pub input_digest: String,
}

impl ArtifactMetadata {
    pub fn new<C: Serialize>(seed: u64, config: &C, input: &[u8]) -> Self {
        let cfg = serde_json::to_vec(config).expect("config serializes");
        Self {
            tool: concat!("labassess ", env!("CARGO_PKG_VERSION")).to_string(),
            seed,
            config_hash: sha256_hex(&cfg),
            input_digest: sha256_hex(input),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
