//! Configuration-driven orchestration of the imaging and survival chains.

pub mod config;
pub mod manifest;
mod run;
pub mod synth;

pub use config::{PipelineConfig, Stage};
pub use manifest::{leave_one_center_out_splits, CohortManifest, ManifestEntry};
pub use run::{run_pipeline, PatientRecord, RunOptions, RunReport, REPORT_FILE};

use sha2::{Digest, Sha256};

/// Stable per-(stage, key) seed derived from the global seed.
pub fn sub_seed(seed: u64, stage: &str, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([0]);
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
