use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Gate, GateOp};
use crate::experiments::OutputRecord;

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub metric: String,
    pub op: GateOp,
    pub threshold: f64,
    pub observed: Option<f64>,
    pub pass: bool,
}

impl Verdict {
    pub fn evaluate(gate: &Gate, observed: Option<f64>) -> Self {
        Verdict {
            metric: gate.metric.clone(),
            op: gate.op,
            threshold: gate.value,
            observed,
            pass: observed.is_some_and(|v| gate.passes(v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub experiment: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputRecord>,
    pub metrics: std::collections::BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
