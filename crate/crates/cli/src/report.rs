//! Versioned JSON report and input digest.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;

pub const SCHEMA: &str = "uniton-lab/1";

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub input: String,
    pub input_digest: String,
    pub config: Config,
    pub verdict: Option<Value>,
    pub results: Value,
    pub checks: Vec<Check>,
}

/// SHA-256 over the command, the input descriptor, the input bytes and the
/// resolved configuration.
pub fn input_digest(command: &str, input: &str, bytes: &[u8], cfg: &Config, extra: &[(&str, String)]) -> String {
    let mut h = Sha256::new();
    h.update(format!("schema={SCHEMA}\ncommand={command}\ninput={input}\n"));
    for (k, v) in extra {
        h.update(format!("{k}={v}\n"));
    }
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(b"\n");
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
