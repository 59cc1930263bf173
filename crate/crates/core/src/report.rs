//! Run manifests embedded as `#` header lines in every emitted report.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `SOURCE_DATE_EPOCH` when set (for reproducible output), else the clock.
pub fn run_timestamp() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| DateTime::<Utc>::from_timestamp(s, 0))
        .unwrap_or_else(Utc::now);
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputDigest {
    pub label: String,
    pub source: String,
    pub sha256: String,
}

/// What produced a report: command, flags, seeds, input digests, version and time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub flags: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            flags: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            version: VERSION.to_string(),
            timestamp: run_timestamp(),
        }
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    /// Records an input by content; `source` is a path or `bundled`.
    pub fn input(&mut self, label: &str, source: &str, bytes: &[u8]) -> &mut Self {
        self.inputs.push(InputDigest { label: label.to_string(), source: source.to_string(), sha256: digest(bytes) });
        self
    }

    pub fn header(&self) -> String {
        let mut out = format!(
            "# xlres {} command={} timestamp={}\n",
            self.version, self.command, self.timestamp
        );
        for (k, v) in &self.flags {
            out.push_str(&format!("# flag {k}={v}\n"));
        }
        for (k, v) in &self.seeds {
            out.push_str(&format!("# seed {k}={v}\n"));
        }
        for i in &self.inputs {
            out.push_str(&format!("# input {}={} sha256={}\n", i.label, i.source, i.sha256));
        }
        out
    }

    /// `body` with the manifest header prepended.
    pub fn embed(&self, body: &str) -> String {
        let mut out = self.header();
        out.push_str(body);
        out
    }
}
