use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Value(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Seeded driver defects, each labelled with its weakness class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultFlag {
    /// Reads one byte more than requested and silently drops it (CWE-474).
    ExtraReadByte,
    /// Every failure is reported as success (CWE-394).
    SwallowErrorReturn,
    /// Status poll predicate inverted, so every write fails (CWE-480).
    InvertedStatusCheck,
    /// Bus left locked after a NACKed address on read (CWE-460).
    MissingErrorCleanup,
    /// STOP issued while busy: the second back-to-back write never returns (CWE-835).
    StopWhileBusyHang,
}

impl FaultFlag {
    pub const ALL: [FaultFlag; 5] = [
        FaultFlag::ExtraReadByte,
        FaultFlag::SwallowErrorReturn,
        FaultFlag::InvertedStatusCheck,
        FaultFlag::MissingErrorCleanup,
        FaultFlag::StopWhileBusyHang,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultFlag::ExtraReadByte => "extra_read_byte",
            FaultFlag::SwallowErrorReturn => "swallow_error_return",
            FaultFlag::InvertedStatusCheck => "inverted_status_check",
            FaultFlag::MissingErrorCleanup => "missing_error_cleanup",
            FaultFlag::StopWhileBusyHang => "stop_while_busy_hang",
        }
    }

    pub fn cwe(self) -> u32 {
        match self {
            FaultFlag::ExtraReadByte => 474,
            FaultFlag::SwallowErrorReturn => 394,
            FaultFlag::InvertedStatusCheck => 480,
            FaultFlag::MissingErrorCleanup => 460,
            FaultFlag::StopWhileBusyHang => 835,
        }
    }
}

impl fmt::Display for FaultFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultFlag {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultFlag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ConfigError::Value(format!("unknown fault flag `{s}`")))
    }
}

/// Faults enabled for one peripheral family. An absent family applies to
/// every board.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default)]
    pub flags: BTreeSet<FaultFlag>,
}

impl FaultConfig {
    pub fn none() -> Self {
        FaultConfig::default()
    }

    pub fn only(flag: FaultFlag) -> Self {
        FaultConfig {
            family: None,
            flags: BTreeSet::from([flag]),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        FaultConfig::from_json(&read(path)?)
    }

    /// Flags that take effect on a board of `family`.
    pub fn active_for(&self, family: &str) -> BTreeSet<FaultFlag> {
        match &self.family {
            Some(f) if f != family => BTreeSet::new(),
            _ => self.flags.clone(),
        }
    }
}

fn default_family() -> String {
    "sam0".to_string()
}

fn default_overhead() -> u64 {
    30_000
}

fn default_cmd_latency() -> u64 {
    150_000
}

fn default_deadline() -> u64 {
    1_000_000_000
}

fn default_wiring() -> Vec<Option<usize>> {
    (0..4).map(Some).collect()
}

/// Board description of the virtual DUT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutConfig {
    #[serde(default = "default_family")]
    pub family: String,
    /// Frequency error of the DUT's timer clock.
    #[serde(default)]
    pub clock_ppm: f64,
    /// Time one timer handler takes before it toggles its pin.
    #[serde(default = "default_overhead")]
    pub handler_overhead_ns: u64,
    /// Uniform extra handler latency in `[0, handler_jitter_ns]`.
    #[serde(default)]
    pub handler_jitter_ns: u64,
    /// Shell round trip charged to every command.
    #[serde(default = "default_cmd_latency")]
    pub command_latency_ns: u64,
    /// Commands that take longer than this report Timeout.
    #[serde(default = "default_deadline")]
    pub response_deadline_ns: u64,
    /// `wiring[k]` is the reference input driven by DUT pin `k`.
    #[serde(default = "default_wiring")]
    pub wiring: Vec<Option<usize>>,
    /// Feature names the board lacks, e.g. `spi_mode_3`.
    #[serde(default)]
    pub unsupported: BTreeSet<String>,
}

impl Default for DutConfig {
    fn default() -> Self {
        DutConfig {
            family: default_family(),
            clock_ppm: 0.0,
            handler_overhead_ns: default_overhead(),
            handler_jitter_ns: 0,
            command_latency_ns: default_cmd_latency(),
            response_deadline_ns: default_deadline(),
            wiring: default_wiring(),
            unsupported: BTreeSet::new(),
        }
    }
}

impl DutConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: DutConfig = serde_json::from_str(text)?;
        if !cfg.clock_ppm.is_finite() || cfg.clock_ppm.abs() >= 1e6 {
            return Err(ConfigError::Value(format!("clock_ppm {} out of range", cfg.clock_ppm)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        DutConfig::from_json(&read(path)?)
    }

    pub fn supports(&self, feature: &str) -> bool {
        !self.unsupported.contains(feature)
    }
}
