//! Suite manifests, the case runner, timing statistics and reports.

pub mod manifest;
pub mod report;
pub mod runner;
pub mod stats;

use thiserror::Error;

use crate::dut::FaultFlag;

pub use manifest::{Approx, Category, DutExpect, RefSpan, Step, Suite, SuiteKind, TestCase};
pub use report::{CaseReport, ReportFormat, TestReport, Totals, Verdict};
pub use runner::{read_trace, run_on_bench, RunConfig, Runner, TracedEvent, DEFAULT_PPM_THRESHOLD};
pub use stats::{compute_timing_stats, linear_fit, StatsError, TimingStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("bad suite manifest: {0}")]
    Manifest(String),
    #[error("unknown report format `{0}` (expected json or table)")]
    Format(String),
    #[error("infrastructure: {0}")]
    Infrastructure(String),
}

/// The suite and category expected to catch each seeded fault.
pub fn detecting_category(flag: FaultFlag) -> (SuiteKind, Category) {
    match flag {
        FaultFlag::ExtraReadByte => (SuiteKind::I2c, Category::Usage),
        FaultFlag::SwallowErrorReturn => (SuiteKind::I2c, Category::Negative),
        FaultFlag::InvertedStatusCheck => (SuiteKind::I2c, Category::Usage),
        FaultFlag::MissingErrorCleanup => (SuiteKind::I2c, Category::Recovery),
        FaultFlag::StopWhileBusyHang => (SuiteKind::I2c, Category::Usage),
    }
}
