use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::{Category, SuiteKind};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: String,
    pub category: Category,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub measured: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub pass: usize,
    pub fail: usize,
    pub skip: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub suite: SuiteKind,
    pub seed: u64,
    pub cases: Vec<CaseReport>,
    pub totals: Totals,
    /// Set when the suite could not run to completion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infrastructure_error: Option<String>,
    /// Reference-device clock at the end of the run.
    pub sim_time_ns: u64,
    /// Host time spent; left out of the JSON so reports are reproducible.
    #[serde(skip)]
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(HarnessError::Format(other.to_string())),
        }
    }
}

impl TestReport {
    pub fn new(suite: SuiteKind, seed: u64) -> Self {
        TestReport {
            suite,
            seed,
            cases: Vec::new(),
            totals: Totals::default(),
            infrastructure_error: None,
            sim_time_ns: 0,
            wall_time_ms: 0,
        }
    }

    pub fn push(&mut self, case: CaseReport) {
        match case.verdict {
            Verdict::Pass => self.totals.pass += 1,
            Verdict::Fail => self.totals.fail += 1,
            Verdict::Skip => self.totals.skip += 1,
        }
        self.cases.push(case);
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseReport> {
        self.cases.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    /// 0 all passed, 1 some case failed, 2 the suite could not run.
    pub fn exit_code(&self) -> i32 {
        if self.infrastructure_error.is_some() {
            2
        } else if self.totals.fail > 0 {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serialisable")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Manifest(e.to_string()))
    }

    pub fn to_table(&self) -> String {
        let id_w = self.cases.iter().map(|c| c.id.len()).max().unwrap_or(2).max(4);
        let cat_w = self
            .cases
            .iter()
            .map(|c| c.category.to_string().len())
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = String::new();
        let _ = writeln!(out, "suite {} (seed {})", self.suite, self.seed);
        let _ = writeln!(
            out,
            "{:<id_w$}  {:<cat_w$}  {:<7}  detail",
            "case", "category", "verdict"
        );
        for c in &self.cases {
            let mut detail = c.reason.clone().unwrap_or_default();
            if detail.is_empty() && !c.measured.is_empty() {
                detail = c
                    .measured
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.3}"))
                    .collect::<Vec<_>>()
                    .join(" ");
            }
            let verdict = serde_json::to_value(c.verdict).expect("unit variant");
            let _ = writeln!(
                out,
                "{:<id_w$}  {:<cat_w$}  {:<7}  {}",
                c.id,
                c.category.to_string(),
                verdict.as_str().unwrap_or(""),
                detail
            );
        }
        if let Some(e) = &self.infrastructure_error {
            let _ = writeln!(out, "infrastructure error: {e}");
        }
        let _ = writeln!(
            out,
            "{} passed, {} failed, {} skipped; {:.3} ms simulated, {} ms wall",
            self.totals.pass,
            self.totals.fail,
            self.totals.skip,
            self.sim_time_ns as f64 / 1e6,
            self.wall_time_ms
        );
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Table => self.to_table(),
        }
    }
}
