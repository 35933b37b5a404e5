use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::dut::Outcome;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Infrastructure,
    I2c,
    Spi,
    Uart,
    GpioTimer,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 5] = [
        SuiteKind::Infrastructure,
        SuiteKind::I2c,
        SuiteKind::Spi,
        SuiteKind::Uart,
        SuiteKind::GpioTimer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Infrastructure => "infrastructure",
            SuiteKind::I2c => "i2c",
            SuiteKind::Spi => "spi",
            SuiteKind::Uart => "uart",
            SuiteKind::GpioTimer => "gpio_timer",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SuiteKind::ALL.into_iter().find(|k| k.name() == name)
    }

    fn builtin_text(self) -> &'static str {
        match self {
            SuiteKind::Infrastructure => include_str!("../../suites/infrastructure.json"),
            SuiteKind::I2c => include_str!("../../suites/i2c.json"),
            SuiteKind::Spi => include_str!("../../suites/spi.json"),
            SuiteKind::Uart => include_str!("../../suites/uart.json"),
            SuiteKind::GpioTimer => include_str!("../../suites/gpio_timer.json"),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Init,
    Usage,
    Mode,
    Negative,
    Recovery,
    Wiring,
    Sync,
    Descriptor,
    Accuracy,
    OverlapDelay,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

/// Relative tolerance check on a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Approx {
    pub value: f64,
    pub rel: f64,
}

impl Approx {
    pub fn holds(&self, got: f64) -> bool {
        (got - self.value).abs() <= self.rel * self.value.abs()
    }
}

/// Location of reference-device elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefSpan {
    pub name: String,
    #[serde(default)]
    pub index: usize,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Predicate on a DUT shell response. Unset fields are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutExpect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<i64>,
    /// Literal, possibly with `{var}` placeholders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Json>,
    /// Data must equal what the reference device holds here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_from_ref: Option<RefSpan>,
}

/// One step of a test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// Named write on the reference device, by default followed by init flag and execute.
    RefWrite {
        name: String,
        #[serde(default)]
        index: usize,
        /// A number, a `{var}`, or a list of them.
        value: Json,
        #[serde(default = "yes")]
        execute: bool,
    },
    RefRead {
        name: String,
        #[serde(default)]
        index: usize,
        #[serde(default = "one")]
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<Json>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approx: Option<Approx>,
    },
    Dut {
        cmd: String,
        #[serde(default)]
        expect: DutExpect,
    },
    /// Toggle each DUT pin and check the reference trace sees exactly that pin.
    WiringCheck { pins: Vec<usize> },
    /// Periodic toggling on `pin`; the period error must stay under the threshold.
    TimerAccuracy {
        /// Time between toggles; the measured same-edge period is twice this.
        half_period_ns: u64,
        events: u32,
        pin: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold_ppm: Option<f64>,
    },
    /// `n` coincident timers for n = 1..=n_max; handler delay must grow linearly.
    OverlapDelay {
        n_max: u32,
        period_ns: u64,
        pin: usize,
        overhead_ns: u64,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub id: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Board features the case needs; skipped when the DUT lacks one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requires: Vec<String>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub suite: SuiteKind,
    pub cases: Vec<TestCase>,
}

impl Suite {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Manifest(format!("{}: {e}", path.display())))?;
        Suite::from_json(&text)
    }

    pub fn builtin(kind: SuiteKind) -> Self {
        Suite::from_json(kind.builtin_text()).expect("bundled manifests are valid")
    }

    /// A bundled suite by name, or a manifest file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, HarnessError> {
        match SuiteKind::from_name(name_or_path) {
            Some(kind) => Ok(Suite::builtin(kind)),
            None => Suite::load(Path::new(name_or_path)),
        }
    }
}
