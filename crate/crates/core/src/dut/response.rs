use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Errno-style codes reported by the DUT shell.
pub mod errno {
    /// Data phase NACKed.
    pub const EIO: i64 = -5;
    /// Address phase NACKed (no such device).
    pub const ENXIO: i64 = -6;
    /// Bus busy or unexpected bus state.
    pub const EAGAIN: i64 = -11;
    /// Peripheral not initialised.
    pub const ENODEV: i64 = -19;
    /// Argument out of range or unsupported mode.
    pub const EINVAL: i64 = -22;
    /// Unknown command or malformed line.
    pub const EBADMSG: i64 = -74;

    pub fn name(code: i64) -> &'static str {
        match code {
            EIO => "EIO",
            ENXIO => "ENXIO",
            EAGAIN => "EAGAIN",
            ENODEV => "ENODEV",
            EINVAL => "EINVAL",
            EBADMSG => "EBADMSG",
            _ => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Error,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "Success",
            Outcome::Error => "Error",
            Outcome::Timeout => "Timeout",
        })
    }
}

/// The simple data types a response may carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i128),
    List(Vec<i128>),
    Text(String),
}

impl Value {
    pub fn bytes(bytes: &[u8]) -> Self {
        Value::List(bytes.iter().map(|&b| b as i128).collect())
    }

    pub fn as_int(&self) -> Option<i128> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[i128]> {
        match self {
            Value::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn from_json(v: &serde_json::Value) -> Option<Value> {
        fn num(v: &serde_json::Value) -> Option<i128> {
            v.as_i64().map(i128::from).or_else(|| v.as_u64().map(i128::from))
        }
        match v {
            serde_json::Value::String(s) => Some(Value::Text(s.clone())),
            serde_json::Value::Array(items) => items.iter().map(num).collect::<Option<_>>().map(Value::List),
            other => num(other).map(Value::Int),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(v) => s.serialize_i128(*v),
            Value::List(items) => s.collect_seq(items),
            Value::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(d)?;
        Value::from_json(&raw).ok_or_else(|| D::Error::custom(format!("unsupported data value {raw}")))
    }
}

/// Structured reply of every shell command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DutResponse {
    pub cmd: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<i64>,
    pub result: Outcome,
}

impl DutResponse {
    pub fn success(cmd: &str, data: Option<Value>) -> Self {
        DutResponse {
            cmd: vec![cmd.to_string()],
            data,
            error_code: None,
            result: Outcome::Success,
        }
    }

    /// Error replies carry the code both in `data` and in `error_code`.
    pub fn error(cmd: &str, code: i64) -> Self {
        DutResponse {
            cmd: vec![cmd.to_string()],
            data: Some(Value::Int(code as i128)),
            error_code: Some(code),
            result: Outcome::Error,
        }
    }

    pub fn timeout(cmd: &str) -> Self {
        DutResponse {
            cmd: vec![cmd.to_string()],
            data: None,
            error_code: None,
            result: Outcome::Timeout,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response is always serialisable")
    }

    pub fn parse(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim())
    }
}
