//! Line protocol of the reference device.
//!
//! | request               | response                                   |
//! |-----------------------|--------------------------------------------|
//! | `rr <index> <size>`   | `{"data": 42, "result": 0}` or a byte list |
//! | `wr <index> <b0> ..`  | `{"result": 0}`                            |
//! | `ex`                  | `{"result": 0}`                            |
//! | `-v`                  | `{"version": "1.2.3", "result": 0}`        |
//! | `reset`               | `{"result": 0}` (restores defaults)        |
//!
//! Numbers are decimal or `0x`-prefixed hex. Every request yields exactly
//! one response line.

use std::fmt::{self, Write};

use serde_json::Value;
use thiserror::Error;

use super::regfile::{RegError, RegisterFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResultCode {
    Success = 0,
    ParseError = 1,
    OutOfRange = 2,
    AccessViolation = 3,
    Internal = 4,
}

impl ResultCode {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(ResultCode::Success),
            1 => Some(ResultCode::ParseError),
            2 => Some(ResultCode::OutOfRange),
            3 => Some(ResultCode::AccessViolation),
            4 => Some(ResultCode::Internal),
            _ => None,
        }
    }
}

impl From<&RegError> for ResultCode {
    fn from(e: &RegError) -> Self {
        match e {
            RegError::OutOfRange { .. } | RegError::ZeroSize => ResultCode::OutOfRange,
            RegError::AccessViolation { .. } => ResultCode::AccessViolation,
            RegError::MissingField(_) => ResultCode::Internal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseData {
    Int(i64),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResponse {
    pub result: ResultCode,
    pub data: Option<ResponseData>,
    pub version: Option<String>,
}

impl CommandResponse {
    pub fn ok() -> Self {
        CommandResponse {
            result: ResultCode::Success,
            data: None,
            version: None,
        }
    }

    pub fn error(result: ResultCode) -> Self {
        CommandResponse {
            result,
            data: None,
            version: None,
        }
    }

    pub fn with_data(mut self, data: ResponseData) -> Self {
        self.data = Some(data);
        self
    }

    pub fn is_success(&self) -> bool {
        self.result == ResultCode::Success
    }

    /// Bytes carried in `data`, whether a bare integer or a list.
    pub fn bytes(&self) -> Option<Vec<u8>> {
        match &self.data {
            Some(ResponseData::Int(v)) => u8::try_from(*v).ok().map(|b| vec![b]),
            Some(ResponseData::Bytes(b)) => Some(b.clone()),
            None => None,
        }
    }

    /// Parses one response line produced by [`fmt::Display`].
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let value: Value =
            serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Malformed(format!("{e}: {line:?}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ProtocolError::Malformed(format!("not an object: {line:?}")))?;
        let code = obj
            .get("result")
            .and_then(Value::as_i64)
            .ok_or_else(|| ProtocolError::Malformed(format!("no result: {line:?}")))?;
        let result =
            ResultCode::from_code(code).ok_or_else(|| ProtocolError::Malformed(format!("unknown result {code}")))?;
        let data = match obj.get("data") {
            None => None,
            Some(Value::Array(items)) => Some(ResponseData::Bytes(
                items
                    .iter()
                    .map(|v| v.as_u64().and_then(|b| u8::try_from(b).ok()))
                    .collect::<Option<Vec<u8>>>()
                    .ok_or_else(|| ProtocolError::Malformed(format!("bad byte list: {line:?}")))?,
            )),
            Some(v) => {
                Some(ResponseData::Int(v.as_i64().ok_or_else(|| {
                    ProtocolError::Malformed(format!("bad data: {line:?}"))
                })?))
            }
        };
        let version = obj
            .get("version")
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ProtocolError::Malformed(format!("bad version: {line:?}")))
            })
            .transpose()?;
        Ok(CommandResponse { result, data, version })
    }
}

impl fmt::Display for CommandResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::from("{");
        match &self.data {
            Some(ResponseData::Int(v)) => {
                let _ = write!(out, "\"data\": {v}, ");
            }
            Some(ResponseData::Bytes(bytes)) => {
                out.push_str("\"data\": [");
                for (i, b) in bytes.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    let _ = write!(out, "{b}");
                }
                out.push_str("], ");
            }
            None => {}
        }
        if let Some(v) = &self.version {
            // versions are dotted numbers; nothing to escape
            let _ = write!(out, "\"version\": \"{v}\", ");
        }
        let _ = write!(out, "\"result\": {}}}", self.result as u8);
        f.write_str(&out)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    ReadRegs { offset: usize, size: usize },
    WriteRegs { offset: usize, bytes: Vec<u8> },
    Execute,
    Version,
    Reset,
}

fn parse_number(tok: &str) -> Option<u64> {
    match tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => tok.parse().ok(),
    }
}

pub fn parse_command(line: &str) -> Option<Command> {
    if !line.is_ascii() {
        return None;
    }
    let mut toks = line.split_ascii_whitespace();
    let cmd = toks.next()?;
    let args: Vec<&str> = toks.collect();
    let num = |i: usize| args.get(i).and_then(|t| parse_number(t));
    match (cmd, args.len()) {
        ("rr", 2) => Some(Command::ReadRegs {
            offset: usize::try_from(num(0)?).ok()?,
            size: usize::try_from(num(1)?).ok()?,
        }),
        ("wr", n) if n >= 2 => {
            let offset = usize::try_from(num(0)?).ok()?;
            let bytes = args[1..]
                .iter()
                .map(|t| parse_number(t).and_then(|v| u8::try_from(v).ok()))
                .collect::<Option<Vec<u8>>>()?;
            Some(Command::WriteRegs { offset, bytes })
        }
        ("ex", 0) => Some(Command::Execute),
        ("-v", 0) => Some(Command::Version),
        ("reset", 0) => Some(Command::Reset),
        _ => None,
    }
}

/// Device behaviour triggered by the protocol beyond plain register access.
pub trait DeviceHooks {
    /// Re-initialises `module` from the committed registers.
    fn reinit(&mut self, module: &str, regs: &mut RegisterFile);
    /// Returns the device to power-on state (registers already reset).
    fn reset(&mut self, regs: &mut RegisterFile);
}

/// Hooks for a bare register file with no peripheral models attached.
pub struct NoHooks;

impl DeviceHooks for NoHooks {
    fn reinit(&mut self, _module: &str, _regs: &mut RegisterFile) {}
    fn reset(&mut self, _regs: &mut RegisterFile) {}
}

/// Executes one request line against `regs`.
pub fn handle_line(regs: &mut RegisterFile, hooks: &mut dyn DeviceHooks, line: &str) -> CommandResponse {
    let Some(cmd) = parse_command(line.trim_end_matches(['\r', '\n'])) else {
        return CommandResponse::error(ResultCode::ParseError);
    };
    execute_command(regs, hooks, cmd)
}

pub fn execute_command(regs: &mut RegisterFile, hooks: &mut dyn DeviceHooks, cmd: Command) -> CommandResponse {
    match cmd {
        Command::ReadRegs { offset, size } => match regs.read(offset, size) {
            Ok([b]) => CommandResponse::ok().with_data(ResponseData::Int(*b as i64)),
            Ok(bytes) => CommandResponse::ok().with_data(ResponseData::Bytes(bytes.to_vec())),
            Err(e) => CommandResponse::error((&e).into()),
        },
        Command::WriteRegs { offset, bytes } => match regs.stage(offset, &bytes) {
            Ok(()) => CommandResponse::ok(),
            Err(e @ RegError::AccessViolation { offset }) => {
                CommandResponse::error((&e).into()).with_data(ResponseData::Int(offset as i64))
            }
            Err(e) => CommandResponse::error((&e).into()),
        },
        Command::Execute => {
            for entry in regs.commit() {
                hooks.reinit(entry.module(), regs);
                let field = super::Field::from_entry(&entry);
                regs.clear_field(field);
            }
            CommandResponse::ok()
        }
        Command::Version => CommandResponse {
            result: ResultCode::Success,
            data: None,
            version: Some(regs.map().version.to_string()),
        },
        Command::Reset => {
            regs.load_defaults();
            hooks.reset(regs);
            CommandResponse::ok()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memmap::reference_map;
    use std::sync::Arc;

    fn regs() -> RegisterFile {
        RegisterFile::new(Arc::new(reference_map()))
    }

    fn run(regs: &mut RegisterFile, line: &str) -> String {
        handle_line(regs, &mut NoHooks, line).to_string()
    }

    #[test]
    fn response_formats() {
        assert_eq!(
            CommandResponse::ok().with_data(ResponseData::Int(42)).to_string(),
            r#"{"data": 42, "result": 0}"#
        );
        assert_eq!(CommandResponse::ok().to_string(), r#"{"result": 0}"#);
        assert_eq!(
            CommandResponse::ok()
                .with_data(ResponseData::Bytes(vec![1, 2, 3]))
                .to_string(),
            r#"{"data": [1, 2, 3], "result": 0}"#
        );
    }

    #[test]
    fn read_single_and_multi() {
        let mut r = regs();
        assert_eq!(run(&mut r, "wr 0 42"), r#"{"result": 0}"#);
        assert_eq!(run(&mut r, "rr 0 1"), r#"{"data": 0, "result": 0}"#);
        assert_eq!(run(&mut r, "ex"), r#"{"result": 0}"#);
        assert_eq!(run(&mut r, "rr 0 1"), r#"{"data": 42, "result": 0}"#);
        run(&mut r, "wr 0 1 2 0x03");
        run(&mut r, "ex");
        assert_eq!(run(&mut r, "rr 0 3"), r#"{"data": [1, 2, 3], "result": 0}"#);
    }

    #[test]
    fn version() {
        let mut r = regs();
        assert_eq!(run(&mut r, "-v"), r#"{"version": "1.2.3", "result": 0}"#);
    }

    #[test]
    fn errors_are_single_lines() {
        let mut r = regs();
        let total = r.total_size();
        assert_eq!(run(&mut r, "bogus"), r#"{"result": 1}"#);
        assert_eq!(run(&mut r, ""), r#"{"result": 1}"#);
        assert_eq!(run(&mut r, "rr 1"), r#"{"result": 1}"#);
        assert_eq!(run(&mut r, "wr 0 256"), r#"{"result": 1}"#);
        assert_eq!(run(&mut r, "rr 0 0"), r#"{"result": 2}"#);
        assert_eq!(run(&mut r, &format!("rr {} 2", total - 1)), r#"{"result": 2}"#);
        // i2c.r_count is read-only
        assert_eq!(run(&mut r, "wr 334 5"), r#"{"data": 334, "result": 3}"#);
        assert_eq!(run(&mut r, "rr 0 1 \u{e9}"), r#"{"result": 1}"#);
    }

    #[test]
    fn parse_roundtrip() {
        for line in [
            r#"{"data": 42, "result": 0}"#,
            r#"{"data": [1, 2], "result": 0}"#,
            r#"{"version": "1.2.3", "result": 0}"#,
            r#"{"data": 5, "result": 3}"#,
        ] {
            assert_eq!(CommandResponse::parse(line).unwrap().to_string(), line);
        }
        assert!(CommandResponse::parse("{}").is_err());
    }
}
