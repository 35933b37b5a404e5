use crate::dut::{DutResponse, Outcome, Value};
use crate::refdev::{CommandResponse, ResponseData};

use super::namemap::{MapEntry, MapStore, NameMap};
use super::transport::{Transport, TransportError};
use super::{PalError, PalResult};

/// Name-based session with the reference device.
pub struct RefSession {
    transport: Box<dyn Transport>,
    map: NameMap,
}

fn timeout(cmd: Vec<String>) -> PalResult {
    DutResponse {
        cmd,
        data: None,
        error_code: None,
        result: Outcome::Timeout,
    }
}

fn device_error(cmd: Vec<String>, resp: &CommandResponse) -> PalResult {
    let code = resp.result as i64;
    DutResponse {
        cmd,
        data: Some(match &resp.data {
            Some(ResponseData::Int(v)) => Value::Int(*v as i128),
            _ => Value::Int(code as i128),
        }),
        error_code: Some(code),
        result: Outcome::Error,
    }
}

impl RefSession {
    /// Asks the device for its interface version and binds the matching map.
    pub fn connect(mut transport: Box<dyn Transport>, store: &MapStore) -> Result<Self, PalError> {
        let version = query_version(&mut *transport)?;
        let map = store.resolve(&version)?;
        Ok(RefSession { transport, map })
    }

    pub fn with_map(transport: Box<dyn Transport>, map: NameMap) -> Self {
        RefSession { transport, map }
    }

    pub fn map(&self) -> &NameMap {
        &self.map
    }

    /// Sends one raw protocol line.
    pub fn send(&mut self, line: &str) -> Result<CommandResponse, TransportError> {
        let reply = self.transport.request(line)?;
        CommandResponse::parse(&reply).map_err(|e| TransportError::Io(e.to_string()))
    }

    fn step(&mut self, cmd: &mut Vec<String>, line: String) -> Result<CommandResponse, PalResult> {
        cmd.push(line.clone());
        match self.send(&line) {
            Ok(resp) if resp.is_success() => Ok(resp),
            Ok(resp) => Err(device_error(cmd.clone(), &resp)),
            Err(_) => Err(timeout(cmd.clone())),
        }
    }

    /// Reads `count` elements of `name` starting at element `index`.
    pub fn read_reg(&mut self, name: &str, index: usize, count: usize) -> Result<PalResult, PalError> {
        let entry = self.map.lookup(name)?.clone();
        let (offset, size) = entry.span(index, count)?;
        let mut cmd = Vec::new();
        let resp = match self.step(&mut cmd, format!("rr {offset} {size}")) {
            Ok(r) => r,
            Err(res) => return Ok(res),
        };
        let bytes = resp
            .bytes()
            .filter(|b| b.len() == size)
            .ok_or_else(|| PalError::Protocol(format!("expected {size} bytes for `{name}`")))?;
        Ok(DutResponse {
            cmd,
            data: Some(Value::List(entry.decode(&bytes))),
            error_code: None,
            result: Outcome::Success,
        })
    }

    /// First element of `name`, failing unless the read succeeds.
    pub fn read_value(&mut self, name: &str) -> Result<i128, PalError> {
        let res = self.read_reg(name, 0, 1)?;
        match (&res.result, res.data.as_ref().and_then(Value::as_list)) {
            (Outcome::Success, Some([v])) => Ok(*v),
            _ => Err(PalError::Failed(res)),
        }
    }

    fn writable(&self, name: &str) -> Result<MapEntry, PalError> {
        let entry = self.map.lookup(name)?;
        if !entry.access.host_writable() {
            return Err(PalError::Access {
                name: name.to_string(),
                access: entry.access,
            });
        }
        Ok(entry.clone())
    }

    fn wr_line(entry: &MapEntry, index: usize, values: &[i128]) -> Result<String, PalError> {
        let (offset, _) = entry.span(index, values.len())?;
        let mut line = format!("wr {offset}");
        for &v in values {
            for b in entry.encode(v)? {
                line.push_str(&format!(" {b}"));
            }
        }
        Ok(line)
    }

    /// Stages a write of `value` to `name`. Nothing takes effect until execute.
    pub fn write_reg(&mut self, name: &str, value: i128) -> Result<PalResult, PalError> {
        self.write_reg_at(name, 0, &[value])
    }

    pub fn write_reg_at(&mut self, name: &str, index: usize, values: &[i128]) -> Result<PalResult, PalError> {
        let entry = self.writable(name)?;
        let line = Self::wr_line(&entry, index, values)?;
        let mut cmd = Vec::new();
        Ok(match self.step(&mut cmd, line) {
            Ok(_) => DutResponse {
                cmd,
                data: None,
                error_code: None,
                result: Outcome::Success,
            },
            Err(res) => res,
        })
    }

    /// Write, set the owning module's init flag, and execute. Stops at the
    /// first failing step, which is the last entry of `cmd`.
    pub fn write_and_execute(&mut self, name: &str, value: i128) -> Result<PalResult, PalError> {
        let entry = self.writable(name)?;
        let mut lines = vec![Self::wr_line(&entry, 0, &[value])?];
        if let Some(init) = self.map.init_flag(entry.module()) {
            if init.name != entry.name {
                lines.push(Self::wr_line(init, 0, &[1])?);
            }
        }
        lines.push("ex".to_string());
        let mut cmd = Vec::new();
        for line in lines {
            if let Err(res) = self.step(&mut cmd, line) {
                return Ok(res);
            }
        }
        Ok(DutResponse {
            cmd,
            data: None,
            error_code: None,
            result: Outcome::Success,
        })
    }

    pub fn execute(&mut self) -> PalResult {
        self.simple("ex")
    }

    /// Restores power-on defaults on the device.
    pub fn reset(&mut self) -> PalResult {
        self.simple("reset")
    }

    pub fn version(&mut self) -> PalResult {
        let mut cmd = Vec::new();
        match self.step(&mut cmd, "-v".to_string()) {
            Ok(resp) => DutResponse {
                cmd,
                data: resp.version.map(Value::Text),
                error_code: None,
                result: Outcome::Success,
            },
            Err(res) => res,
        }
    }

    fn simple(&mut self, line: &str) -> PalResult {
        let mut cmd = Vec::new();
        match self.step(&mut cmd, line.to_string()) {
            Ok(resp) => DutResponse {
                cmd,
                data: resp.bytes().map(|b| Value::bytes(&b)),
                error_code: None,
                result: Outcome::Success,
            },
            Err(res) => res,
        }
    }

    /// Sends a raw protocol line and wraps the reply.
    pub fn raw(&mut self, line: &str) -> PalResult {
        self.simple(line.trim())
    }
}

fn query_version(transport: &mut dyn Transport) -> Result<String, PalError> {
    let reply = match transport.request("-v") {
        Ok(r) => r,
        Err(TransportError::Timeout) => return Err(PalError::Timeout),
        Err(e) => return Err(PalError::Io(e.to_string())),
    };
    let resp = CommandResponse::parse(&reply).map_err(|e| PalError::Protocol(e.to_string()))?;
    let ok = resp.is_success();
    resp.version
        .filter(|_| ok)
        .ok_or_else(|| PalError::Protocol(format!("no version in `{reply}`")))
}
