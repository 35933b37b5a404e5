//! Client side of both endpoints: name-based access to the reference
//! device through a CSV map, a typed DUT shell client, transports and the
//! REPL evaluator.

mod dutclient;
mod namemap;
mod refclient;
mod repl;
mod transport;

use thiserror::Error;

use crate::memmap::{Access, ScalarType};

pub use dutclient::DutClient;
pub use namemap::{MapEntry, MapStore, NameMap};
pub use refclient::RefSession;
pub use repl::{render, Repl, ReplReply};
pub use transport::{
    serve_lines, Endpoint, Recording, SimTransport, TcpTransport, Transport, TransportError, Unreachable,
};

/// Result of a PAL call; same schema as the DUT shell's responses.
pub type PalResult = crate::dut::DutResponse;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PalError {
    #[error("unknown parameter `{0}`")]
    UnknownName(String),
    #[error("no map installed for device version {0}")]
    UnknownVersion(String),
    #[error("`{name}`: elements {index}..{index}+{count} outside 0..{len}")]
    Range {
        name: String,
        index: usize,
        count: usize,
        len: usize,
    },
    #[error("`{name}` is {access}")]
    Access { name: String, access: Access },
    #[error("`{name}`: {value} does not fit {ty}")]
    Encode { name: String, value: i128, ty: ScalarType },
    #[error("map line {line}: {msg}")]
    BadMap { line: usize, msg: String },
    #[error("device did not answer")]
    Timeout,
    #[error("{0}")]
    Io(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{0}")]
    Usage(String),
    #[error("call failed: {}", render(.0))]
    Failed(PalResult),
}

impl PalError {
    /// The C3 outcome a caller reports for this error.
    pub fn outcome(&self) -> crate::dut::Outcome {
        match self {
            PalError::Timeout => crate::dut::Outcome::Timeout,
            _ => crate::dut::Outcome::Error,
        }
    }
}
