use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::dut::Bench;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("no response before the deadline")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error("transport error: {0}")]
    Io(String),
}

/// One request line out, one response line back.
pub trait Transport: Send {
    fn request(&mut self, line: &str) -> Result<String, TransportError>;
}

impl Transport for Box<dyn Transport> {
    fn request(&mut self, line: &str) -> Result<String, TransportError> {
        (**self).request(line)
    }
}

/// Line transport over TCP with a per-request wall-clock deadline.
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, TransportError> {
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| TransportError::Io(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| TransportError::Io(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(|e| match e.kind() {
            std::io::ErrorKind::TimedOut => TransportError::Timeout,
            _ => TransportError::Io(format!("{addr}: {e}")),
        })?;
        stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let _ = stream.set_nodelay(true);
        let writer = stream.try_clone().map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(TcpTransport {
            reader: BufReader::new(stream),
            writer,
        })
    }
}

impl Transport for TcpTransport {
    fn request(&mut self, line: &str) -> Result<String, TransportError> {
        self.writer
            .write_all(format!("{line}\n").as_bytes())
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let mut reply = String::new();
        match self.reader.read_line(&mut reply) {
            Ok(0) => Err(TransportError::Closed),
            Ok(_) => Ok(reply.trim_end().to_string()),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Err(TransportError::Timeout)
            }
            Err(e) => Err(TransportError::Io(e.to_string())),
        }
    }
}

/// Which end of an in-process bench a transport talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Reference,
    Dut,
}

/// In-process transport to one side of a shared [`Bench`].
#[derive(Clone)]
pub struct SimTransport {
    bench: Arc<Mutex<Bench>>,
    endpoint: Endpoint,
}

impl SimTransport {
    pub fn new(bench: Arc<Mutex<Bench>>, endpoint: Endpoint) -> Self {
        SimTransport { bench, endpoint }
    }

    /// Transports to both ends of `bench`: (reference, DUT).
    pub fn pair(bench: Bench) -> (SimTransport, SimTransport, Arc<Mutex<Bench>>) {
        let shared = Arc::new(Mutex::new(bench));
        (
            SimTransport::new(Arc::clone(&shared), Endpoint::Reference),
            SimTransport::new(Arc::clone(&shared), Endpoint::Dut),
            shared,
        )
    }
}

impl Transport for SimTransport {
    fn request(&mut self, line: &str) -> Result<String, TransportError> {
        let mut bench = self
            .bench
            .lock()
            .map_err(|_| TransportError::Io("bench poisoned".into()))?;
        Ok(match self.endpoint {
            Endpoint::Reference => bench.ref_line(line),
            Endpoint::Dut => bench.dut_line(line),
        })
    }
}

/// Wraps a transport and logs every request line.
pub struct Recording<T> {
    inner: T,
    log: Arc<Mutex<Vec<String>>>,
}

impl<T: Transport> Recording<T> {
    pub fn new(inner: T) -> (Self, Arc<Mutex<Vec<String>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        (
            Recording {
                inner,
                log: Arc::clone(&log),
            },
            log,
        )
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn request(&mut self, line: &str) -> Result<String, TransportError> {
        self.log.lock().expect("log lock").push(line.to_string());
        self.inner.request(line)
    }
}

/// A transport whose peer never answers.
pub struct Unreachable;

impl Transport for Unreachable {
    fn request(&mut self, _line: &str) -> Result<String, TransportError> {
        Err(TransportError::Timeout)
    }
}

/// Serves a line protocol: one `handle` call per request line.
pub fn serve_lines<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    mut handle: impl FnMut(&str) -> String,
) -> std::io::Result<()> {
    for line in reader.split(b'\n') {
        let raw = line?;
        // non-UTF-8 garbage still gets a reply
        let text = String::from_utf8_lossy(&raw);
        let reply = handle(text.trim_end_matches('\r'));
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
