use std::fmt::Write;

use crate::dut::{errno, DutResponse};

use super::transport::Transport;

/// Typed client for the DUT shell.
pub struct DutClient {
    transport: Box<dyn Transport>,
}

fn join(bytes: &[u8]) -> String {
    let mut s = String::new();
    for b in bytes {
        let _ = write!(s, " {b}");
    }
    s
}

impl DutClient {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        DutClient { transport }
    }

    /// Sends one shell line. No reply counts as Timeout, an unreadable one as Error.
    pub fn call(&mut self, line: &str) -> DutResponse {
        match self.transport.request(line) {
            Ok(reply) => DutResponse::parse(&reply).unwrap_or_else(|_| DutResponse::error(line, errno::EBADMSG)),
            Err(_) => DutResponse::timeout(line),
        }
    }

    pub fn sync(&mut self) -> DutResponse {
        self.call("sync")
    }

    pub fn reset(&mut self) -> DutResponse {
        self.call("reset")
    }

    pub fn get_metadata(&mut self) -> DutResponse {
        self.call("get_metadata")
    }

    pub fn i2c_init(&mut self, speed_hz: u32) -> DutResponse {
        self.call(&format!("i2c_init {speed_hz}"))
    }

    pub fn i2c_read_reg(&mut self, addr: u8, reg: u8, len: usize) -> DutResponse {
        self.call(&format!("i2c_read_reg {addr} {reg} {len}"))
    }

    pub fn i2c_write_reg(&mut self, addr: u8, reg: u8, data: &[u8]) -> DutResponse {
        self.call(&format!("i2c_write_reg {addr} {reg}{}", join(data)))
    }

    pub fn i2c_read_bytes(&mut self, addr: u8, len: usize) -> DutResponse {
        self.call(&format!("i2c_read_bytes {addr} {len}"))
    }

    pub fn i2c_write_bytes(&mut self, addr: u8, data: &[u8]) -> DutResponse {
        self.call(&format!("i2c_write_bytes {addr}{}", join(data)))
    }

    pub fn spi_init(&mut self, mode: u8, speed_hz: u32) -> DutResponse {
        self.call(&format!("spi_init {mode} {speed_hz}"))
    }

    pub fn spi_transfer(&mut self, mosi: &[u8]) -> DutResponse {
        self.call(&format!("spi_transfer{}", join(mosi)))
    }

    pub fn uart_init(&mut self, baud: u32) -> DutResponse {
        self.call(&format!("uart_init {baud}"))
    }

    pub fn uart_write(&mut self, data: &[u8]) -> DutResponse {
        self.call(&format!("uart_write{}", join(data)))
    }

    pub fn gpio_set(&mut self, pin: usize, level: u8) -> DutResponse {
        self.call(&format!("gpio_set {pin} {level}"))
    }

    pub fn gpio_toggle(&mut self, pin: usize) -> DutResponse {
        self.call(&format!("gpio_toggle {pin}"))
    }

    pub fn timer_bench(&mut self, n: u32, period_ns: u64, pin: usize, repeat: u32) -> DutResponse {
        self.call(&format!("timer_bench {n} {period_ns} {pin} {repeat}"))
    }
}
