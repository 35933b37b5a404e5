use crate::memmap::LayoutedMap;
use crate::refdev::{Field, RegError, RegisterFile};

use super::bus::{wire_time_ns, Bus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UartMode {
    Echo,
    /// Echo every byte incremented by one (wrapping).
    EchoIncrement,
    /// Reply with nothing, only count.
    SilentCount,
}

impl UartMode {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(UartMode::Echo),
            1 => Some(UartMode::EchoIncrement),
            2 => Some(UartMode::SilentCount),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UartConfig {
    pub mode: UartMode,
    pub baud: u32,
    pub disabled: bool,
}

/// Largest relative baud mismatch the receiver still samples correctly.
pub const BAUD_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UartReply {
    pub bytes: Vec<u8>,
    pub framing_error: bool,
    pub duration_ns: u64,
}

/// Pure reply function of the UART endpoint.
pub fn uart_process(config: &UartConfig, bytes: &[u8], bitrate: u32) -> UartReply {
    let duration_ns = wire_time_ns(Bus::Uart, bytes.len() as u64, bitrate);
    let mismatch = (bitrate as f64 - config.baud as f64).abs() / config.baud.max(1) as f64;
    if config.disabled || mismatch > BAUD_TOLERANCE {
        return UartReply {
            bytes: Vec::new(),
            framing_error: !config.disabled && !bytes.is_empty(),
            duration_ns,
        };
    }
    let reply = match config.mode {
        UartMode::Echo => bytes.to_vec(),
        UartMode::EchoIncrement => bytes.iter().map(|b| b.wrapping_add(1)).collect(),
        UartMode::SilentCount => Vec::new(),
    };
    UartReply {
        bytes: reply,
        framing_error: false,
        duration_ns,
    }
}

#[derive(Debug, Clone, Copy)]
struct UartFields {
    init: Field,
    disable: Field,
    if_type: Field,
    baud: Field,
    rx_err: Field,
    rx_count: Field,
    tx_count: Field,
    err_count: Field,
    dur_ns: Field,
    frame_count: Field,
    echo_count: Field,
    silent_count: Field,
    rx_buf: Field,
}

/// UART endpoint bound to the register file.
#[derive(Debug, Clone)]
pub struct UartEndpoint {
    config: UartConfig,
    fields: UartFields,
    rx_pos: usize,
}

impl UartEndpoint {
    pub fn new(regs: &mut RegisterFile) -> Result<Self, RegError> {
        let map: &LayoutedMap = regs.map();
        let f = |n: &str| Field::resolve(map, &format!("uart.{n}"));
        let fields = UartFields {
            init: f("mode.init")?,
            disable: f("mode.disable")?,
            if_type: f("mode.if_type")?,
            baud: f("baud")?,
            rx_err: f("status.rx_err")?,
            rx_count: f("rx_count")?,
            tx_count: f("tx_count")?,
            err_count: f("err_count")?,
            dur_ns: f("dur_ns")?,
            frame_count: f("stats.frame_count")?,
            echo_count: f("stats.echo_count")?,
            silent_count: f("stats.silent_count")?,
            rx_buf: f("rx_buf")?,
        };
        let mut ep = UartEndpoint {
            config: UartConfig {
                mode: UartMode::Echo,
                baud: 115_200,
                disabled: false,
            },
            fields,
            rx_pos: 0,
        };
        ep.reinit(regs);
        Ok(ep)
    }

    pub fn config(&self) -> &UartConfig {
        &self.config
    }

    pub fn init_field(&self) -> Field {
        self.fields.init
    }

    pub fn reinit(&mut self, regs: &mut RegisterFile) {
        let f = &self.fields;
        self.config = UartConfig {
            // unknown codes fall back to echo
            mode: UartMode::from_code(regs.get(f.if_type) as u8).unwrap_or(UartMode::Echo),
            baud: regs.get(f.baud) as u32,
            disabled: regs.flag(f.disable),
        };
        self.rx_pos = 0;
        regs.clear_module_status("uart");
    }

    pub fn receive(&mut self, bytes: &[u8], bitrate: u32, regs: &mut RegisterFile) -> UartReply {
        let reply = uart_process(&self.config, bytes, bitrate);
        let f = self.fields;
        regs.set(f.dur_ns, reply.duration_ns.min(u32::MAX as u64) as i128);
        if reply.framing_error {
            regs.set(f.rx_err, 1);
            regs.bump(f.err_count, bytes.len() as u64);
            return reply;
        }
        if self.config.disabled {
            return reply;
        }
        regs.set(f.rx_err, 0);
        regs.bump(f.frame_count, 1);
        regs.bump(f.rx_count, bytes.len() as u64);
        regs.bump(f.tx_count, reply.bytes.len() as u64);
        match self.config.mode {
            UartMode::SilentCount => regs.bump(f.silent_count, 1),
            _ => regs.bump(f.echo_count, 1),
        }
        for &b in bytes {
            regs.set_elem(f.rx_buf, self.rx_pos, b as i128);
            self.rx_pos = (self.rx_pos + 1) % f.rx_buf.len;
        }
        reply
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: UartMode) -> UartConfig {
        UartConfig {
            mode,
            baud: 115_200,
            disabled: false,
        }
    }

    #[test]
    fn echo() {
        let r = uart_process(&cfg(UartMode::Echo), b"hello", 115_200);
        assert_eq!(r.bytes, b"hello");
    }

    #[test]
    fn echo_increment_wraps() {
        let r = uart_process(&cfg(UartMode::EchoIncrement), &[0, 0xff], 115_200);
        assert_eq!(r.bytes, vec![1, 0]);
    }

    #[test]
    fn silent_count() {
        let r = uart_process(&cfg(UartMode::SilentCount), b"abc", 115_200);
        assert!(r.bytes.is_empty());
        assert!(!r.framing_error);
    }

    #[test]
    fn hundred_bytes_duration() {
        let r = uart_process(&cfg(UartMode::Echo), &[0u8; 100], 115_200);
        // 10 bits per byte
        let exact = 10.0 * 100.0 / 115_200.0 * 1e9;
        assert!((r.duration_ns as f64 - exact).abs() <= 1.0);
    }

    #[test]
    fn baud_mismatch_is_a_framing_error() {
        let r = uart_process(&cfg(UartMode::Echo), b"x", 9_600);
        assert!(r.framing_error);
        assert!(r.bytes.is_empty());
    }
}
