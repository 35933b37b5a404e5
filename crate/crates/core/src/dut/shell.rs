use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::{BusTransaction, I2cOutcome, I2cResult, SpiResult, UartReply};

use super::config::{DutConfig, FaultConfig, FaultFlag};
use super::response::{errno, DutResponse, Value};

pub const FIRMWARE_VERSION: &str = "1.0.0";

pub const I2C_SPEED_RANGE: (u32, u32) = (10_000, 400_000);
pub const SPI_SPEED_RANGE: (u32, u32) = (100_000, 5_000_000);
pub const UART_BAUD_RANGE: (u32, u32) = (9_600, 115_200);

/// What the DUT's pins and buses are attached to.
pub trait Wire {
    fn now(&self) -> u64;
    /// Lets simulated time pass until `t`, delivering scheduled pin edges.
    fn advance_to(&mut self, t: u64);
    fn i2c(&mut self, txn: &mut BusTransaction) -> I2cResult;
    fn spi(&mut self, txn: &mut BusTransaction) -> SpiResult;
    fn uart(&mut self, bytes: &[u8], bitrate: u32) -> UartReply;
    /// Drives DUT pin `pin` to `level` at time `t` (not before now).
    fn drive_pin(&mut self, pin: usize, level: u8, t: u64);
    fn pin_wired(&self, pin: usize) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Failure {
    code: i64,
}

impl From<i64> for Failure {
    fn from(code: i64) -> Self {
        Failure { code }
    }
}

/// Data on success; the code plus whatever the caller's buffer holds on failure.
type CmdResult = Result<Option<Value>, (Failure, Option<Value>)>;

/// Result of one command before the session deadline is applied.
enum Exec {
    Done(CmdResult),
    Hang,
}

fn fail(code: i64) -> CmdResult {
    Err((Failure { code }, None))
}

#[derive(Debug, Clone, Copy)]
struct SpiState {
    mode: u8,
    speed: u32,
}

/// The virtual device under test and its command shell.
#[derive(Debug, Clone)]
pub struct Dut {
    config: DutConfig,
    faults: BTreeSet<FaultFlag>,
    i2c_speed: Option<u32>,
    spi: Option<SpiState>,
    uart_baud: Option<u32>,
    levels: Vec<u8>,
    hung: bool,
    write_streak: u32,
    rng: ChaCha8Rng,
}

fn parse_num(tok: &str) -> Option<i64> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let v = match body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        Some(hex) => i64::from_str_radix(hex, 16).ok()?,
        None => body.parse().ok()?,
    };
    Some(if neg { -v } else { v })
}

struct Args<'a> {
    toks: Vec<&'a str>,
}

impl<'a> Args<'a> {
    fn len(&self) -> usize {
        self.toks.len()
    }

    fn int(&self, i: usize, lo: i64, hi: i64) -> Result<i64, Failure> {
        let v = self
            .toks
            .get(i)
            .and_then(|t| parse_num(t))
            .ok_or(Failure { code: errno::EINVAL })?;
        if (lo..=hi).contains(&v) {
            Ok(v)
        } else {
            Err(Failure { code: errno::EINVAL })
        }
    }

    fn opt_int(&self, i: usize, lo: i64, hi: i64, default: i64) -> Result<i64, Failure> {
        if i < self.toks.len() {
            self.int(i, lo, hi)
        } else {
            Ok(default)
        }
    }

    fn bytes_from(&self, i: usize) -> Result<Vec<u8>, Failure> {
        (i..self.toks.len())
            .map(|k| self.int(k, 0, 255).map(|b| b as u8))
            .collect()
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(f) => return Exec::Done(Err((f, None))),
        }
    };
}

impl Dut {
    pub fn new(config: DutConfig, faults: &FaultConfig, seed: u64) -> Self {
        let active = faults.active_for(&config.family);
        let pins = config.wiring.len();
        Dut {
            config,
            faults: active,
            i2c_speed: None,
            spi: None,
            uart_baud: None,
            levels: vec![0; pins],
            hung: false,
            write_streak: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> &DutConfig {
        &self.config
    }

    pub fn faults(&self) -> &BTreeSet<FaultFlag> {
        &self.faults
    }

    pub fn is_hung(&self) -> bool {
        self.hung
    }

    fn has(&self, flag: FaultFlag) -> bool {
        self.faults.contains(&flag)
    }

    /// Handles one shell line. Commands exceeding the response deadline, or
    /// issued while the firmware is locked up, report Timeout.
    pub fn handle_line(&mut self, line: &str, wire: &mut dyn Wire) -> DutResponse {
        let line = line.trim();
        let start = wire.now();
        let half = self.config.command_latency_ns / 2;
        wire.advance_to(start + half);

        let exec = if line == "reset" {
            self.reset(wire);
            Exec::Done(Ok(None))
        } else if self.hung {
            Exec::Hang
        } else {
            self.dispatch(line, wire)
        };

        let deadline = start + self.config.response_deadline_ns;
        match exec {
            Exec::Hang => {
                wire.advance_to(deadline);
                DutResponse::timeout(line)
            }
            Exec::Done(_) if wire.now() + half > deadline => {
                wire.advance_to(deadline);
                DutResponse::timeout(line)
            }
            Exec::Done(res) => {
                wire.advance_to(wire.now() + half);
                match res {
                    Ok(data) => DutResponse::success(line, data),
                    Err((_, data)) if self.has(FaultFlag::SwallowErrorReturn) => DutResponse::success(line, data),
                    Err((f, _)) => DutResponse::error(line, f.code),
                }
            }
        }
    }

    fn reset(&mut self, wire: &mut dyn Wire) {
        self.i2c_speed = None;
        self.spi = None;
        self.uart_baud = None;
        self.hung = false;
        self.write_streak = 0;
        let now = wire.now();
        for pin in 0..self.levels.len() {
            if self.levels[pin] != 0 {
                self.levels[pin] = 0;
                wire.drive_pin(pin, 0, now);
            }
        }
    }

    fn dispatch(&mut self, line: &str, wire: &mut dyn Wire) -> Exec {
        let mut toks = line.split_ascii_whitespace();
        let Some(cmd) = toks.next() else {
            return Exec::Done(fail(errno::EBADMSG));
        };
        let args = Args { toks: toks.collect() };
        let is_write = matches!(cmd, "i2c_write_reg" | "i2c_write_bytes");
        self.write_streak = if is_write { self.write_streak + 1 } else { 0 };
        match cmd {
            "sync" => Exec::Done(Ok(None)),
            "get_metadata" => Exec::Done(Ok(Some(Value::Text(self.metadata())))),
            "i2c_init" => {
                let speed = tri!(args.opt_int(0, I2C_SPEED_RANGE.0 as i64, I2C_SPEED_RANGE.1 as i64, 100_000));
                self.i2c_speed = Some(speed as u32);
                Exec::Done(Ok(None))
            }
            "i2c_read_reg" if args.len() == 3 => {
                let addr = tri!(args.int(0, 0, 0x7f)) as u8;
                let reg = tri!(args.int(1, 0, 255)) as u8;
                let len = tri!(args.int(2, 1, 255)) as usize;
                self.i2c_read(wire, addr, Some(reg), len)
            }
            "i2c_read_bytes" if args.len() == 2 => {
                let addr = tri!(args.int(0, 0, 0x7f)) as u8;
                let len = tri!(args.int(1, 1, 255)) as usize;
                self.i2c_read(wire, addr, None, len)
            }
            "i2c_write_reg" if args.len() >= 3 => {
                let addr = tri!(args.int(0, 0, 0x7f)) as u8;
                let reg = tri!(args.int(1, 0, 255)) as u8;
                let mut payload = vec![reg];
                payload.extend(tri!(args.bytes_from(2)));
                self.i2c_write(wire, addr, payload)
            }
            "i2c_write_bytes" if args.len() >= 2 => {
                let addr = tri!(args.int(0, 0, 0x7f)) as u8;
                let payload = tri!(args.bytes_from(1));
                self.i2c_write(wire, addr, payload)
            }
            "spi_init" if args.len() <= 2 => {
                let mode = tri!(args.opt_int(0, 0, 3, 0)) as u8;
                let speed = tri!(args.opt_int(1, SPI_SPEED_RANGE.0 as i64, SPI_SPEED_RANGE.1 as i64, 1_000_000));
                if !self.config.supports(&format!("spi_mode_{mode}")) {
                    return Exec::Done(fail(errno::EINVAL));
                }
                self.spi = Some(SpiState {
                    mode,
                    speed: speed as u32,
                });
                Exec::Done(Ok(None))
            }
            "spi_transfer" if args.len() >= 1 => {
                let Some(spi) = self.spi else {
                    return Exec::Done(fail(errno::ENODEV));
                };
                let mosi = tri!(args.bytes_from(0));
                let mut txn = BusTransaction::spi_transfer(mosi, spi.mode, wire.now(), spi.speed);
                let res = wire.spi(&mut txn);
                wire.advance_to(txn.end_ns);
                Exec::Done(Ok(Some(Value::bytes(&res.miso))))
            }
            "uart_init" if args.len() <= 1 => {
                if !self.config.supports("uart") {
                    return Exec::Done(fail(errno::ENODEV));
                }
                let baud = tri!(args.opt_int(0, UART_BAUD_RANGE.0 as i64, UART_BAUD_RANGE.1 as i64, 115_200));
                self.uart_baud = Some(baud as u32);
                Exec::Done(Ok(None))
            }
            "uart_write" if args.len() >= 1 => {
                let Some(baud) = self.uart_baud else {
                    return Exec::Done(fail(errno::ENODEV));
                };
                let bytes = tri!(args.bytes_from(0));
                let start = wire.now();
                let reply = wire.uart(&bytes, baud);
                wire.advance_to(start + reply.duration_ns);
                Exec::Done(Ok(Some(Value::bytes(&reply.bytes))))
            }
            "gpio_set" if args.len() == 2 => {
                let pin = tri!(args.int(0, 0, self.levels.len() as i64 - 1)) as usize;
                let level = tri!(args.int(1, 0, 1)) as u8;
                let now = wire.now();
                self.set_pin(wire, pin, level, now);
                Exec::Done(Ok(None))
            }
            "gpio_toggle" if args.len() == 1 => {
                let pin = tri!(args.int(0, 0, self.levels.len() as i64 - 1)) as usize;
                let level = 1 - self.levels[pin];
                let now = wire.now();
                self.set_pin(wire, pin, level, now);
                Exec::Done(Ok(None))
            }
            "timer_bench" if (3..=4).contains(&args.len()) => {
                let n = tri!(args.int(0, 1, 64)) as u64;
                let period = tri!(args.int(1, 1, 1_000_000_000)) as u64;
                let pin = tri!(args.int(2, 0, self.levels.len() as i64 - 1)) as usize;
                let repeat = tri!(args.opt_int(3, 1, 1024, 1)) as u64;
                if !wire.pin_wired(pin) {
                    return Exec::Done(fail(errno::EINVAL));
                }
                self.timer_bench(wire, n, period, pin, repeat)
            }
            _ => Exec::Done(fail(errno::EBADMSG)),
        }
    }

    fn metadata(&self) -> String {
        let unsupported: Vec<&str> = self.config.unsupported.iter().map(String::as_str).collect();
        format!(
            "board=virtual-dut fw={FIRMWARE_VERSION} family={} unsupported={}",
            self.config.family,
            unsupported.join(",")
        )
    }

    fn set_pin(&mut self, wire: &mut dyn Wire, pin: usize, level: u8, t: u64) {
        if self.levels[pin] != level {
            self.levels[pin] = level;
            wire.drive_pin(pin, level, t);
        }
    }

    /// Optional pointer write followed by a read of `len` bytes.
    fn i2c_read(&mut self, wire: &mut dyn Wire, addr: u8, reg: Option<u8>, len: usize) -> Exec {
        let Some(speed) = self.i2c_speed else {
            return Exec::Done(fail(errno::ENODEV));
        };
        // what the caller's buffer holds if an error is swallowed
        let stale = Some(Value::bytes(&vec![0; len]));
        if let Some(reg) = reg {
            let mut w = BusTransaction::i2c_write(addr, vec![reg], wire.now(), speed);
            let res = wire.i2c(&mut w);
            wire.advance_to(w.end_ns);
            match res.outcome {
                I2cOutcome::Ack => {}
                I2cOutcome::AddressNack => return self.address_nack_on_read(stale),
                I2cOutcome::DataNack { .. } => return Exec::Done(Err((errno::EIO.into(), stale))),
            }
        }
        let wire_len = if self.has(FaultFlag::ExtraReadByte) {
            len + 1
        } else {
            len
        };
        let mut r = BusTransaction::i2c_read(addr, wire_len, wire.now(), speed);
        let res = wire.i2c(&mut r);
        wire.advance_to(r.end_ns);
        match res.outcome {
            I2cOutcome::Ack => Exec::Done(Ok(Some(Value::bytes(&res.data[..len])))),
            I2cOutcome::AddressNack => self.address_nack_on_read(stale),
            I2cOutcome::DataNack { .. } => Exec::Done(Err((errno::EIO.into(), stale))),
        }
    }

    fn address_nack_on_read(&mut self, stale: Option<Value>) -> Exec {
        if self.has(FaultFlag::MissingErrorCleanup) {
            // the bus lock is never released
            self.hung = true;
        }
        Exec::Done(Err((errno::ENXIO.into(), stale)))
    }

    fn i2c_write(&mut self, wire: &mut dyn Wire, addr: u8, payload: Vec<u8>) -> Exec {
        let Some(speed) = self.i2c_speed else {
            return Exec::Done(fail(errno::ENODEV));
        };
        if self.has(FaultFlag::InvertedStatusCheck) {
            // the address phase goes out, then the inverted poll bails
            let mut probe = BusTransaction::i2c_write(addr, Vec::new(), wire.now(), speed);
            wire.i2c(&mut probe);
            wire.advance_to(probe.end_ns);
            return Exec::Done(fail(errno::EAGAIN));
        }
        if self.has(FaultFlag::StopWhileBusyHang) && self.write_streak >= 2 {
            self.hung = true;
            return Exec::Hang;
        }
        let mut w = BusTransaction::i2c_write(addr, payload, wire.now(), speed);
        let res = wire.i2c(&mut w);
        wire.advance_to(w.end_ns);
        match res.outcome {
            I2cOutcome::Ack => Exec::Done(Ok(None)),
            I2cOutcome::AddressNack => Exec::Done(fail(errno::ENXIO)),
            I2cOutcome::DataNack { .. } => Exec::Done(fail(errno::EIO)),
        }
    }

    /// Toggles `pin` once as a start marker, then arms `n` timers that all
    /// expire `period` after the previous round, `repeat` times. Handlers run
    /// one after another and each toggles `pin`.
    fn timer_bench(&mut self, wire: &mut dyn Wire, n: u64, period: u64, pin: usize, repeat: u64) -> Exec {
        let t0 = wire.now();
        let level = 1 - self.levels[pin];
        self.set_pin(wire, pin, level, t0);
        let scale = 1.0 + self.config.clock_ppm * 1e-6;
        let mut cpu_free = t0;
        for r in 1..=repeat {
            let target = t0 + (r as f64 * period as f64 * scale).round() as u64;
            let mut t = target.max(cpu_free);
            for _ in 0..n {
                t += self.config.handler_overhead_ns;
                if self.config.handler_jitter_ns > 0 {
                    t += self.rng.gen_range(0..=self.config.handler_jitter_ns);
                }
                let level = 1 - self.levels[pin];
                self.set_pin(wire, pin, level, t);
            }
            cpu_free = t;
        }
        wire.advance_to(cpu_free);
        Exec::Done(Ok(Some(Value::Int((n * repeat) as i128))))
    }
}
