use std::sync::Arc;

use crate::memmap::{reference_map, LayoutedMap};
use crate::sim::{
    BusTransaction, CaptureKind, CaptureMethod, GpioTrace, I2cResult, I2cSlave, RecordOutcome, SpiResult, SpiSlave,
    UartEndpoint, UartReply,
};

use super::protocol::{self, Command, CommandResponse, DeviceHooks, ResultCode};
use super::regfile::{Field, RegError, RegisterFile};

/// Input pins of the reference device. Pins 0..=2 are the general GPIO
/// inputs, pin 3 is the timer capture input.
pub const REF_PINS: usize = 4;

#[derive(Debug, Clone, Copy)]
struct PinFields {
    level: Field,
    edge_count: Field,
    rise_count: Field,
    fall_count: Field,
    drop_count: Field,
    last_edge_ns: Field,
    high_ns: Field,
    low_ns: Field,
}

#[derive(Debug, Clone, Copy)]
struct TraceFields {
    method: Field,
    disable: Field,
    pin_mask: Field,
    pin_count: [Field; REF_PINS],
    tmin_drop_count: Field,
    dup_drop_count: Field,
    wrap_count: Field,
    first_ns: Field,
    last_ns: Field,
    index: Field,
    overrun: Field,
    tick: Field,
    source: Field,
}

#[derive(Debug, Clone, Copy)]
struct SysFields {
    tick: Field,
    commit_count: Field,
    init_count: Field,
    rr_count: Field,
    wr_count: Field,
    ex_count: Field,
    version_count: Field,
    reset_count: Field,
    parse_err_count: Field,
    range_err_count: Field,
    access_err_count: Field,
    internal_err_count: Field,
    staged_count: Field,
    init_req_count: Field,
    line_count: Field,
    capture_count: Field,
    timer_dropped: Field,
}

fn resolve_pins(map: &LayoutedMap) -> Result<[Option<PinFields>; REF_PINS], RegError> {
    let mut out = [None; REF_PINS];
    for (k, slot) in out.iter_mut().enumerate().take(3) {
        let f = |n: &str| Field::resolve(map, &format!("gpio{k}.{n}"));
        *slot = Some(PinFields {
            level: f("status.level")?,
            edge_count: f("edge_count")?,
            rise_count: f("stats.rise_count")?,
            fall_count: f("stats.fall_count")?,
            drop_count: f("stats.drop_count")?,
            last_edge_ns: f("last_edge_ns")?,
            high_ns: f("high_ns")?,
            low_ns: f("low_ns")?,
        });
    }
    Ok(out)
}

/// Everything on the device besides the register file.
#[derive(Debug, Clone)]
struct Models {
    i2c: I2cSlave,
    spi: SpiSlave,
    uart: UartEndpoint,
    trace: GpioTrace,
    seed: u64,
    trace_epoch: u64,
    levels: [u8; REF_PINS],
    last_change: [u64; REF_PINS],
    pins: [Option<PinFields>; REF_PINS],
    tf: TraceFields,
    sf: SysFields,
}

/// Host-side state of the reference device: register file, peripheral
/// models, input pins and the edge trace.
#[derive(Debug, Clone)]
pub struct RefDevice {
    regs: RegisterFile,
    m: Models,
}

impl RefDevice {
    pub fn new(map: Arc<LayoutedMap>, seed: u64) -> Result<Self, RegError> {
        let mut regs = RegisterFile::new(Arc::clone(&map));
        let i2c = I2cSlave::new(&mut regs)?;
        let spi = SpiSlave::new(&mut regs)?;
        let uart = UartEndpoint::new(&mut regs)?;
        let t = |n: &str| Field::resolve(&map, &format!("trace.{n}"));
        let tf = TraceFields {
            method: t("mode.method")?,
            disable: t("mode.disable")?,
            pin_mask: t("cfg.pin_mask")?,
            pin_count: [
                t("stats.pin0_count")?,
                t("stats.pin1_count")?,
                t("stats.pin2_count")?,
                t("stats.pin3_count")?,
            ],
            tmin_drop_count: t("stats.tmin_drop_count")?,
            dup_drop_count: t("stats.dup_drop_count")?,
            wrap_count: t("stats.wrap_count")?,
            first_ns: t("first_ns")?,
            last_ns: t("last_ns")?,
            index: t("index")?,
            overrun: t("overrun")?,
            tick: t("tick")?,
            source: t("source")?,
        };
        let s = |n: &str| Field::resolve(&map, n);
        let sf = SysFields {
            tick: s("sys.tick")?,
            commit_count: s("sys.status.commit_count")?,
            init_count: s("sys.status.init_count")?,
            rr_count: s("sys.stats.rr_count")?,
            wr_count: s("sys.stats.wr_count")?,
            ex_count: s("sys.stats.ex_count")?,
            version_count: s("sys.stats.version_count")?,
            reset_count: s("sys.stats.reset_count")?,
            parse_err_count: s("sys.stats.parse_err_count")?,
            range_err_count: s("sys.stats.range_err_count")?,
            access_err_count: s("sys.stats.access_err_count")?,
            internal_err_count: s("sys.stats.internal_err_count")?,
            staged_count: s("sys.stats.staged_count")?,
            init_req_count: s("sys.stats.init_req_count")?,
            line_count: s("sys.stats.line_count")?,
            capture_count: s("timer.stats.capture_count")?,
            timer_dropped: s("timer.stats.dropped_count")?,
        };
        let pins = resolve_pins(&map)?;
        let mut m = Models {
            i2c,
            spi,
            uart,
            trace: GpioTrace::new(CaptureMethod::new(CaptureKind::TimerCaptureIrq), seed),
            seed,
            trace_epoch: 0,
            levels: [0; REF_PINS],
            last_change: [0; REF_PINS],
            pins,
            tf,
            sf,
        };
        m.restart_trace(&mut regs);
        Ok(RefDevice { regs, m })
    }

    /// Device built on the bundled reference map.
    pub fn reference(seed: u64) -> Self {
        RefDevice::new(Arc::new(reference_map()), seed).expect("reference map has every model field")
    }

    pub fn regs(&self) -> &RegisterFile {
        &self.regs
    }

    pub fn map(&self) -> &Arc<LayoutedMap> {
        self.regs.map()
    }

    pub fn trace(&self) -> &GpioTrace {
        &self.m.trace
    }

    pub fn i2c(&self) -> &I2cSlave {
        &self.m.i2c
    }

    pub fn spi(&self) -> &SpiSlave {
        &self.m.spi
    }

    pub fn uart(&self) -> &UartEndpoint {
        &self.m.uart
    }

    pub fn pin_level(&self, pin: usize) -> u8 {
        self.m.levels.get(pin).copied().unwrap_or(0)
    }

    /// Handles one protocol line received at simulated time `now`.
    pub fn handle_line(&mut self, line: &str, now: u64) -> CommandResponse {
        self.regs.set(self.m.sf.tick, now as i128);
        self.regs.bump(self.m.sf.line_count, 1);
        let sf = self.m.sf;
        let cmd = protocol::parse_command(line.trim_end_matches(['\r', '\n']));
        match &cmd {
            Some(Command::ReadRegs { .. }) => self.regs.bump(sf.rr_count, 1),
            Some(Command::WriteRegs { .. }) => self.regs.bump(sf.wr_count, 1),
            Some(Command::Execute) => self.regs.bump(sf.ex_count, 1),
            Some(Command::Version) => self.regs.bump(sf.version_count, 1),
            Some(Command::Reset) => {}
            None => self.regs.bump(sf.parse_err_count, 1),
        }
        let Some(cmd) = cmd else {
            return CommandResponse::error(ResultCode::ParseError);
        };
        let is_reset = cmd == Command::Reset;
        let is_write = matches!(cmd, Command::WriteRegs { .. });
        let resp = protocol::execute_command(&mut self.regs, &mut self.m, cmd);
        match resp.result {
            ResultCode::Success if is_reset => {
                self.regs.set(sf.tick, now as i128);
                self.regs.bump(sf.reset_count, 1);
            }
            ResultCode::Success if is_write => self.regs.bump(sf.staged_count, 1),
            ResultCode::Success | ResultCode::ParseError => {}
            ResultCode::OutOfRange => self.regs.bump(sf.range_err_count, 1),
            ResultCode::AccessViolation => self.regs.bump(sf.access_err_count, 1),
            ResultCode::Internal => self.regs.bump(sf.internal_err_count, 1),
        }
        resp
    }

    pub fn i2c_transact(&mut self, txn: &mut BusTransaction) -> I2cResult {
        self.m.i2c.transact(txn, &mut self.regs)
    }

    pub fn spi_transact(&mut self, txn: &mut BusTransaction) -> SpiResult {
        self.m.spi.transact(txn, &mut self.regs)
    }

    pub fn uart_receive(&mut self, bytes: &[u8], bitrate: u32) -> UartReply {
        self.m.uart.receive(bytes, bitrate, &mut self.regs)
    }

    /// Drives input `pin` to `level` at time `t`. Repeated levels are no-ops.
    pub fn pin_input(&mut self, pin: usize, level: u8, t: u64) {
        self.m.pin_input(&mut self.regs, pin, level, t);
    }
}

impl Models {
    fn pin_input(&mut self, regs: &mut RegisterFile, pin: usize, level: u8, t: u64) {
        if pin >= REF_PINS {
            return;
        }
        let level = u8::from(level != 0);
        if self.levels[pin] == level {
            return;
        }
        let held = t.saturating_sub(self.last_change[pin]);
        self.levels[pin] = level;
        self.last_change[pin] = t;
        if let Some(p) = self.pins[pin] {
            regs.set(p.level, level as i128);
            regs.bump(p.edge_count, 1);
            regs.bump(if level == 1 { p.rise_count } else { p.fall_count }, 1);
            regs.set(p.last_edge_ns, t as i128);
            // the phase that just ended
            let phase = if level == 1 { p.low_ns } else { p.high_ns };
            regs.set(phase, held.min(u32::MAX as u64) as i128);
        }
        self.capture(regs, pin, level, t);
    }

    fn capture(&mut self, regs: &mut RegisterFile, pin: usize, level: u8, t: u64) {
        let tf = self.tf;
        if regs.flag(tf.disable) || regs.get(tf.pin_mask) as u64 & (1 << pin) == 0 {
            return;
        }
        match self.trace.record(pin as u8, level, t) {
            RecordOutcome::Accepted(ev) => {
                let total = self.trace.total();
                let slot = ((total - 1) % tf.tick.len as u64) as usize;
                if total > tf.tick.len as u64 {
                    regs.bump(tf.wrap_count, 1);
                }
                regs.set_elem(tf.tick, slot, ev.timestamp_ns as i128);
                regs.set_elem(tf.source, slot, (ev.pin | ev.level << 7) as i128);
                if total == 1 {
                    regs.set(tf.first_ns, ev.timestamp_ns as i128);
                }
                regs.set(tf.last_ns, ev.timestamp_ns as i128);
                regs.set(tf.index, total as i128);
                regs.bump(tf.pin_count[pin], 1);
                if pin == 3 {
                    regs.bump(self.sf.capture_count, 1);
                }
            }
            outcome @ (RecordOutcome::TooSoon | RecordOutcome::DuplicateLevel) => {
                let counter = if outcome == RecordOutcome::TooSoon {
                    tf.tmin_drop_count
                } else {
                    tf.dup_drop_count
                };
                regs.bump(counter, 1);
                regs.set(tf.overrun, self.trace.overrun() as i128);
                if let Some(p) = self.pins[pin] {
                    regs.bump(p.drop_count, 1);
                } else {
                    regs.bump(self.sf.timer_dropped, 1);
                }
            }
            RecordOutcome::Ignored => {}
        }
    }

    fn restart_trace(&mut self, regs: &mut RegisterFile) {
        let code = regs.get(self.tf.method) as u8;
        // unknown codes keep the default method
        let kind = CaptureKind::from_code(code).unwrap_or(CaptureKind::TimerCaptureIrq);
        self.trace_epoch += 1;
        let seed = self.seed ^ self.trace_epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        self.trace = GpioTrace::new(CaptureMethod::new(kind), seed);
        regs.clear_module_status("trace");
    }

    fn reinit_pin(&mut self, regs: &mut RegisterFile, pin: usize) {
        let module = format!("gpio{pin}");
        regs.clear_module_status(&module);
        if let Some(p) = self.pins[pin] {
            regs.set(p.level, self.levels[pin] as i128);
        }
    }
}

impl DeviceHooks for Models {
    fn reinit(&mut self, module: &str, regs: &mut RegisterFile) {
        regs.bump(self.sf.init_req_count, 1);
        regs.bump(self.sf.init_count, 1);
        match module {
            "i2c" => self.i2c.reinit(regs),
            "spi" => self.spi.reinit(regs),
            "uart" => self.uart.reinit(regs),
            "trace" => self.restart_trace(regs),
            "gpio0" => self.reinit_pin(regs, 0),
            "gpio1" => self.reinit_pin(regs, 1),
            "gpio2" => self.reinit_pin(regs, 2),
            other => regs.clear_module_status(other),
        }
        regs.bump(self.sf.commit_count, 1);
    }

    fn reset(&mut self, regs: &mut RegisterFile) {
        self.i2c.reinit(regs);
        self.spi.reinit(regs);
        self.uart.reinit(regs);
        self.trace_epoch = 0;
        self.restart_trace(regs);
        for pin in 0..3 {
            self.reinit_pin(regs, pin);
        }
    }
}
