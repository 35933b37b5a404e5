use std::sync::Arc;

use crate::memmap::{reference_map, LayoutedMap};
use crate::refdev::{RefDevice, REF_PINS};
use crate::sim::{BusTransaction, I2cResult, Scheduler, SpiResult, UartReply};

use super::config::{DutConfig, FaultConfig};
use super::response::DutResponse;
use super::shell::{Dut, Wire};

/// Time the reference device takes to answer one protocol line.
pub const REF_COMMAND_LATENCY_NS: u64 = 25_000;

#[derive(Debug, Clone, Copy)]
struct PinEdge {
    ref_pin: usize,
    level: u8,
}

/// The reference device plus the physical wiring, on one scheduler.
#[derive(Debug, Clone)]
struct Rig {
    sched: Scheduler<PinEdge>,
    refdev: RefDevice,
    wiring: Vec<Option<usize>>,
}

impl Rig {
    fn run_until(&mut self, t: u64) {
        let refdev = &mut self.refdev;
        self.sched
            .run_until(t, |at, e| refdev.pin_input(e.ref_pin, e.level, at));
    }
}

impl Wire for Rig {
    fn now(&self) -> u64 {
        self.sched.now()
    }

    fn advance_to(&mut self, t: u64) {
        self.run_until(t);
    }

    fn i2c(&mut self, txn: &mut BusTransaction) -> I2cResult {
        self.run_until(txn.start_ns);
        self.refdev.i2c_transact(txn)
    }

    fn spi(&mut self, txn: &mut BusTransaction) -> SpiResult {
        self.run_until(txn.start_ns);
        self.refdev.spi_transact(txn)
    }

    fn uart(&mut self, bytes: &[u8], bitrate: u32) -> UartReply {
        self.refdev.uart_receive(bytes, bitrate)
    }

    fn drive_pin(&mut self, pin: usize, level: u8, t: u64) {
        if let Some(Some(ref_pin)) = self.wiring.get(pin) {
            self.sched.schedule(
                t,
                PinEdge {
                    ref_pin: *ref_pin,
                    level,
                },
            );
        }
    }

    fn pin_wired(&self, pin: usize) -> bool {
        matches!(self.wiring.get(pin), Some(Some(p)) if *p < REF_PINS)
    }
}

/// One DUT wired to one reference device, sharing a simulated clock.
#[derive(Debug, Clone)]
pub struct Bench {
    rig: Rig,
    dut: Dut,
}

impl Bench {
    pub fn new(board: DutConfig, faults: &FaultConfig, seed: u64) -> Self {
        Bench::with_map(Arc::new(reference_map()), board, faults, seed).expect("reference map has every model field")
    }

    pub fn healthy(seed: u64) -> Self {
        Bench::new(DutConfig::default(), &FaultConfig::none(), seed)
    }

    pub fn with_map(
        map: Arc<LayoutedMap>,
        board: DutConfig,
        faults: &FaultConfig,
        seed: u64,
    ) -> Result<Self, crate::refdev::RegError> {
        let refdev = RefDevice::new(map, seed)?;
        let wiring = board.wiring.clone();
        let dut = Dut::new(board, faults, seed.wrapping_add(0x5eed));
        Ok(Bench {
            rig: Rig {
                sched: Scheduler::new(),
                refdev,
                wiring,
            },
            dut,
        })
    }

    pub fn now(&self) -> u64 {
        self.rig.sched.now()
    }

    pub fn refdev(&self) -> &RefDevice {
        &self.rig.refdev
    }

    pub fn dut(&self) -> &Dut {
        &self.dut
    }

    /// Sends one protocol line to the reference device.
    pub fn ref_line(&mut self, line: &str) -> String {
        let t = self.now() + REF_COMMAND_LATENCY_NS;
        self.rig.run_until(t);
        self.rig.refdev.handle_line(line, t).to_string()
    }

    /// Sends one shell line to the DUT.
    pub fn dut_line(&mut self, line: &str) -> String {
        self.dut_command(line).to_line()
    }

    pub fn dut_command(&mut self, line: &str) -> DutResponse {
        self.dut.handle_line(line, &mut self.rig)
    }

    /// Lets time pass with no commands in flight.
    pub fn idle(&mut self, ns: u64) {
        let t = self.now() + ns;
        self.rig.run_until(t);
    }
}
