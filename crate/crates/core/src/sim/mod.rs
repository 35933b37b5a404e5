//! Deterministic wire-level models on a shared nanosecond clock.

pub mod bus;
pub mod clock;
pub mod gpio;
pub mod i2c;
pub mod spi;
pub mod uart;

pub use bus::{estimate_bus_speed, wire_time_ns, Bus, BusTransaction, Direction, EstimateError};
pub use clock::{Scheduler, SimClock};
pub use gpio::{CaptureKind, CaptureMethod, Edges, GpioEvent, GpioTrace, RecordOutcome};
pub use i2c::{I2cModelConfig, I2cOutcome, I2cResult, I2cSlave};
pub use spi::{SpiModelConfig, SpiOutcome, SpiResult, SpiSlave, SPI_CMD_READ, SPI_CMD_WRITE};
pub use uart::{uart_process, UartConfig, UartEndpoint, UartMode, UartReply};

use crate::memmap::Endian;

/// Width of one bus-addressable register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterSize {
    Bits8,
    Bits16,
}

impl RegisterSize {
    pub fn bytes(self) -> usize {
        match self {
            RegisterSize::Bits8 => 1,
            RegisterSize::Bits16 => 2,
        }
    }

    /// Register-file offset of the `k`-th data byte of a bus stream starting
    /// at register `pointer`. 16-bit words travel MSB first.
    pub fn stream_offset(self, pointer: u16, k: usize, endian: Endian) -> usize {
        match self {
            RegisterSize::Bits8 => pointer as usize + k,
            RegisterSize::Bits16 => {
                let word = pointer as usize + k / 2;
                let msb_first = k % 2;
                let within = match endian {
                    Endian::Big => msb_first,
                    Endian::Little => 1 - msb_first,
                };
                word * 2 + within
            }
        }
    }
}
