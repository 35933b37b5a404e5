//! The virtual device under test: a structured command shell over simulated
//! buses and pins, with a library of seeded driver faults.

mod bench;
mod config;
mod response;
mod shell;

pub use bench::{Bench, REF_COMMAND_LATENCY_NS};
pub use config::{ConfigError, DutConfig, FaultConfig, FaultFlag};
pub use response::{errno, DutResponse, Outcome, Value};
pub use shell::{Dut, Wire, FIRMWARE_VERSION, I2C_SPEED_RANGE, SPI_SPEED_RANGE, UART_BAUD_RANGE};
