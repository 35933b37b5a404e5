//! Simulated hardware-in-the-loop test stack for embedded peripheral APIs.
//!
//! - [`memmap`]: register-map configuration, packed layout and artifact emitters.
//! - [`refdev`]: the reference device (register file, line protocol, peripheral models).
//! - [`sim`]: nanosecond clock, event scheduler and wire-level peripheral models.
//! - [`dut`]: the virtual device under test with its structured shell and seeded faults.
//! - [`pal`]: name-based clients for both endpoints, transports and the REPL.
//! - [`harness`]: suite manifests, the runner, timing statistics and reports.

pub mod dut;
pub mod harness;
pub mod memmap;
pub mod pal;
pub mod refdev;
pub mod sim;
