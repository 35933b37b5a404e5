//! The reference device: register file, line protocol and the device that
//! binds the peripheral models to its registers.

mod device;
pub mod protocol;
mod regfile;

pub use device::{RefDevice, REF_PINS};
pub use protocol::{handle_line, Command, CommandResponse, DeviceHooks, NoHooks, ResponseData, ResultCode};
pub use regfile::{Field, RegError, RegisterFile};
