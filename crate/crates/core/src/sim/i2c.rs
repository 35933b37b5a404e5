use crate::memmap::{Endian, LayoutedMap};
use crate::refdev::{Field, RegError, RegisterFile};

use super::bus::{estimate_bus_speed, wire_time_ns, Bus, BusTransaction, Direction};
use super::RegisterSize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct I2cModelConfig {
    pub slave_address: u8,
    pub register_size: RegisterSize,
    pub endianness: Endian,
    pub clock_stretch_ns: u64,
    pub nack_data: bool,
    pub nack_addr: bool,
    pub disabled: bool,
}

impl Default for I2cModelConfig {
    fn default() -> Self {
        I2cModelConfig {
            slave_address: 0x55,
            register_size: RegisterSize::Bits8,
            endianness: Endian::Little,
            clock_stretch_ns: 0,
            nack_data: false,
            nack_addr: false,
            disabled: false,
        }
    }
}

impl I2cModelConfig {
    pub fn address_valid(&self) -> bool {
        (0x08..=0x77).contains(&self.slave_address)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum I2cOutcome {
    Ack,
    AddressNack,
    /// The data byte at `index` was NACKed; earlier bytes were accepted.
    DataNack {
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct I2cResult {
    pub outcome: I2cOutcome,
    /// Bytes shipped to the master (reads only).
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct I2cFields {
    init: Field,
    disable: Field,
    reg_16bit: Field,
    big_endian: Field,
    nack_data: Field,
    nack_addr: Field,
    clk_stretch_ns: Field,
    slave_addr: Field,
    busy: Field,
    addr_match: Field,
    nacked: Field,
    state: Field,
    reg_index: Field,
    start_reg_index: Field,
    r_count: Field,
    w_count: Field,
    s_count: Field,
    nack_count: Field,
    dur_ns: Field,
    freq: Field,
    last_bytes: Field,
    read_txn_count: Field,
    write_txn_count: Field,
    stretch_count: Field,
    max_stretch_ns: Field,
    min_freq: Field,
    max_freq: Field,
}

impl I2cFields {
    fn resolve(map: &LayoutedMap) -> Result<Self, RegError> {
        let f = |n: &str| Field::resolve(map, &format!("i2c.{n}"));
        Ok(I2cFields {
            init: f("mode.init")?,
            disable: f("mode.disable")?,
            reg_16bit: f("mode.reg_16bit")?,
            big_endian: f("mode.big_endian")?,
            nack_data: f("mode.nack_data")?,
            nack_addr: f("mode.nack_addr")?,
            clk_stretch_ns: f("clk_stretch_ns")?,
            slave_addr: f("slave_addr_1")?,
            busy: f("status.busy")?,
            addr_match: f("status.addr_match")?,
            nacked: f("status.nacked")?,
            state: f("state")?,
            reg_index: f("reg_index")?,
            start_reg_index: f("start_reg_index")?,
            r_count: f("r_count")?,
            w_count: f("w_count")?,
            s_count: f("s_count")?,
            nack_count: f("nack_count")?,
            dur_ns: f("dur_ns")?,
            freq: f("freq")?,
            last_bytes: f("last_bytes")?,
            read_txn_count: f("stats.read_txn_count")?,
            write_txn_count: f("stats.write_txn_count")?,
            stretch_count: f("stats.stretch_count")?,
            max_stretch_ns: f("max_stretch_ns")?,
            min_freq: f("min_freq")?,
            max_freq: f("max_freq")?,
        })
    }
}

/// I2C slave serving the register file.
///
/// A write transaction's first byte sets the register pointer, further bytes
/// are stored from the pointer on. Reads ship bytes from the pointer on.
/// With 16-bit registers the pointer indexes 2-byte words that travel MSB
/// first on the wire and are stored in the configured byte order.
#[derive(Debug, Clone)]
pub struct I2cSlave {
    config: I2cModelConfig,
    pointer: u16,
    fields: I2cFields,
}

impl I2cSlave {
    pub fn new(regs: &mut RegisterFile) -> Result<Self, RegError> {
        let fields = I2cFields::resolve(regs.map())?;
        let mut slave = I2cSlave {
            config: I2cModelConfig::default(),
            pointer: 0,
            fields,
        };
        slave.reinit(regs);
        Ok(slave)
    }

    pub fn config(&self) -> &I2cModelConfig {
        &self.config
    }

    pub fn init_field(&self) -> Field {
        self.fields.init
    }

    /// Reloads configuration from committed registers and zeroes counters.
    pub fn reinit(&mut self, regs: &mut RegisterFile) {
        let f = &self.fields;
        self.config = I2cModelConfig {
            slave_address: (regs.get(f.slave_addr) & 0x7f) as u8,
            register_size: if regs.flag(f.reg_16bit) {
                RegisterSize::Bits16
            } else {
                RegisterSize::Bits8
            },
            endianness: if regs.flag(f.big_endian) {
                Endian::Big
            } else {
                Endian::Little
            },
            clock_stretch_ns: regs.get_u64(f.clk_stretch_ns),
            nack_data: regs.flag(f.nack_data),
            nack_addr: regs.flag(f.nack_addr),
            disabled: regs.flag(f.disable),
        };
        self.pointer = 0;
        regs.clear_module_status("i2c");
    }

    /// Runs one transaction against the register file and stamps its end time.
    pub fn transact(&mut self, txn: &mut BusTransaction, regs: &mut RegisterFile) -> I2cResult {
        debug_assert_eq!(txn.bus, Bus::I2c);
        let cfg = self.config;
        let f = self.fields;
        let address_time = wire_time_ns(Bus::I2c, 1, txn.bitrate);

        if cfg.disabled || txn.address != Some(cfg.slave_address) {
            txn.end_ns = txn.start_ns + address_time;
            return I2cResult {
                outcome: I2cOutcome::AddressNack,
                data: Vec::new(),
            };
        }

        regs.bump(f.s_count, 1);
        regs.set(f.addr_match, 1);
        regs.set(f.start_reg_index, self.pointer as i128);
        if cfg.nack_addr {
            regs.bump(f.nack_count, 1);
            regs.set(f.nacked, 1);
            txn.end_ns = txn.start_ns + address_time + cfg.clock_stretch_ns;
            return I2cResult {
                outcome: I2cOutcome::AddressNack,
                data: Vec::new(),
            };
        }

        let mut outcome = I2cOutcome::Ack;
        let mut data = Vec::new();
        let moved;
        match txn.direction {
            Direction::Write | Direction::Transfer => {
                regs.bump(f.write_txn_count, 1);
                let mut accepted = 0;
                for (k, &byte) in txn.payload.iter().enumerate() {
                    if cfg.nack_data {
                        outcome = I2cOutcome::DataNack { index: k };
                        regs.bump(f.nack_count, 1);
                        break;
                    }
                    if k == 0 {
                        self.pointer = byte as u16;
                        txn.register = Some(self.pointer);
                    } else {
                        let at = cfg.register_size.stream_offset(self.pointer, k - 1, cfg.endianness);
                        regs.bus_write(at, byte);
                    }
                    accepted += 1;
                }
                regs.bump(f.w_count, accepted as u64);
                // a NACKed byte still occupied the wire
                moved = match outcome {
                    I2cOutcome::DataNack { index } => index + 1,
                    _ => accepted,
                };
            }
            Direction::Read => {
                regs.bump(f.read_txn_count, 1);
                txn.register = Some(self.pointer);
                for k in 0..txn.payload.len() {
                    let at = cfg.register_size.stream_offset(self.pointer, k, cfg.endianness);
                    data.push(regs.bus_read(at));
                }
                txn.payload.copy_from_slice(&data);
                regs.bump(f.r_count, data.len() as u64);
                moved = data.len();
            }
        }

        txn.end_ns = txn.start_ns + wire_time_ns(Bus::I2c, 1 + moved as u64, txn.bitrate) + cfg.clock_stretch_ns;

        regs.set(f.reg_index, self.pointer as i128);
        regs.set(f.dur_ns, txn.duration_ns().min(u32::MAX as u64) as i128);
        regs.set(f.last_bytes, moved as i128);
        regs.set(f.nacked, i128::from(outcome != I2cOutcome::Ack));
        regs.set(f.busy, 0);
        regs.set(f.state, 0);
        if cfg.clock_stretch_ns > 0 {
            regs.bump(f.stretch_count, 1);
            let max = regs.get_u64(f.max_stretch_ns).max(cfg.clock_stretch_ns);
            regs.set(f.max_stretch_ns, max.min(u32::MAX as u64) as i128);
        }
        if moved > 0 {
            let mut wire = txn.clone();
            wire.payload.truncate(moved);
            if let Ok(hz) = estimate_bus_speed(&wire) {
                let hz = hz.round() as i128;
                regs.set(f.freq, hz);
                let min = regs.get(f.min_freq);
                if min == 0 || hz < min {
                    regs.set(f.min_freq, hz);
                }
                if hz > regs.get(f.max_freq) {
                    regs.set(f.max_freq, hz);
                }
            }
        }
        I2cResult { outcome, data }
    }
}
