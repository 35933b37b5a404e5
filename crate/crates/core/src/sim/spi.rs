use crate::memmap::{Endian, LayoutedMap};
use crate::refdev::{Field, RegError, RegisterFile};

use super::bus::{estimate_bus_speed, wire_time_ns, Bus, BusTransaction};
use super::RegisterSize;

/// Frame header selecting a register write.
pub const SPI_CMD_WRITE: u8 = 0x00;
/// Frame header selecting a register read.
pub const SPI_CMD_READ: u8 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpiModelConfig {
    pub cpol: u8,
    pub cpha: u8,
    pub register_size: RegisterSize,
    pub endianness: Endian,
    pub disabled: bool,
}

impl SpiModelConfig {
    /// Clock mode number, or `None` for an unsupported flag combination.
    pub fn mode(&self) -> Option<u8> {
        match (self.cpol, self.cpha) {
            (0 | 1, 0 | 1) => Some(self.cpol << 1 | self.cpha),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpiOutcome {
    Ok,
    /// Master and slave disagree on the clock mode; the frame is not decoded.
    ModeMismatch,
    /// Frame too short or header unknown; nothing was accessed.
    BadFrame,
    /// The slave configuration or the master mode is not a valid mode.
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpiResult {
    pub outcome: SpiOutcome,
    /// Bytes shifted out on MISO, one per MOSI byte.
    pub miso: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct SpiFields {
    init: Field,
    disable: Field,
    cpol: Field,
    cpha: Field,
    reg_16bit: Field,
    big_endian: Field,
    mode_err: Field,
    reg_index: Field,
    r_count: Field,
    w_count: Field,
    transfer_count: Field,
    dur_ns: Field,
    freq: Field,
    mode_err_count: Field,
    read_frame_count: Field,
    write_frame_count: Field,
    header_err_count: Field,
    short_frame_count: Field,
}

impl SpiFields {
    fn resolve(map: &LayoutedMap) -> Result<Self, RegError> {
        let f = |n: &str| Field::resolve(map, &format!("spi.{n}"));
        Ok(SpiFields {
            init: f("mode.init")?,
            disable: f("mode.disable")?,
            cpol: f("mode.cpol")?,
            cpha: f("mode.cpha")?,
            reg_16bit: f("mode.reg_16bit")?,
            big_endian: f("mode.big_endian")?,
            mode_err: f("status.mode_err")?,
            reg_index: f("reg_index")?,
            r_count: f("r_count")?,
            w_count: f("w_count")?,
            transfer_count: f("transfer_count")?,
            dur_ns: f("dur_ns")?,
            freq: f("freq")?,
            mode_err_count: f("stats.mode_err_count")?,
            read_frame_count: f("stats.read_frame_count")?,
            write_frame_count: f("stats.write_frame_count")?,
            header_err_count: f("stats.header_err_count")?,
            short_frame_count: f("stats.short_frame_count")?,
        })
    }
}

/// SPI slave with a two-byte frame header: command then register index.
///
/// `[0x00, reg, d0, d1, ..]` writes from `reg` on; `[0x80, reg, x, x, ..]`
/// returns register bytes on MISO after the header. MISO carries 0x00
/// during the header and 0xFF for undecoded frames.
#[derive(Debug, Clone)]
pub struct SpiSlave {
    config: SpiModelConfig,
    fields: SpiFields,
}

impl SpiSlave {
    pub fn new(regs: &mut RegisterFile) -> Result<Self, RegError> {
        let fields = SpiFields::resolve(regs.map())?;
        let mut slave = SpiSlave {
            config: SpiModelConfig {
                cpol: 0,
                cpha: 0,
                register_size: RegisterSize::Bits8,
                endianness: Endian::Little,
                disabled: false,
            },
            fields,
        };
        slave.reinit(regs);
        Ok(slave)
    }

    pub fn config(&self) -> &SpiModelConfig {
        &self.config
    }

    pub fn init_field(&self) -> Field {
        self.fields.init
    }

    pub fn reinit(&mut self, regs: &mut RegisterFile) {
        let f = &self.fields;
        self.config = SpiModelConfig {
            cpol: regs.get(f.cpol) as u8,
            cpha: regs.get(f.cpha) as u8,
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
            disabled: regs.flag(f.disable),
        };
        regs.clear_module_status("spi");
    }

    pub fn transact(&mut self, txn: &mut BusTransaction, regs: &mut RegisterFile) -> SpiResult {
        debug_assert_eq!(txn.bus, Bus::Spi);
        let cfg = self.config;
        let f = self.fields;
        let n = txn.payload.len();
        txn.end_ns = txn.start_ns + wire_time_ns(Bus::Spi, n as u64, txn.bitrate);
        let undecoded = |outcome| SpiResult {
            outcome,
            miso: vec![0xff; n],
        };

        let Some(slave_mode) = cfg.mode() else {
            return undecoded(SpiOutcome::Unsupported);
        };
        if txn.mode > 3 {
            return undecoded(SpiOutcome::Unsupported);
        }
        if cfg.disabled {
            return undecoded(SpiOutcome::BadFrame);
        }

        regs.bump(f.transfer_count, 1);
        regs.set(f.dur_ns, txn.duration_ns().min(u32::MAX as u64) as i128);
        if n > 0 {
            if let Ok(hz) = estimate_bus_speed(txn) {
                regs.set(f.freq, hz.round() as i128);
            }
        }
        if txn.mode != slave_mode {
            regs.set(f.mode_err, 1);
            regs.bump(f.mode_err_count, 1);
            return undecoded(SpiOutcome::ModeMismatch);
        }
        regs.set(f.mode_err, 0);
        if n < 2 {
            regs.bump(f.short_frame_count, 1);
            return undecoded(SpiOutcome::BadFrame);
        }

        let pointer = txn.payload[1] as u16;
        txn.register = Some(pointer);
        regs.set(f.reg_index, pointer as i128);
        let mut miso = vec![0x00, 0x00];
        match txn.payload[0] {
            SPI_CMD_WRITE => {
                regs.bump(f.write_frame_count, 1);
                for (k, &b) in txn.payload[2..].iter().enumerate() {
                    regs.bus_write(cfg.register_size.stream_offset(pointer, k, cfg.endianness), b);
                    miso.push(0x00);
                }
                regs.bump(f.w_count, (n - 2) as u64);
            }
            SPI_CMD_READ => {
                regs.bump(f.read_frame_count, 1);
                for k in 0..n - 2 {
                    miso.push(regs.bus_read(cfg.register_size.stream_offset(pointer, k, cfg.endianness)));
                }
                regs.bump(f.r_count, (n - 2) as u64);
            }
            _ => {
                regs.bump(f.header_err_count, 1);
                return undecoded(SpiOutcome::BadFrame);
            }
        }
        SpiResult {
            outcome: SpiOutcome::Ok,
            miso,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memmap::reference_map;
    use std::sync::Arc;

    fn setup() -> (RegisterFile, SpiSlave) {
        let mut regs = RegisterFile::new(Arc::new(reference_map()));
        let slave = SpiSlave::new(&mut regs).unwrap();
        (regs, slave)
    }

    fn set(regs: &mut RegisterFile, name: &str, v: i128) {
        let f = Field::resolve(regs.map(), name).unwrap();
        regs.set(f, v);
    }

    #[test]
    fn write_then_read_back() {
        let (mut regs, mut slave) = setup();
        let mut w = BusTransaction::spi_transfer(vec![SPI_CMD_WRITE, 5, 0xab], 0, 0, 1_000_000);
        assert_eq!(slave.transact(&mut w, &mut regs).outcome, SpiOutcome::Ok);
        let mut r = BusTransaction::spi_transfer(vec![SPI_CMD_READ, 5, 0], 0, w.end_ns, 1_000_000);
        let res = slave.transact(&mut r, &mut regs);
        assert_eq!(res.miso, vec![0, 0, 0xab]);
    }

    #[test]
    fn sixteen_bit_big_endian() {
        let (mut regs, mut slave) = setup();
        set(&mut regs, "spi.mode.reg_16bit", 1);
        set(&mut regs, "spi.mode.big_endian", 1);
        slave.reinit(&mut regs);
        let mut w = BusTransaction::spi_transfer(vec![SPI_CMD_WRITE, 2, 0x12, 0x34], 0, 0, 1_000_000);
        slave.transact(&mut w, &mut regs);
        assert_eq!(&regs.committed()[4..6], &[0x12, 0x34]);
    }

    #[test]
    fn duration_is_bits_over_bitrate() {
        let (mut regs, mut slave) = setup();
        let mut t = BusTransaction::spi_transfer(vec![0x80, 0, 0, 0, 0], 0, 0, 1_000_000);
        slave.transact(&mut t, &mut regs);
        assert_eq!(t.duration_ns(), 5 * 8_000);
    }

    #[test]
    fn unsupported_flags_leave_state_alone() {
        let (mut regs, mut slave) = setup();
        set(&mut regs, "spi.mode.cpol", 2);
        slave.reinit(&mut regs);
        let before = regs.committed().to_vec();
        let mut t = BusTransaction::spi_transfer(vec![SPI_CMD_WRITE, 0, 7], 0, 0, 1_000_000);
        assert_eq!(slave.transact(&mut t, &mut regs).outcome, SpiOutcome::Unsupported);
        assert_eq!(regs.committed(), &before[..]);
    }

    #[test]
    fn mode_mismatch_is_not_decoded() {
        let (mut regs, mut slave) = setup();
        let mut t = BusTransaction::spi_transfer(vec![SPI_CMD_WRITE, 0, 7], 3, 0, 1_000_000);
        let res = slave.transact(&mut t, &mut regs);
        assert_eq!(res.outcome, SpiOutcome::ModeMismatch);
        assert_eq!(res.miso, vec![0xff; 3]);
        assert_eq!(regs.committed()[0], 0);
    }
}
