use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bus {
    I2c,
    Spi,
    Uart,
}

impl Bus {
    /// Bits on the wire per payload byte: 8 data + ACK for I2C, 8 for SPI,
    /// start + 8 data + stop for UART.
    pub fn bits_per_byte(self) -> u64 {
        match self {
            Bus::I2c => 9,
            Bus::Spi => 8,
            Bus::Uart => 10,
        }
    }

    /// Bytes of fixed per-transaction overhead (the I2C address byte).
    pub fn overhead_bytes(self) -> u64 {
        match self {
            Bus::I2c => 1,
            Bus::Spi | Bus::Uart => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Read,
    Write,
    Transfer,
}

/// One exchange on a simulated bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusTransaction {
    pub bus: Bus,
    pub direction: Direction,
    /// 7-bit target address (I2C only).
    pub address: Option<u8>,
    /// Register index addressed by the transaction, when known.
    pub register: Option<u16>,
    /// Bytes that crossed the wire after the address phase. For reads the
    /// master supplies a placeholder of the requested length and the slave
    /// fills it in.
    pub payload: Vec<u8>,
    pub start_ns: u64,
    pub end_ns: u64,
    pub bitrate: u32,
    /// SPI clock mode used by the master (0..=3); ignored by other buses.
    pub mode: u8,
}

impl BusTransaction {
    pub fn i2c_write(address: u8, payload: Vec<u8>, start_ns: u64, bitrate: u32) -> Self {
        BusTransaction {
            bus: Bus::I2c,
            direction: Direction::Write,
            address: Some(address),
            register: payload.first().map(|&r| r as u16),
            payload,
            start_ns,
            end_ns: start_ns,
            bitrate,
            mode: 0,
        }
    }

    pub fn i2c_read(address: u8, len: usize, start_ns: u64, bitrate: u32) -> Self {
        BusTransaction {
            bus: Bus::I2c,
            direction: Direction::Read,
            address: Some(address),
            register: None,
            payload: vec![0xff; len],
            start_ns,
            end_ns: start_ns,
            bitrate,
            mode: 0,
        }
    }

    pub fn spi_transfer(mosi: Vec<u8>, mode: u8, start_ns: u64, bitrate: u32) -> Self {
        BusTransaction {
            bus: Bus::Spi,
            direction: Direction::Transfer,
            address: None,
            register: None,
            payload: mosi,
            start_ns,
            end_ns: start_ns,
            bitrate,
            mode,
        }
    }

    pub fn duration_ns(&self) -> u64 {
        self.end_ns.saturating_sub(self.start_ns)
    }
}

/// Wire time of `bytes` bytes (overhead included by the caller) at `bitrate`,
/// rounded up to whole nanoseconds.
pub fn wire_time_ns(bus: Bus, bytes: u64, bitrate: u32) -> u64 {
    let bits = bytes * bus.bits_per_byte();
    (bits as u128 * 1_000_000_000).div_ceil(bitrate.max(1) as u128) as u64
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimateError {
    #[error("transaction has no payload bytes")]
    EmptyPayload,
    #[error("transaction has zero duration")]
    ZeroDuration,
}

/// Bus speed in Hz estimated from bits on the wire over elapsed time.
pub fn estimate_bus_speed(txn: &BusTransaction) -> Result<f64, EstimateError> {
    if txn.payload.is_empty() {
        return Err(EstimateError::EmptyPayload);
    }
    let duration = txn.duration_ns();
    if duration == 0 {
        return Err(EstimateError::ZeroDuration);
    }
    let bytes = txn.payload.len() as u64 + txn.bus.overhead_bytes();
    let bits = (bytes * txn.bus.bits_per_byte()) as f64;
    Ok(bits * 1e9 / duration as f64)
}
