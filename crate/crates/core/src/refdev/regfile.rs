use std::sync::Arc;

use thiserror::Error;

use crate::memmap::{Access, Endian, LayoutEntry, LayoutedMap, ParamFlag, ScalarType};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegError {
    #[error("range {offset}+{size} exceeds register file of {total} bytes")]
    OutOfRange { offset: usize, size: usize, total: usize },
    #[error("zero-length access")]
    ZeroSize,
    #[error("byte {offset} is not writable")]
    AccessViolation { offset: usize },
    #[error("map has no parameter `{0}`")]
    MissingField(String),
}

/// Location and codec of one named parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    pub offset: usize,
    pub ty: ScalarType,
    pub endian: Endian,
    pub len: usize,
}

impl Field {
    pub fn resolve(map: &LayoutedMap, name: &str) -> Result<Field, RegError> {
        map.entry(name)
            .map(Field::from_entry)
            .ok_or_else(|| RegError::MissingField(name.to_string()))
    }

    pub fn from_entry(e: &LayoutEntry) -> Field {
        Field {
            offset: e.offset,
            ty: e.ty,
            endian: e.endian,
            len: e.array_len,
        }
    }

    pub fn elem_offset(&self, index: usize) -> usize {
        self.offset + index * self.ty.size()
    }
}

/// The reference device's state surface: committed bytes, staged host
/// writes and a per-byte access mask.
#[derive(Debug, Clone)]
pub struct RegisterFile {
    map: Arc<LayoutedMap>,
    committed: Vec<u8>,
    staged: Vec<(usize, Vec<u8>)>,
    access: Vec<Access>,
}

impl RegisterFile {
    pub fn new(map: Arc<LayoutedMap>) -> Self {
        // Padding bytes are not addressable by any write path.
        let mut access = vec![Access::ReadOnly; map.total_size];
        for e in &map.entries {
            access[e.offset..e.end()].fill(e.access);
        }
        let mut regs = RegisterFile {
            committed: vec![0; map.total_size],
            staged: Vec::new(),
            access,
            map,
        };
        regs.load_defaults();
        regs
    }

    pub fn map(&self) -> &Arc<LayoutedMap> {
        &self.map
    }

    pub fn total_size(&self) -> usize {
        self.committed.len()
    }

    pub fn committed(&self) -> &[u8] {
        &self.committed
    }

    pub fn staged(&self) -> &[(usize, Vec<u8>)] {
        &self.staged
    }

    pub fn access_at(&self, offset: usize) -> Access {
        self.access[offset]
    }

    /// Restores every parameter to its default and drops staged writes.
    pub fn load_defaults(&mut self) {
        self.committed.fill(0);
        self.staged.clear();
        let map = Arc::clone(&self.map);
        for e in &map.entries {
            let bytes = e.ty.encode(e.default, e.endian);
            for i in 0..e.array_len {
                let at = e.offset + i * e.elem_size();
                self.committed[at..at + bytes.len()].copy_from_slice(&bytes);
            }
        }
    }

    fn check_range(&self, offset: usize, size: usize) -> Result<(), RegError> {
        if size == 0 {
            return Err(RegError::ZeroSize);
        }
        match offset.checked_add(size) {
            Some(end) if end <= self.committed.len() => Ok(()),
            _ => Err(RegError::OutOfRange {
                offset,
                size,
                total: self.committed.len(),
            }),
        }
    }

    /// Reads committed bytes; staged writes are not visible.
    pub fn read(&self, offset: usize, size: usize) -> Result<&[u8], RegError> {
        self.check_range(offset, size)?;
        Ok(&self.committed[offset..offset + size])
    }

    /// Stages a host write. Rejected entirely if any touched byte is read-only.
    pub fn stage(&mut self, offset: usize, bytes: &[u8]) -> Result<(), RegError> {
        self.check_range(offset, bytes.len())?;
        if let Some(bad) = (offset..offset + bytes.len()).find(|&i| !self.access[i].host_writable()) {
            return Err(RegError::AccessViolation { offset: bad });
        }
        self.staged.push((offset, bytes.to_vec()));
        Ok(())
    }

    /// Applies staged writes in submission order and returns the init-trigger
    /// entries that are now set, in map order. The caller re-initialises the
    /// owning modules and clears the flags with [`RegisterFile::clear_field`].
    pub fn commit(&mut self) -> Vec<LayoutEntry> {
        for (offset, bytes) in std::mem::take(&mut self.staged) {
            self.committed[offset..offset + bytes.len()].copy_from_slice(&bytes);
        }
        self.map
            .entries
            .iter()
            .filter(|e| e.flags.contains(&ParamFlag::InitTrigger))
            .filter(|e| self.committed[e.offset..e.end()].iter().any(|&b| b != 0))
            .cloned()
            .collect()
    }

    /// Single byte write coming from a peripheral bus. Returns false when the
    /// byte is out of range or not bus-writable.
    pub fn bus_write(&mut self, offset: usize, value: u8) -> bool {
        match self.access.get(offset) {
            Some(a) if a.bus_writable() => {
                self.committed[offset] = value;
                true
            }
            _ => false,
        }
    }

    /// Single byte read for a peripheral bus; 0xFF past the end.
    pub fn bus_read(&self, offset: usize) -> u8 {
        self.committed.get(offset).copied().unwrap_or(0xff)
    }

    pub fn get(&self, f: Field) -> i128 {
        self.get_elem(f, 0)
    }

    pub fn get_elem(&self, f: Field, index: usize) -> i128 {
        let at = f.elem_offset(index);
        f.ty.decode(&self.committed[at..at + f.ty.size()], f.endian)
    }

    pub fn get_u64(&self, f: Field) -> u64 {
        self.get(f) as u64
    }

    pub fn flag(&self, f: Field) -> bool {
        self.get(f) != 0
    }

    /// Device-internal update; bypasses access checks. The value is
    /// truncated to the field width.
    pub fn set(&mut self, f: Field, value: i128) {
        self.set_elem(f, 0, value);
    }

    pub fn set_elem(&mut self, f: Field, index: usize, value: i128) {
        let at = f.elem_offset(index);
        let bytes = f.ty.encode(value, f.endian);
        self.committed[at..at + bytes.len()].copy_from_slice(&bytes);
    }

    /// Wrapping increment of a counter field.
    pub fn bump(&mut self, f: Field, by: u64) {
        let v = self.get(f) as u128;
        self.set(f, v.wrapping_add(by as u128) as i128);
    }

    pub fn clear_field(&mut self, f: Field) {
        for i in 0..f.len {
            self.set_elem(f, i, 0);
        }
    }

    /// Zeroes every entry of `module` that is read-only (counters, status,
    /// traces), leaving configuration untouched.
    pub fn clear_module_status(&mut self, module: &str) {
        let map = Arc::clone(&self.map);
        for e in map
            .entries
            .iter()
            .filter(|e| e.module() == module && e.access == Access::ReadOnly)
        {
            let bytes = e.ty.encode(e.default, e.endian);
            for i in 0..e.array_len {
                let at = e.offset + i * e.elem_size();
                self.committed[at..at + bytes.len()].copy_from_slice(&bytes);
            }
        }
    }
}
