//! Register-map configuration documents.
//!
//! A configuration is a JSON document (see `schemas/memmap-config.schema.json`)
//! describing modules, their parameters and per-parameter metadata. Parsing
//! validates names, types, defaults and access levels and produces a
//! [`MemoryMapSpec`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use super::MemmapError;

/// Fixed-width scalar element types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalarType {
    U8,
    U16,
    U32,
    U64,
    I8,
    I16,
    I32,
    I64,
}

impl ScalarType {
    pub const ALL: [ScalarType; 8] = [
        ScalarType::U8,
        ScalarType::U16,
        ScalarType::U32,
        ScalarType::U64,
        ScalarType::I8,
        ScalarType::I16,
        ScalarType::I32,
        ScalarType::I64,
    ];

    pub fn size(self) -> usize {
        match self {
            ScalarType::U8 | ScalarType::I8 => 1,
            ScalarType::U16 | ScalarType::I16 => 2,
            ScalarType::U32 | ScalarType::I32 => 4,
            ScalarType::U64 | ScalarType::I64 => 8,
        }
    }

    /// Natural alignment, capped at 8 bytes.
    pub fn align(self) -> usize {
        self.size().min(8)
    }

    pub fn is_signed(self) -> bool {
        matches!(
            self,
            ScalarType::I8 | ScalarType::I16 | ScalarType::I32 | ScalarType::I64
        )
    }

    pub fn min_value(self) -> i128 {
        if self.is_signed() {
            -(1i128 << (self.size() * 8 - 1))
        } else {
            0
        }
    }

    pub fn max_value(self) -> i128 {
        if self.is_signed() {
            (1i128 << (self.size() * 8 - 1)) - 1
        } else {
            (1i128 << (self.size() * 8)) - 1
        }
    }

    pub fn contains(self, value: i128) -> bool {
        value >= self.min_value() && value <= self.max_value()
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::U8 => "u8",
            ScalarType::U16 => "u16",
            ScalarType::U32 => "u32",
            ScalarType::U64 => "u64",
            ScalarType::I8 => "i8",
            ScalarType::I16 => "i16",
            ScalarType::I32 => "i32",
            ScalarType::I64 => "i64",
        }
    }

    /// C spelling used by the struct emitter.
    pub fn c_name(self) -> &'static str {
        match self {
            ScalarType::U8 => "uint8_t",
            ScalarType::U16 => "uint16_t",
            ScalarType::U32 => "uint32_t",
            ScalarType::U64 => "uint64_t",
            ScalarType::I8 => "int8_t",
            ScalarType::I16 => "int16_t",
            ScalarType::I32 => "int32_t",
            ScalarType::I64 => "int64_t",
        }
    }

    /// Encodes `value` into `size()` bytes.
    pub fn encode(self, value: i128, endian: Endian) -> Vec<u8> {
        let raw = (value as u128).to_le_bytes();
        let mut out = raw[..self.size()].to_vec();
        if endian == Endian::Big {
            out.reverse();
        }
        out
    }

    /// Decodes exactly `size()` bytes.
    pub fn decode(self, bytes: &[u8], endian: Endian) -> i128 {
        debug_assert_eq!(bytes.len(), self.size());
        let mut le = [0u8; 16];
        for (i, b) in bytes.iter().enumerate() {
            let idx = match endian {
                Endian::Little => i,
                Endian::Big => bytes.len() - 1 - i,
            };
            le[idx] = *b;
        }
        let unsigned = u128::from_le_bytes(le);
        if self.is_signed() {
            let shift = 128 - self.size() * 8;
            ((unsigned << shift) as i128) >> shift
        } else {
            unsigned as i128
        }
    }
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScalarType::ALL.iter().copied().find(|t| t.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum Endian {
    #[default]
    Little,
    Big,
}

/// Per-byte access level.
///
/// `ReadOnly` bytes are only changed by the device itself. `Writable` bytes
/// accept host writes and peripheral bus writes. `Privileged` bytes accept
/// host writes only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Access {
    ReadOnly,
    Writable,
    Privileged,
}

impl Access {
    pub fn name(self) -> &'static str {
        match self {
            Access::ReadOnly => "read-only",
            Access::Writable => "writable",
            Access::Privileged => "privileged",
        }
    }

    pub fn host_writable(self) -> bool {
        !matches!(self, Access::ReadOnly)
    }

    pub fn bus_writable(self) -> bool {
        matches!(self, Access::Writable)
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Access {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read-only" => Ok(Access::ReadOnly),
            "writable" => Ok(Access::Writable),
            "privileged" => Ok(Access::Privileged),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamFlag {
    InitTrigger,
    Volatile,
    UserShared,
}

impl ParamFlag {
    pub fn name(self) -> &'static str {
        match self {
            ParamFlag::InitTrigger => "init-trigger",
            ParamFlag::Volatile => "volatile",
            ParamFlag::UserShared => "user-shared",
        }
    }
}

impl FromStr for ParamFlag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "init-trigger" => Ok(ParamFlag::InitTrigger),
            "volatile" => Ok(ParamFlag::Volatile),
            "user-shared" => Ok(ParamFlag::UserShared),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Version {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl FromStr for Version {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('.').collect();
        if parts.len() != 3 {
            return Err(());
        }
        let mut nums = [0u32; 3];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(());
            }
            *slot = part.parse().map_err(|_| ())?;
        }
        Ok(Version {
            major: nums[0],
            minor: nums[1],
            patch: nums[2],
        })
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Scalar {
        ty: ScalarType,
        array_len: usize,
        default: i128,
        endian: Endian,
    },
    Record {
        members: Vec<ParameterSpec>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub access: Access,
    pub flags: BTreeSet<ParamFlag>,
    pub description: String,
}

impl ParameterSpec {
    pub fn scalar(name: &str, ty: ScalarType, array_len: usize, access: Access) -> Self {
        ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Scalar {
                ty,
                array_len,
                default: 0,
                endian: Endian::Little,
            },
            access,
            flags: BTreeSet::new(),
            description: format!("{name} parameter"),
        }
    }

    /// Number of leaf (scalar or array) entries below this parameter.
    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            ParamKind::Scalar { .. } => 1,
            ParamKind::Record { members } => members.iter().map(|m| m.leaf_count()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleSpec {
    pub name: String,
    pub description: String,
    /// Parameters of a flattened module are addressed without the module prefix.
    pub flatten: bool,
    pub parameters: Vec<ParameterSpec>,
}

impl ModuleSpec {
    pub fn qualified(&self, param: &str) -> String {
        if self.flatten {
            param.to_string()
        } else {
            format!("{}.{}", self.name, param)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryMapSpec {
    pub name: String,
    pub version: Version,
    pub modules: Vec<ModuleSpec>,
    pub padded_total_size: Option<usize>,
}

impl MemoryMapSpec {
    pub fn leaf_count(&self) -> usize {
        self.modules
            .iter()
            .flat_map(|m| &m.parameters)
            .map(|p| p.leaf_count())
            .sum()
    }
}

// Wire format of the configuration document.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    name: String,
    version: String,
    #[serde(default)]
    padded_total_size: Option<usize>,
    modules: Vec<RawModule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModule {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    flatten: bool,
    #[serde(default)]
    access: Option<String>,
    #[serde(default)]
    parameters: Vec<RawParam>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    #[serde(rename = "type")]
    ty: String,
    #[serde(default)]
    array_len: Option<i64>,
    #[serde(default)]
    default: Option<serde_json::Number>,
    #[serde(default)]
    access: Option<String>,
    #[serde(default)]
    flags: Vec<String>,
    #[serde(default)]
    endian: Option<String>,
    #[serde(default)]
    description: String,
    #[serde(default)]
    members: Vec<RawParam>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn schema(param: impl Into<String>, msg: impl Into<String>) -> MemmapError {
    MemmapError::Schema {
        param: param.into(),
        msg: msg.into(),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<MemoryMapSpec, MemmapError> {
    let raw: RawMap = serde_json::from_str(text).map_err(|e| MemmapError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;

    if !is_identifier(&raw.name) {
        return Err(schema(&raw.name, "map name is not an identifier"));
    }
    let version: Version = raw
        .version
        .parse()
        .map_err(|_| schema("version", format!("`{}` is not major.minor.patch", raw.version)))?;

    let mut module_names = BTreeSet::new();
    let mut qualified = BTreeSet::new();
    let mut modules = Vec::with_capacity(raw.modules.len());
    for m in raw.modules {
        if !is_identifier(&m.name) {
            return Err(schema(&m.name, "module name is not an identifier"));
        }
        if !module_names.insert(m.name.clone()) {
            return Err(schema(&m.name, "duplicate module name"));
        }
        let access = match &m.access {
            Some(a) => a
                .parse()
                .map_err(|_| schema(&m.name, format!("unknown access level `{a}`")))?,
            None => Access::Writable,
        };
        let prefix = if m.flatten {
            String::new()
        } else {
            format!("{}.", m.name)
        };
        let mut parameters = Vec::with_capacity(m.parameters.len());
        for p in m.parameters {
            parameters.push(convert_param(p, &prefix, access, &mut qualified)?);
        }
        modules.push(ModuleSpec {
            name: m.name,
            description: m.description,
            flatten: m.flatten,
            parameters,
        });
    }

    Ok(MemoryMapSpec {
        name: raw.name,
        version,
        modules,
        padded_total_size: raw.padded_total_size,
    })
}

fn convert_param(
    p: RawParam,
    prefix: &str,
    inherited: Access,
    seen: &mut BTreeSet<String>,
) -> Result<ParameterSpec, MemmapError> {
    let qname = format!("{prefix}{}", p.name);
    if !is_identifier(&p.name) {
        return Err(schema(&qname, "parameter name is not an identifier"));
    }
    if !seen.insert(qname.clone()) {
        return Err(schema(&qname, "duplicate parameter name"));
    }
    if p.description.trim().is_empty() {
        return Err(schema(&qname, "missing description"));
    }
    let access = match &p.access {
        Some(a) => a
            .parse()
            .map_err(|_| schema(&qname, format!("unknown access level `{a}`")))?,
        None => inherited,
    };
    let mut flags = BTreeSet::new();
    for f in &p.flags {
        let flag = f.parse().map_err(|_| schema(&qname, format!("unknown flag `{f}`")))?;
        flags.insert(flag);
    }

    let kind = if p.ty == "record" {
        if p.array_len.is_some_and(|n| n != 1) {
            return Err(schema(&qname, "records cannot be arrays"));
        }
        if p.default.is_some() {
            return Err(schema(&qname, "records take no default"));
        }
        if p.members.is_empty() {
            return Err(schema(&qname, "record has no members"));
        }
        let child_prefix = format!("{qname}.");
        let members = p
            .members
            .into_iter()
            .map(|m| convert_param(m, &child_prefix, access, seen))
            .collect::<Result<Vec<_>, _>>()?;
        ParamKind::Record { members }
    } else {
        let ty: ScalarType =
            p.ty.parse()
                .map_err(|_| schema(&qname, format!("unknown type `{}`", p.ty)))?;
        if !p.members.is_empty() {
            return Err(schema(&qname, "only records have members"));
        }
        let array_len = match p.array_len {
            None => 1,
            Some(n) if n >= 1 => n as usize,
            Some(n) => return Err(schema(&qname, format!("array_len {n} must be at least 1"))),
        };
        let default = match &p.default {
            None => 0,
            Some(n) => number_to_i128(n).ok_or_else(|| schema(&qname, format!("default `{n}` is not an integer")))?,
        };
        if !ty.contains(default) {
            return Err(schema(&qname, format!("default {default} out of range for {ty}")));
        }
        let endian = match p.endian.as_deref() {
            None | Some("little") => Endian::Little,
            Some("big") => Endian::Big,
            Some(other) => return Err(schema(&qname, format!("unknown endianness `{other}`"))),
        };
        ParamKind::Scalar {
            ty,
            array_len,
            default,
            endian,
        }
    };

    Ok(ParameterSpec {
        name: p.name,
        kind,
        access,
        flags,
        description: p.description,
    })
}

fn number_to_i128(n: &serde_json::Number) -> Option<i128> {
    if let Some(v) = n.as_i64() {
        Some(v as i128)
    } else {
        n.as_u64().map(|v| v as i128)
    }
}
