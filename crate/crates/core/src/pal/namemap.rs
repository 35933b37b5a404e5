use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::memmap::{emit_csv, reference_map, Access, Endian, LayoutedMap, ParamFlag, ScalarType, Version};

use super::PalError;

/// One row of the CSV map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapEntry {
    pub name: String,
    pub offset: usize,
    pub size: usize,
    pub ty: ScalarType,
    pub endian: Endian,
    pub array_len: usize,
    pub access: Access,
    pub default: i128,
    pub flags: BTreeSet<ParamFlag>,
    pub description: String,
}

impl MapEntry {
    pub fn elem_size(&self) -> usize {
        self.ty.size()
    }

    pub fn module(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }

    pub fn type_label(&self) -> String {
        match self.endian {
            Endian::Little => self.ty.name().to_string(),
            Endian::Big => format!("{}be", self.ty.name()),
        }
    }

    /// Byte range of elements `index..index + count`.
    pub fn span(&self, index: usize, count: usize) -> Result<(usize, usize), PalError> {
        match index.checked_add(count) {
            Some(end) if count >= 1 && end <= self.array_len => {
                Ok((self.offset + index * self.elem_size(), count * self.elem_size()))
            }
            _ => Err(PalError::Range {
                name: self.name.clone(),
                index,
                count,
                len: self.array_len,
            }),
        }
    }

    pub fn decode(&self, bytes: &[u8]) -> Vec<i128> {
        bytes
            .chunks_exact(self.elem_size())
            .map(|c| self.ty.decode(c, self.endian))
            .collect()
    }

    pub fn encode(&self, value: i128) -> Result<Vec<u8>, PalError> {
        if !self.ty.contains(value) {
            return Err(PalError::Encode {
                name: self.name.clone(),
                value,
                ty: self.ty,
            });
        }
        Ok(self.ty.encode(value, self.endian))
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    name: String,
    offset: usize,
    size: usize,
    #[serde(rename = "type")]
    ty: String,
    access: String,
    default: String,
    flags: String,
    description: String,
}

fn bad(line: usize, msg: impl Into<String>) -> PalError {
    PalError::BadMap { line, msg: msg.into() }
}

impl Row {
    fn into_entry(self, line: usize) -> Result<MapEntry, PalError> {
        let (label, endian) = match self.ty.strip_suffix("be") {
            Some(base) => (base, Endian::Big),
            None => (self.ty.as_str(), Endian::Little),
        };
        let ty: ScalarType = label
            .parse()
            .map_err(|_| bad(line, format!("unknown type `{}`", self.ty)))?;
        if self.size == 0 || !self.size.is_multiple_of(ty.size()) {
            return Err(bad(line, format!("size {} is not a multiple of {}", self.size, ty)));
        }
        let access: Access = self
            .access
            .parse()
            .map_err(|_| bad(line, format!("unknown access `{}`", self.access)))?;
        let default: i128 = self
            .default
            .parse()
            .map_err(|_| bad(line, format!("bad default `{}`", self.default)))?;
        let flags = self
            .flags
            .split_ascii_whitespace()
            .map(|f| f.parse().map_err(|_| bad(line, format!("unknown flag `{f}`"))))
            .collect::<Result<_, _>>()?;
        Ok(MapEntry {
            array_len: self.size / ty.size(),
            name: self.name,
            offset: self.offset,
            size: self.size,
            ty,
            endian,
            access,
            default,
            flags,
            description: self.description,
        })
    }
}

/// Name to location lookup built from a CSV map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameMap {
    version: String,
    entries: Vec<MapEntry>,
    index: HashMap<String, usize>,
}

impl NameMap {
    pub fn from_csv(text: &str, version: &str) -> Result<Self, PalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            // header is line 1
            let line = i + 2;
            let row = row.map_err(|e| bad(line, e.to_string()))?;
            entries.push(row.into_entry(line)?);
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.name.clone(), i).is_some() {
                return Err(bad(i + 2, format!("duplicate name `{}`", e.name)));
            }
        }
        Ok(NameMap {
            version: version.to_string(),
            entries,
            index,
        })
    }

    pub fn from_layout(map: &LayoutedMap) -> Self {
        NameMap::from_csv(&emit_csv(map), &map.version.to_string()).expect("emitted CSV always parses")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&MapEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn lookup(&self, name: &str) -> Result<&MapEntry, PalError> {
        self.get(name).ok_or_else(|| PalError::UnknownName(name.to_string()))
    }

    /// Names starting with `prefix`, in map order.
    pub fn completions(&self, prefix: &str) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.name.as_str())
            .filter(|n| n.starts_with(prefix))
            .collect()
    }

    /// The init-trigger parameter of `module`, by naming convention.
    pub fn init_flag(&self, module: &str) -> Option<&MapEntry> {
        self.get(&format!("{module}.mode.init"))
    }
}

/// Installed maps: `<root>/<version>/*_map.csv`, or a flat directory of
/// generator output whose `*_version.txt` names the version. The bundled
/// reference map is always available.
#[derive(Debug, Clone, Default)]
pub struct MapStore {
    root: Option<PathBuf>,
}

impl MapStore {
    pub fn builtin() -> Self {
        MapStore { root: None }
    }

    pub fn dir(root: impl Into<PathBuf>) -> Self {
        MapStore {
            root: Some(root.into()),
        }
    }

    pub fn resolve(&self, version: &str) -> Result<NameMap, PalError> {
        if version.parse::<Version>().is_err() {
            return Err(PalError::UnknownVersion(version.to_string()));
        }
        if let Some(root) = &self.root {
            if let Some(path) = find_csv(&root.join(version)).or_else(|| find_flat(root, version)) {
                let text =
                    std::fs::read_to_string(&path).map_err(|e| PalError::Io(format!("{}: {e}", path.display())))?;
                return NameMap::from_csv(&text, version);
            }
        }
        let builtin = reference_map();
        if builtin.version.to_string() == version {
            return Ok(NameMap::from_layout(&builtin));
        }
        Err(PalError::UnknownVersion(version.to_string()))
    }
}

fn find_csv(dir: &Path) -> Option<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_map.csv"))
        })
        .collect();
    found.sort();
    found.into_iter().next()
}

/// `<name>_map.csv` next to a `<name>_version.txt` whose first line is `version`.
fn find_flat(root: &Path, version: &str) -> Option<PathBuf> {
    let mut names: Vec<String> = std::fs::read_dir(root)
        .ok()?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix("_version.txt").map(str::to_string))
        .collect();
    names.sort();
    names.into_iter().find_map(|name| {
        let text = std::fs::read_to_string(root.join(format!("{name}_version.txt"))).ok()?;
        let csv = root.join(format!("{name}_map.csv"));
        (text.lines().next()?.trim() == version && csv.is_file()).then_some(csv)
    })
}
