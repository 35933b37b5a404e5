use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use super::config::{Access, Endian, MemoryMapSpec, ParamFlag, ParamKind, ParameterSpec, ScalarType, Version};
use super::MemmapError;

/// One leaf (scalar or scalar array) of a laid out map.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    /// Total size in bytes (`elem.size() * array_len`).
    pub size: usize,
    pub ty: ScalarType,
    pub array_len: usize,
    pub endian: Endian,
    pub access: Access,
    pub default: i128,
    pub flags: BTreeSet<ParamFlag>,
    pub description: String,
}

impl LayoutEntry {
    pub fn elem_size(&self) -> usize {
        self.ty.size()
    }

    pub fn end(&self) -> usize {
        self.offset + self.size
    }

    /// Type column spelling, e.g. `u16` or `u16be`.
    pub fn type_label(&self) -> String {
        match self.endian {
            Endian::Little => self.ty.name().to_string(),
            Endian::Big => format!("{}be", self.ty.name()),
        }
    }

    /// Module that owns this entry: the first path component.
    pub fn module(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }
}

/// Nested view of the layout used by the struct emitter.
#[derive(Debug, Clone, PartialEq)]
pub enum LayoutNode {
    /// Index into [`LayoutedMap::entries`].
    Leaf(usize),
    Record {
        name: String,
        offset: usize,
        size: usize,
        children: Vec<LayoutNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutedMap {
    pub name: String,
    pub version: Version,
    pub entries: Vec<LayoutEntry>,
    pub tree: Vec<LayoutNode>,
    pub total_size: usize,
    pub map_hash: String,
}

impl LayoutedMap {
    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Sum of leaf sizes, i.e. bytes occupied by data rather than padding.
    pub fn occupied_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.size).sum()
    }
}

fn align_up(value: usize, align: usize) -> usize {
    value.div_ceil(align) * align
}

fn param_align(p: &ParameterSpec) -> usize {
    match &p.kind {
        ParamKind::Scalar { ty, .. } => ty.align(),
        ParamKind::Record { members } => members.iter().map(param_align).max().unwrap_or(1),
    }
}

struct Placer {
    entries: Vec<LayoutEntry>,
    cursor: usize,
}

impl Placer {
    fn place(&mut self, p: &ParameterSpec, qualified: String) -> LayoutNode {
        self.cursor = align_up(self.cursor, param_align(p));
        match &p.kind {
            ParamKind::Scalar {
                ty,
                array_len,
                default,
                endian,
            } => {
                let entry = LayoutEntry {
                    name: qualified,
                    offset: self.cursor,
                    size: ty.size() * array_len,
                    ty: *ty,
                    array_len: *array_len,
                    endian: *endian,
                    access: p.access,
                    default: *default,
                    flags: p.flags.clone(),
                    description: p.description.clone(),
                };
                self.cursor += entry.size;
                self.entries.push(entry);
                LayoutNode::Leaf(self.entries.len() - 1)
            }
            ParamKind::Record { members } => {
                let start = self.cursor;
                let children = members
                    .iter()
                    .map(|m| self.place(m, format!("{qualified}.{}", m.name)))
                    .collect();
                LayoutNode::Record {
                    name: p.name.clone(),
                    offset: start,
                    size: self.cursor - start,
                    children,
                }
            }
        }
    }
}

/// Places every parameter in declaration order at its natural alignment.
///
/// Modules group parameters without aligning their start, so appending a
/// wider parameter never shifts the ones declared before it. Records are
/// aligned to their widest member and carry no tail padding. When the spec requests padding the total size is
/// raised to `padded_total_size`.
pub fn compute_layout(spec: &MemoryMapSpec) -> Result<LayoutedMap, MemmapError> {
    let mut placer = Placer {
        entries: Vec::new(),
        cursor: 0,
    };
    let mut tree = Vec::new();
    for module in &spec.modules {
        if module.flatten {
            for p in &module.parameters {
                tree.push(placer.place(p, module.qualified(&p.name)));
            }
        } else {
            let start = placer.cursor;
            let children = module
                .parameters
                .iter()
                .map(|p| placer.place(p, module.qualified(&p.name)))
                .collect();
            tree.push(LayoutNode::Record {
                name: module.name.clone(),
                offset: start,
                size: placer.cursor - start,
                children,
            });
        }
    }

    let used = placer.cursor;
    let total_size = match spec.padded_total_size {
        Some(padded) if used > padded => {
            return Err(MemmapError::Layout(format!(
                "layout needs {used} bytes but padded_total_size is {padded}"
            )))
        }
        Some(padded) => padded,
        None => used,
    };

    let entries = placer.entries;
    let map_hash = digest(&entries);
    Ok(LayoutedMap {
        name: spec.name.clone(),
        version: spec.version,
        entries,
        tree,
        total_size,
        map_hash,
    })
}

/// Content digest over the ordered `(name, offset, size, type)` tuples.
fn digest(entries: &[LayoutEntry]) -> String {
    let mut hasher = Sha256::new();
    for e in entries {
        hasher.update(format!("{}|{}|{}|{}\n", e.name, e.offset, e.size, e.type_label()));
    }
    let out = hasher.finalize();
    out[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// The map's semantic version and content digest.
pub fn map_version(map: &LayoutedMap) -> (String, String) {
    (map.version.to_string(), map.map_hash.clone())
}
