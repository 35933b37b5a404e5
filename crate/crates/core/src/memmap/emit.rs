//! Artifact emitters: packed C-style declaration, CSV map and Markdown docs.
//!
//! All emitters are pure functions of the [`LayoutedMap`]; identical maps
//! produce byte-identical text.

use std::fmt::Write;

use super::config::Endian;
use super::layout::{LayoutEntry, LayoutNode, LayoutedMap};

pub const CSV_HEADER: [&str; 8] = [
    "name",
    "offset",
    "size",
    "type",
    "access",
    "default",
    "flags",
    "description",
];

struct DeclWriter<'a> {
    map: &'a LayoutedMap,
    out: String,
    pad: usize,
}

impl DeclWriter<'_> {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
    }

    fn padding(&mut self, from: usize, to: usize, depth: usize) {
        if to > from {
            self.indent(depth);
            let _ = writeln!(
                self.out,
                "uint8_t _pad{}[{}]; /* offset {} */",
                self.pad,
                to - from,
                from
            );
            self.pad += 1;
        }
    }

    fn leaf(&mut self, e: &LayoutEntry, depth: usize) {
        self.indent(depth);
        let field = e.name.rsplit('.').next().unwrap_or(&e.name);
        let _ = write!(self.out, "{} {}", e.ty.c_name(), field);
        if e.array_len > 1 {
            let _ = write!(self.out, "[{}]", e.array_len);
        }
        let _ = write!(self.out, "; /* offset {}", e.offset);
        if e.endian == Endian::Big {
            self.out.push_str(", big-endian");
        }
        self.out.push_str(" */\n");
    }

    /// Writes `nodes` starting at byte `cursor`; returns the end offset.
    fn nodes(&mut self, nodes: &[LayoutNode], mut cursor: usize, depth: usize) -> usize {
        for node in nodes {
            match node {
                LayoutNode::Leaf(idx) => {
                    let e = &self.map.entries[*idx];
                    self.padding(cursor, e.offset, depth);
                    self.leaf(e, depth);
                    cursor = e.end();
                }
                LayoutNode::Record {
                    name,
                    offset,
                    size,
                    children,
                } => {
                    self.padding(cursor, *offset, depth);
                    self.indent(depth);
                    self.out.push_str("struct __attribute__((packed)) {\n");
                    let end = self.nodes(children, *offset, depth + 1);
                    debug_assert_eq!(end, offset + size);
                    self.indent(depth);
                    let _ = writeln!(self.out, "}} {name};");
                    cursor = offset + size;
                }
            }
        }
        cursor
    }
}

/// Emits the nested packed record declaration.
pub fn emit_struct_decl(map: &LayoutedMap) -> String {
    let mut w = DeclWriter {
        map,
        out: String::new(),
        pad: 0,
    };
    let _ = writeln!(
        w.out,
        "/* {} register map {} (digest {}), {} bytes. Generated file. */",
        map.name, map.version, map.map_hash, map.total_size
    );
    w.out.push_str("#include <stdint.h>\n\n");
    w.out.push_str("typedef struct __attribute__((packed)) {\n");
    let end = w.nodes(&map.tree, 0, 1);
    w.padding(end, map.total_size, 1);
    let _ = writeln!(w.out, "}} {}_map_t;", map.name);
    w.out
}

fn flags_field(e: &LayoutEntry) -> String {
    e.flags.iter().map(|f| f.name()).collect::<Vec<_>>().join(" ")
}

/// Emits one CSV row per leaf entry, ordered by offset, header first.
pub fn emit_csv(map: &LayoutedMap) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("writing to a Vec cannot fail");
    let mut entries: Vec<&LayoutEntry> = map.entries.iter().collect();
    entries.sort_by_key(|e| e.offset);
    for e in entries {
        writer
            .write_record([
                e.name.clone(),
                e.offset.to_string(),
                e.size.to_string(),
                e.type_label(),
                e.access.name().to_string(),
                e.default.to_string(),
                flags_field(e),
                e.description.clone(),
            ])
            .expect("writing to a Vec cannot fail");
    }
    let bytes = writer.into_inner().expect("flush to Vec");
    String::from_utf8(bytes).expect("all fields are UTF-8")
}

/// Emits a Markdown reference document.
pub fn emit_docs(map: &LayoutedMap) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# `{}` register map {}\n", map.name, map.version);
    let _ = writeln!(
        out,
        "Digest `{}`. {} parameters, {} bytes occupied, {} bytes total.\n",
        map.map_hash,
        map.entries.len(),
        map.occupied_bytes(),
        map.total_size
    );
    let mut module = None;
    for e in &map.entries {
        if module != Some(e.module()) {
            module = Some(e.module());
            let _ = writeln!(out, "## {}\n", e.module());
        }
        let _ = writeln!(out, "### `{}`\n", e.name);
        let array = if e.array_len > 1 {
            format!("[{}]", e.array_len)
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "- offset: {}, size: {}, type: {}{}, access: {}, default: {}",
            e.offset,
            e.size,
            e.type_label(),
            array,
            e.access,
            e.default
        );
        let flags = flags_field(e);
        if !flags.is_empty() {
            let _ = writeln!(out, "- flags: {flags}");
        }
        let _ = writeln!(out, "\n{}\n", e.description);
    }
    out
}
