//! Register-map generator.
//!
//! One configuration document is the single source for the device's packed
//! register file, the struct declaration, the CSV name map consumed by the
//! PAL, and human-readable documentation.

mod config;
mod emit;
mod layout;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    parse_config, Access, Endian, MemoryMapSpec, ModuleSpec, ParamFlag, ParamKind, ParameterSpec, ScalarType, Version,
};
pub use emit::{emit_csv, emit_docs, emit_struct_decl, CSV_HEADER};
pub use layout::{compute_layout, map_version, LayoutEntry, LayoutNode, LayoutedMap};

/// The bundled reference configuration.
pub const REFERENCE_CONFIG: &str = include_str!("../../maps/refdev_map.json");

#[derive(Debug, Error)]
pub enum MemmapError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("schema violation in `{param}`: {msg}")]
    Schema { param: String, msg: String },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Parses and lays out the bundled reference configuration.
pub fn reference_map() -> LayoutedMap {
    let spec = parse_config(REFERENCE_CONFIG).expect("bundled config parses");
    compute_layout(&spec).expect("bundled config lays out")
}

/// Writes all artifacts for `map` into `dir`, returning the written paths.
pub fn write_artifacts(map: &LayoutedMap, dir: &Path) -> Result<Vec<PathBuf>, MemmapError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MemmapError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let (version, hash) = map_version(map);
    let files = [
        (format!("{}_map.h.txt", map.name), emit_struct_decl(map)),
        (format!("{}_map.csv", map.name), emit_csv(map)),
        (format!("{}_map.md", map.name), emit_docs(map)),
        (format!("{}_version.txt", map.name), format!("{version}\n{hash}\n")),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
