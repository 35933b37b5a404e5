mod common;

use proptest::prelude::*;

use common::{arb_spec, oracle_layout};
use hil_core::memmap::{
    compute_layout, emit_csv, emit_docs, emit_struct_decl, parse_config, reference_map, write_artifacts, Access,
    MemmapError, ParameterSpec, ScalarType, REFERENCE_CONFIG,
};
use hil_core::pal::NameMap;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_byte_stepping_oracle(spec in arb_spec()) {
        let map = compute_layout(&spec).unwrap();
        let got: Vec<_> = map.entries.iter().map(|e| (e.name.clone(), e.offset, e.size)).collect();
        let (want, used) = oracle_layout(&spec);
        prop_assert_eq!(got, want);
        prop_assert_eq!(map.total_size, used);
    }

    #[test]
    fn entries_disjoint_and_aligned(spec in arb_spec()) {
        let map = compute_layout(&spec).unwrap();
        let mut spans: Vec<_> = map.entries.iter().map(|e| (e.offset, e.end())).collect();
        spans.sort();
        for w in spans.windows(2) {
            prop_assert!(w[0].1 <= w[1].0, "{:?} overlaps {:?}", w[0], w[1]);
        }
        for e in &map.entries {
            prop_assert_eq!(e.offset % e.elem_size(), 0, "{} misaligned", e.name);
            prop_assert!(e.end() <= map.total_size);
        }
        prop_assert_eq!(map.entries.len(), spec.leaf_count());
    }

    #[test]
    fn layout_is_deterministic(spec in arb_spec()) {
        let a = compute_layout(&spec).unwrap();
        let b = compute_layout(&spec.clone()).unwrap();
        prop_assert_eq!(emit_csv(&a), emit_csv(&b));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn appending_keeps_module_offsets(spec in arb_spec(), pick in any::<prop::sample::Index>(), ty in prop::sample::select(ScalarType::ALL.to_vec())) {
        let before = compute_layout(&spec).unwrap();
        let k = pick.index(spec.modules.len());
        let mut grown = spec.clone();
        let module = &mut grown.modules[k];
        let name = if module.flatten { format!("m{k}_appended") } else { "appended".to_string() };
        module.parameters.push(ParameterSpec::scalar(&name, ty, 1, Access::Writable));
        let after = compute_layout(&grown).unwrap();
        let prefix = if spec.modules[k].flatten { format!("m{k}_") } else { format!("m{k}.") };
        for e in before.entries.iter().filter(|e| e.name.starts_with(&prefix)) {
            let moved = after.entry(&e.name).unwrap();
            prop_assert_eq!(moved.offset, e.offset, "{} moved", e.name);
        }
    }

    #[test]
    fn csv_round_trips_through_name_map(spec in arb_spec()) {
        let map = compute_layout(&spec).unwrap();
        let names = NameMap::from_csv(&emit_csv(&map), "0.1.0").unwrap();
        prop_assert_eq!(names.entries().len(), map.entries.len());
        for (n, e) in names.entries().iter().zip(&map.entries) {
            prop_assert_eq!((&n.name, n.offset, n.size), (&e.name, e.offset, e.size));
        }
    }
}

#[test]
fn reference_map_figures() {
    let map = reference_map();
    assert_eq!(map.entries.len(), 273);
    assert!(map.occupied_bytes() >= 1841, "occupied {}", map.occupied_bytes());
    assert_eq!(map.total_size, 2048);
    assert_eq!(map.version.to_string(), "1.2.3");
    let r = map.entry("i2c.r_count").unwrap();
    assert_eq!((r.offset, r.size), (334, 1));
    let u = map.entry("user_reg").unwrap();
    assert_eq!((u.offset, u.array_len), (0, 128));
}

#[test]
fn reference_layout_matches_oracle() {
    let spec = parse_config(REFERENCE_CONFIG).unwrap();
    let map = compute_layout(&spec).unwrap();
    let (want, _) = oracle_layout(&spec);
    let got: Vec<_> = map.entries.iter().map(|e| (e.name.clone(), e.offset, e.size)).collect();
    assert_eq!(got, want);
}

#[test]
fn artifacts_written() {
    let dir = tempfile::tempdir().unwrap();
    let map = reference_map();
    let files = write_artifacts(&map, dir.path()).unwrap();
    let names: Vec<_> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        [
            "refdev_map.h.txt",
            "refdev_map.csv",
            "refdev_map.md",
            "refdev_version.txt"
        ]
    );
    let version = std::fs::read_to_string(dir.path().join("refdev_version.txt")).unwrap();
    let mut lines = version.lines();
    assert_eq!(lines.next(), Some("1.2.3"));
    assert_eq!(lines.next().map(str::len), Some(16));
    assert!(emit_struct_decl(&map).contains("r_count"));
    assert!(emit_docs(&map).contains("i2c.r_count"));
}

#[test]
fn csv_header_and_quoting() {
    let text = r#"{"name":"q","version":"1.0.0","modules":[{"name":"m","parameters":[
        {"name":"a","type":"u16","description":"first, with a comma"}]}]}"#;
    let map = compute_layout(&parse_config(text).unwrap()).unwrap();
    let csv = emit_csv(&map);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("name,offset,"));
    assert!(lines.next().unwrap().contains("\"first, with a comma\""));
}

#[test]
fn config_errors() {
    let syntax = parse_config("{\"name\": \"x\",\n  oops}").unwrap_err();
    assert!(matches!(syntax, MemmapError::Syntax { line: 2, .. }), "{syntax}");
    let cases = [
        (r#"{"name":"x","version":"1.0","modules":[]}"#, "version"),
        (
            r#"{"name":"x","version":"1.0.0","modules":[{"name":"m","parameters":[{"name":"a","type":"u8","description":"d"},{"name":"a","type":"u8","description":"d"}]}]}"#,
            "duplicate",
        ),
        (
            r#"{"name":"x","version":"1.0.0","modules":[{"name":"m","parameters":[{"name":"a","type":"f32","description":"d"}]}]}"#,
            "unknown type",
        ),
        (
            r#"{"name":"x","version":"1.0.0","modules":[{"name":"m","parameters":[{"name":"a","type":"u8","array_len":0,"description":"d"}]}]}"#,
            "array_len",
        ),
        (
            r#"{"name":"x","version":"1.0.0","modules":[{"name":"m","parameters":[{"name":"a","type":"u8","default":300,"description":"d"}]}]}"#,
            "default",
        ),
    ];
    for (text, needle) in cases {
        match parse_config(text) {
            Err(e @ MemmapError::Schema { .. }) => assert!(e.to_string().contains(needle), "{e}"),
            other => panic!("{needle}: {other:?}"),
        }
    }
}

#[test]
fn schema_lists_every_type() {
    let text = include_str!("../../../schemas/memmap-config.schema.json");
    let schema: serde_json::Value = serde_json::from_str(text).unwrap();
    let listed = &schema["$defs"]["parameter"]["properties"]["type"]["enum"];
    let mut want: Vec<&str> = ScalarType::ALL.iter().map(|t| t.name()).collect();
    want.push("record");
    assert_eq!(listed, &serde_json::json!(want));
}
