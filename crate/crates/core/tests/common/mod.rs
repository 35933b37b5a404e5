#![allow(dead_code)]

use std::collections::BTreeSet;

use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use hil_core::memmap::{Access, Endian, MemoryMapSpec, ModuleSpec, ParamKind, ParameterSpec, ScalarType, Version};
use hil_core::pal::{Transport, TransportError};
use hil_core::sim::{CaptureKind, CaptureMethod, Edges, GpioTrace, RecordOutcome};

fn arb_type() -> impl Strategy<Value = ScalarType> {
    prop::sample::select(ScalarType::ALL.to_vec())
}

fn scalar(name: String, ty: ScalarType, array_len: usize) -> ParameterSpec {
    ParameterSpec {
        description: format!("{name} value"),
        name,
        kind: ParamKind::Scalar {
            ty,
            array_len,
            default: 0,
            endian: Endian::Little,
        },
        access: Access::Writable,
        flags: BTreeSet::new(),
    }
}

/// A parameter named `name`: a scalar, an array, or a record of scalars.
fn arb_param(name: String) -> impl Strategy<Value = ParameterSpec> {
    let n1 = name.clone();
    let n2 = name.clone();
    prop_oneof![
        4 => (arb_type(), prop_oneof![3 => Just(1usize), 1 => 1usize..6]).prop_map(move |(ty, len)| scalar(n1.clone(), ty, len)),
        1 => prop::collection::vec((arb_type(), 1usize..3), 1..4).prop_map(move |members| ParameterSpec {
            name: n2.clone(),
            description: "record".into(),
            kind: ParamKind::Record {
                members: members
                    .into_iter()
                    .enumerate()
                    .map(|(i, (ty, len))| scalar(format!("f{i}"), ty, len))
                    .collect(),
            },
            access: Access::Writable,
            flags: BTreeSet::new(),
        }),
    ]
}

fn arb_module(index: usize) -> impl Strategy<Value = ModuleSpec> {
    (prop::bool::weighted(0.15), 0usize..6).prop_flat_map(move |(flatten, n)| {
        // flattened parameters share the top-level namespace
        let names: Vec<String> = (0..n)
            .map(|j| {
                if flatten {
                    format!("m{index}_p{j}")
                } else {
                    format!("p{j}")
                }
            })
            .collect();
        names
            .into_iter()
            .map(arb_param)
            .collect::<Vec<_>>()
            .prop_map(move |parameters| ModuleSpec {
                name: format!("m{index}"),
                description: String::new(),
                flatten,
                parameters,
            })
    })
}

pub fn arb_spec() -> impl Strategy<Value = MemoryMapSpec> {
    (1usize..6).prop_flat_map(|n| {
        (0..n)
            .map(arb_module)
            .collect::<Vec<_>>()
            .prop_map(|modules| MemoryMapSpec {
                name: "rand".into(),
                version: Version {
                    major: 0,
                    minor: 1,
                    patch: 0,
                },
                modules,
                padded_total_size: None,
            })
    })
}

fn natural_align(p: &ParameterSpec) -> usize {
    match &p.kind {
        ParamKind::Scalar { ty, .. } => ty.size(),
        ParamKind::Record { members } => members.iter().map(natural_align).max().unwrap_or(1),
    }
}

/// Byte-stepping placer written independently of the library: walks the
/// declaration tree and bumps the cursor one byte at a time until aligned.
pub fn oracle_layout(spec: &MemoryMapSpec) -> (Vec<(String, usize, usize)>, usize) {
    fn walk(p: &ParameterSpec, name: String, cursor: &mut usize, out: &mut Vec<(String, usize, usize)>) {
        let align = natural_align(p);
        while !cursor.is_multiple_of(align) {
            *cursor += 1;
        }
        match &p.kind {
            ParamKind::Scalar { ty, array_len, .. } => {
                out.push((name, *cursor, ty.size() * array_len));
                *cursor += ty.size() * array_len;
            }
            ParamKind::Record { members } => {
                for m in members {
                    walk(m, format!("{name}.{}", m.name), cursor, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut cursor = 0;
    for m in &spec.modules {
        for p in &m.parameters {
            let name = if m.flatten {
                p.name.clone()
            } else {
                format!("{}.{}", m.name, p.name)
            };
            walk(p, name, &mut cursor, &mut out);
        }
    }
    (out, cursor)
}

/// Answers `-v` and `rr` from a fixed byte image, nothing else.
pub struct Image {
    pub version: String,
    pub bytes: Vec<u8>,
}

impl Transport for Image {
    fn request(&mut self, line: &str) -> Result<String, TransportError> {
        let words: Vec<&str> = line.split_whitespace().collect();
        Ok(match words.as_slice() {
            ["-v"] => format!("{{\"version\": \"{}\", \"result\": 0}}", self.version),
            ["rr", off, n] => {
                let (off, n): (usize, usize) = (off.parse().unwrap(), n.parse().unwrap());
                let chunk = &self.bytes[off..off + n];
                if n == 1 {
                    format!("{{\"data\": {}, \"result\": 0}}", chunk[0])
                } else {
                    let items: Vec<String> = chunk.iter().map(u8::to_string).collect();
                    format!("{{\"data\": [{}], \"result\": 0}}", items.join(", "))
                }
            }
            _ => "{\"result\": 22}".to_string(),
        })
    }
}

#[derive(Clone)]
pub struct Shared(pub Arc<Mutex<Image>>);

impl Transport for Shared {
    fn request(&mut self, line: &str) -> Result<String, TransportError> {
        self.0.lock().unwrap().request(line)
    }
}

/// Two's-complement decode written out longhand.
pub fn decode(bytes: &[u8], signed: bool, big: bool) -> i128 {
    let mut v: u128 = 0;
    let ordered: Vec<u8> = if big {
        bytes.to_vec()
    } else {
        bytes.iter().rev().copied().collect()
    };
    for b in ordered {
        v = (v << 8) | b as u128;
    }
    let bits = 8 * bytes.len() as u32;
    if signed && v >> (bits - 1) & 1 == 1 {
        v as i128 - (1i128 << bits)
    } else {
        v as i128
    }
}

/// Feeds `n` alternating edges with random gaps and checks every outcome
/// against an independent model of the capture envelope.
pub fn check_envelope(kind: CaptureKind, n: usize, seed: u64) -> Result<(), String> {
    let method = CaptureMethod::new(kind);
    let mut trace = GpioTrace::new(method, seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let (mut t, mut level) = (1_000_000u64, 0u8);
    let mut last: Option<(u64, u8)> = None;
    let mut dropped = 0u64;
    for _ in 0..n {
        t += rng.gen_range(0..3 * method.t_min_ns);
        level ^= 1;
        let outcome = trace.record(2, level, t);
        let expect_drop = match last {
            _ if method.edges == Edges::RisingOnly && level == 0 => None,
            Some((prev, _)) if t - prev < method.t_min_ns => Some("too soon"),
            Some((_, l)) if method.edges == Edges::Both && l == level => Some("duplicate"),
            _ => Some("accept"),
        };
        match (expect_drop, outcome) {
            (None, RecordOutcome::Ignored) => {}
            (Some("too soon"), RecordOutcome::TooSoon) | (Some("duplicate"), RecordOutcome::DuplicateLevel) => {
                dropped += 1
            }
            (Some("accept"), RecordOutcome::Accepted(e)) => {
                let err = e.timestamp_ns as i64 - t as i64;
                if err.unsigned_abs() > method.t_jitter_ns {
                    return Err(format!("{kind:?}: perturbation {err} exceeds {}", method.t_jitter_ns));
                }
                last = Some((t, level));
            }
            (want, got) => return Err(format!("{kind:?} at {t}: expected {want:?}, got {got:?}")),
        }
    }
    if trace.overrun() != dropped {
        return Err(format!("{kind:?}: overrun {} but {dropped} drops", trace.overrun()));
    }
    if let Some(cap) = method.buffer_len {
        if trace.len() > cap {
            return Err(format!("{kind:?}: holds {} > {cap}", trace.len()));
        }
    }
    Ok(())
}

/// `(request, reply)` pairs of a `>`/`<` transcript; `#` lines are comments.
pub fn transcript(text: &str) -> Vec<(String, String)> {
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .collect();
    lines
        .chunks(2)
        .map(|pair| {
            let req = pair[0].strip_prefix("> ").expect("request line");
            let rep = pair[1].strip_prefix("< ").expect("reply line");
            (req.to_string(), rep.to_string())
        })
        .collect()
}
