mod common;

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{decode, Image, Shared};
use hil_core::dut::{Bench, DutConfig, FaultConfig, Outcome, Value};
use hil_core::harness::{RunConfig, Runner, Suite, SuiteKind};
use hil_core::memmap::{
    compute_layout, parse_config, reference_map, write_artifacts, Access, Endian, ParameterSpec, ScalarType,
    REFERENCE_CONFIG,
};
use hil_core::pal::{DutClient, MapStore, NameMap, PalError, Recording, RefSession, SimTransport, Unreachable};

fn sim_session(bench: Bench) -> (RefSession, DutClient, Arc<Mutex<Bench>>) {
    let (r, d, shared) = SimTransport::pair(bench);
    let session = RefSession::connect(Box::new(r), &MapStore::builtin()).unwrap();
    (session, DutClient::new(Box::new(d)), shared)
}

#[test]
fn name_reads_match_raw_bytes() {
    let map = reference_map();
    let image = Arc::new(Mutex::new(Image {
        version: map.version.to_string(),
        bytes: vec![0; map.total_size],
    }));
    let mut session = RefSession::connect(Box::new(Shared(Arc::clone(&image))), &MapStore::builtin()).unwrap();
    let entries = session.map().entries().to_vec();
    assert_eq!(entries.len(), 273);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let state: Vec<u8> = (0..map.total_size).map(|_| rng.gen()).collect();
        image.lock().unwrap().bytes = state.clone();
        for e in &entries {
            let got = session.read_reg(&e.name, 0, e.array_len).unwrap();
            let raw = &state[e.offset..e.offset + e.size];
            let want: Vec<i128> = raw
                .chunks(e.elem_size())
                .map(|c| decode(c, e.ty.is_signed(), e.endian == Endian::Big))
                .collect();
            assert_eq!(got.data, Some(Value::List(want)), "{}", e.name);
            assert_eq!(got.cmd, vec![format!("rr {} {}", e.offset, e.size)]);
        }
    }
}

#[test]
fn single_element_reads() {
    let map = reference_map();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let state: Vec<u8> = (0..map.total_size).map(|_| rng.gen()).collect();
    let mut session = RefSession::connect(
        Box::new(Image {
            version: map.version.to_string(),
            bytes: state.clone(),
        }),
        &MapStore::builtin(),
    )
    .unwrap();
    let entries = session.map().entries().to_vec();
    for e in entries.iter().filter(|e| e.array_len > 1) {
        let k = e.array_len - 1;
        let at = e.offset + k * e.elem_size();
        let want = decode(
            &state[at..at + e.elem_size()],
            e.ty.is_signed(),
            e.endian == Endian::Big,
        );
        let got = session.read_reg(&e.name, k, 1).unwrap();
        assert_eq!(got.data, Some(Value::List(vec![want])), "{}", e.name);
        assert!(matches!(session.read_reg(&e.name, k, 2), Err(PalError::Range { .. })));
    }
}

#[test]
fn write_and_execute_wire_lines() {
    let (r, _d, _) = SimTransport::pair(Bench::healthy(0));
    let (rec, log) = Recording::new(r);
    let mut session = RefSession::connect(Box::new(rec), &MapStore::builtin()).unwrap();
    let nack = session.map().lookup("i2c.mode.nack_data").unwrap().offset;
    let init = session.map().lookup("i2c.mode.init").unwrap().offset;
    log.lock().unwrap().clear();

    let res = session.write_and_execute("i2c.mode.nack_data", 1).unwrap();
    let want = vec![format!("wr {nack} 1"), format!("wr {init} 1"), "ex".to_string()];
    assert_eq!(res.result, Outcome::Success);
    assert_eq!(res.cmd, want);
    assert_eq!(*log.lock().unwrap(), want);
    assert_eq!(session.read_value("i2c.mode.nack_data").unwrap(), 1);
}

#[test]
fn staged_write_needs_execute() {
    let (mut session, _, _) = sim_session(Bench::healthy(0));
    session.write_reg_at("user_reg", 3, &[9, 8]).unwrap();
    assert_eq!(
        session.read_reg("user_reg", 3, 2).unwrap().data,
        Some(Value::List(vec![0, 0]))
    );
    assert_eq!(session.execute().result, Outcome::Success);
    assert_eq!(
        session.read_reg("user_reg", 3, 2).unwrap().data,
        Some(Value::List(vec![9, 8]))
    );
}

#[test]
fn client_side_checks() {
    let (mut session, _, _) = sim_session(Bench::healthy(0));
    assert!(matches!(
        session.write_reg("i2c.r_count", 1),
        Err(PalError::Access {
            access: Access::ReadOnly,
            ..
        })
    ));
    assert!(matches!(
        session.write_reg("user_reg", 256),
        Err(PalError::Encode { .. })
    ));
    assert!(matches!(
        session.read_reg("no.such", 0, 1),
        Err(PalError::UnknownName(_))
    ));
    assert!(matches!(
        session.read_reg("user_reg", 127, 2),
        Err(PalError::Range { .. })
    ));
}

#[test]
fn nack_data_makes_register_read_fail() {
    let (mut session, mut dut, _) = sim_session(Bench::healthy(0));
    let addr = session.read_value("i2c.slave_addr_1").unwrap() as u8;
    session.write_and_execute("i2c.mode.nack_data", 1).unwrap();
    assert_eq!(dut.i2c_init(100_000).result, Outcome::Success);
    let res = dut.i2c_read_reg(addr, 0, 1);
    assert_eq!(res.result, Outcome::Error);
    assert_eq!(res.error_code, Some(-5));
}

#[test]
fn one_register_read_counts() {
    let (mut session, mut dut, _) = sim_session(Bench::healthy(0));
    session.write_reg_at("user_reg", 0, &[0xa5]).unwrap();
    session.execute();
    let addr = session.read_value("i2c.slave_addr_1").unwrap() as u8;
    dut.i2c_init(100_000);
    let res = dut.i2c_read_reg(addr, 0, 1);
    assert_eq!(res.result, Outcome::Success);
    let byte0 = session.read_value("user_reg").unwrap();
    assert_eq!(byte0, 0xa5);
    assert_eq!(res.data.as_ref().and_then(Value::as_list), Some(&[byte0][..]));
    assert_eq!(session.read_value("i2c.r_count").unwrap(), 1);
    assert_eq!(session.read_value("i2c.w_count").unwrap(), 1);
}

#[test]
fn unreachable_endpoints() {
    assert_eq!(
        RefSession::connect(Box::new(Unreachable), &MapStore::builtin()).err(),
        Some(PalError::Timeout)
    );
    let mut session = RefSession::with_map(Box::new(Unreachable), NameMap::from_layout(&reference_map()));
    let res = session.read_reg("user_reg", 0, 1).unwrap();
    assert_eq!(res.result, Outcome::Timeout);
    assert_eq!(res.cmd.len(), 1);
    let res = DutClient::new(Box::new(Unreachable)).sync();
    assert_eq!(res.result, Outcome::Timeout);
}

#[test]
fn unknown_version_is_refused() {
    let image = Image {
        version: "9.9.9".into(),
        bytes: vec![0; 16],
    };
    assert!(matches!(
        RefSession::connect(Box::new(image), &MapStore::builtin()),
        Err(PalError::UnknownVersion(v)) if v == "9.9.9"
    ));
}

/// Adds a parameter to the i2c module and bumps the minor version.
#[test]
fn name_based_suite_survives_map_growth() {
    let mut spec = parse_config(REFERENCE_CONFIG).unwrap();
    spec.version.minor += 1;
    let i2c = spec.modules.iter_mut().find(|m| m.name == "i2c").unwrap();
    i2c.parameters
        .push(ParameterSpec::scalar("scratch", ScalarType::U32, 2, Access::Writable));
    let grown = compute_layout(&spec).unwrap();
    let old = reference_map();

    let moved: Vec<_> = old
        .entries
        .iter()
        .filter(|e| grown.entry(&e.name).unwrap().offset != e.offset)
        .map(|e| e.name.clone())
        .collect();
    assert!(!moved.is_empty(), "later modules should shift");
    for e in old.entries.iter().filter(|e| e.module() == "i2c") {
        assert_eq!(grown.entry(&e.name).unwrap().offset, e.offset, "{}", e.name);
    }

    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&grown, dir.path()).unwrap();
    let grown = Arc::new(grown);
    for kind in [SuiteKind::I2c, SuiteKind::Spi, SuiteKind::GpioTimer] {
        let bench = Bench::with_map(Arc::clone(&grown), DutConfig::default(), &FaultConfig::none(), 3).unwrap();
        let (r, d, _) = SimTransport::pair(bench);
        let session = RefSession::connect(Box::new(r), &MapStore::dir(dir.path())).unwrap();
        assert_eq!(session.map().version(), "1.3.3");
        assert!(session.map().get("i2c.scratch").is_some());
        let report =
            Runner::new(session, DutClient::new(Box::new(d)), RunConfig::default()).run_suite(&Suite::builtin(kind));
        assert_eq!(report.exit_code(), 0, "{}", report.to_table());
    }
}
