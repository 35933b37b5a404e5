//! Acceptance run: one line per criterion, each against its time budget.
//! Exits nonzero only when a criterion fails that is not listed in `KNOWN_RED`.

mod common;

use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{arb_spec, check_envelope, decode, oracle_layout, Image, Shared};
use hil_core::dut::{Bench, DutConfig, FaultConfig, FaultFlag, Outcome, Value};
use hil_core::harness::{detecting_category, run_on_bench, RunConfig, Suite, SuiteKind, TestReport, Verdict};
use hil_core::memmap::{compute_layout, reference_map, Access, Endian, ParameterSpec, ScalarType};
use hil_core::pal::{DutClient, MapStore, RefSession, SimTransport};
use hil_core::refdev::{Field, RefDevice};
use hil_core::sim::{estimate_bus_speed, BusTransaction, CaptureKind};

type Check = Result<(), String>;

/// Number, title, time budget in ms, check.
type Criterion = (u32, &'static str, u64, fn() -> Check);

/// Criteria expected to fail, with the reason printed next to them.
const KNOWN_RED: &[(u32, &str)] = &[(
    1,
    "serial-port row spells `{\"data\": 1,\"result\": 0}` without the space the other three examples use",
)];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sim_pair(bench: Bench) -> (RefSession, DutClient) {
    let (r, d, _) = SimTransport::pair(bench);
    let session = RefSession::connect(Box::new(r), &MapStore::builtin()).expect("bundled map");
    (session, DutClient::new(Box::new(d)))
}

fn golden_replies() -> Check {
    let mut dev = RefDevice::reference(0);
    let mut exchange = |line: &str, want: &str| -> Check {
        let got = dev.handle_line(line, 0).to_string();
        ensure(got == want, || format!("`{line}` gave {got}, expected {want}"))
    };
    exchange("-v", r#"{"version": "1.2.3", "result": 0}"#)?;
    exchange("wr 0 42", r#"{"result": 0}"#)?;
    exchange("ex", r#"{"result": 0}"#)?;
    exchange("rr 0 1", r#"{"data": 42, "result": 0}"#)?;

    let mut bench = Bench::healthy(0);
    bench.dut_line("i2c_init");
    let read = bench.dut_command("i2c_read_reg 85 0 1");
    ensure(read.result == Outcome::Success, || format!("i2c_read_reg: {read:?}"))?;
    let got = bench.ref_line("rr 334 1");
    let want = r#"{"data": 1,"result": 0}"#;
    let same_value = serde_json::from_str::<serde_json::Value>(&got).ok() == serde_json::from_str(want).ok();
    ensure(got == want, || {
        format!("`rr 334 1` gave {got} (same JSON value: {same_value})")
    })
}

fn nack_data_read() -> Check {
    let (mut session, mut dut) = sim_pair(Bench::healthy(0));
    let res = session
        .write_and_execute("i2c.mode.nack_data", 1)
        .map_err(|e| e.to_string())?;
    ensure(res.result == Outcome::Success, || format!("write_and_execute: {res:?}"))?;
    dut.i2c_init(100_000);
    let res = dut.i2c_read_reg(85, 0, 1);
    ensure(res.result == Outcome::Error && res.error_code == Some(-5), || {
        format!("i2c_read_reg: {res:?}")
    })
}

fn register_read_counts() -> Check {
    let (mut session, mut dut) = sim_pair(Bench::healthy(0));
    session.write_reg("user_reg", 0x3c).map_err(|e| e.to_string())?;
    session.execute();
    dut.i2c_init(100_000);
    let res = dut.i2c_read_reg(85, 0, 1);
    let byte0 = session.read_value("user_reg").map_err(|e| e.to_string())?;
    ensure(res.data == Some(Value::List(vec![byte0])), || {
        format!("i2c_read_reg {res:?}, user_reg[0] {byte0}")
    })?;
    let r = session.read_value("i2c.r_count").map_err(|e| e.to_string())?;
    let w = session.read_value("i2c.w_count").map_err(|e| e.to_string())?;
    ensure((r, w) == (1, 1), || format!("r_count {r}, w_count {w}"))
}

fn run(kind: SuiteKind, board: DutConfig, faults: &FaultConfig, seed: u64) -> TestReport {
    let config = RunConfig {
        seed,
        ..RunConfig::default()
    };
    run_on_bench(&Suite::builtin(kind), board, faults, config)
}

fn fault_matrix() -> Check {
    for flag in FaultFlag::ALL {
        let (kind, category) = detecting_category(flag);
        let report = run(kind, DutConfig::default(), &FaultConfig::only(flag), 0);
        ensure(report.failures().any(|c| c.category == category), || {
            format!("{} not detected in {category}", flag.name())
        })?;
        if flag == FaultFlag::ExtraReadByte {
            ensure(
                report.failures().any(|c| {
                    c.reason
                        .as_deref()
                        .is_some_and(|r| r.contains("i2c.r_count: expected 1, got 2"))
                }),
                || "extra_read_byte not seen as r_count 2 instead of 1".into(),
            )?;
        }
    }
    for seed in 0..100 {
        for kind in SuiteKind::ALL {
            let report = run(kind, DutConfig::default(), &FaultConfig::none(), seed);
            ensure(report.exit_code() == 0, || {
                format!("healthy seed {seed}:\n{}", report.to_table())
            })?;
        }
    }
    Ok(())
}

fn bus_speed() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        0usize..6,
        prop::collection::vec(any::<u8>(), 1..16),
        any::<bool>(),
        0u64..1_000_000_000,
    );
    let rates = [10_000u32, 100_000, 400_000, 100_000, 1_000_000, 5_000_000];
    runner
        .run(&strategy, |(k, bytes, read, start)| {
            let rate = rates[k];
            let mut dev = RefDevice::reference(0);
            let (mut txn, bits, reg) = if k < 3 {
                let txn = if read {
                    BusTransaction::i2c_read(85, bytes.len(), start, rate)
                } else {
                    BusTransaction::i2c_write(85, bytes.clone(), start, rate)
                };
                (txn, 9, "i2c.freq")
            } else {
                (
                    BusTransaction::spi_transfer(bytes.clone(), 0, start, rate),
                    8,
                    "spi.freq",
                )
            };
            if k < 3 {
                dev.i2c_transact(&mut txn);
            } else {
                dev.spi_transact(&mut txn);
            }
            let est = estimate_bus_speed(&txn).map_err(|e| TestCaseError::fail(e.to_string()))?;
            // address byte on I2C, then whole bytes at `bits` clocks each
            let frame = txn.payload.len() as u64 + if k < 3 { 1 } else { 0 };
            let wire_bits = (frame * bits) as f64;
            let oracle = wire_bits * 1e9 / (wire_bits * 1e9 / rate as f64).ceil();
            prop_assert!(
                (est - oracle).abs() <= 1e-6 * oracle,
                "estimate {} vs oracle {}",
                est,
                oracle
            );
            prop_assert!(
                (est - rate as f64).abs() <= 0.05 * rate as f64,
                "{} Hz for {} Hz",
                est,
                rate
            );
            let field = Field::resolve(dev.map(), reg).unwrap();
            let reported = dev.regs().get(field) as f64;
            prop_assert!(
                (reported - rate as f64).abs() <= 0.05 * rate as f64,
                "{} reports {}",
                reg,
                reported
            );
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn capture_envelope() -> Check {
    for (i, kind) in CaptureKind::ALL.into_iter().enumerate() {
        check_envelope(kind, 100_000, i as u64)?;
    }
    Ok(())
}

fn timer_ppm() -> Check {
    let bound = 2.0 * 200.0 / 1e6 * 1e6 + 1.0;
    for (ppm, want) in [(500.0, Verdict::Fail), (50.0, Verdict::Pass)] {
        let board = DutConfig {
            clock_ppm: ppm,
            ..DutConfig::default()
        };
        let report = run(SuiteKind::GpioTimer, board, &FaultConfig::none(), 0);
        let case = report
            .cases
            .iter()
            .find(|c| c.id == "timer-accuracy")
            .ok_or("no timer-accuracy case")?;
        ensure(case.verdict == want, || {
            format!("{ppm} ppm: {:?} {:?}", case.verdict, case.reason)
        })?;
        ensure(case.measured.get("n_events") == Some(&128.0), || {
            format!("{:?}", case.measured)
        })?;
        let measured = case.measured["ppm_error"];
        ensure((measured - ppm).abs() <= bound, || {
            format!("{ppm} ppm measured as {measured}")
        })?;
    }
    Ok(())
}

fn overlap_delay() -> Check {
    let board = DutConfig {
        handler_overhead_ns: 30_000,
        ..DutConfig::default()
    };
    let report = run(SuiteKind::GpioTimer, board, &FaultConfig::none(), 0);
    let case = report
        .cases
        .iter()
        .find(|c| c.id == "timer-overlap")
        .ok_or("no timer-overlap case")?;
    ensure(case.verdict == Verdict::Pass, || format!("{:?}", case.reason))?;
    let max = (1..=10)
        .map(|n| case.measured[&format!("delay_n{n:02}_ns")])
        .fold(0.0, f64::max);
    ensure((270_000.0..=330_000.0).contains(&max), || format!("max delay {max} ns"))?;
    let slope = case.measured["slope_ns"];
    ensure((slope - 30_000.0).abs() <= 3_000.0, || format!("slope {slope} ns"))
}

fn layout_properties() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        arb_spec(),
        any::<prop::sample::Index>(),
        prop::sample::select(ScalarType::ALL.to_vec()),
    );
    runner
        .run(&strategy, |(spec, pick, ty)| {
            let map = compute_layout(&spec).unwrap();
            let mut spans: Vec<_> = map.entries.iter().map(|e| (e.offset, e.end())).collect();
            spans.sort();
            prop_assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0), "overlap");
            prop_assert!(map.entries.iter().all(|e| e.offset % e.elem_size() == 0), "misaligned");
            let (oracle, _) = oracle_layout(&spec);
            let got: Vec<_> = map.entries.iter().map(|e| (e.name.clone(), e.offset, e.size)).collect();
            prop_assert_eq!(&got, &oracle);
            prop_assert_eq!(&compute_layout(&spec).unwrap(), &map);

            let k = pick.index(spec.modules.len());
            let mut grown = spec.clone();
            let module = &mut grown.modules[k];
            let name = if module.flatten {
                format!("m{k}_appended")
            } else {
                "appended".into()
            };
            module
                .parameters
                .push(ParameterSpec::scalar(&name, ty, 1, Access::Writable));
            let after = compute_layout(&grown).unwrap();
            let prefix = if spec.modules[k].flatten {
                format!("m{k}_")
            } else {
                format!("m{k}.")
            };
            for e in map.entries.iter().filter(|e| e.name.starts_with(&prefix)) {
                prop_assert_eq!(after.entry(&e.name).unwrap().offset, e.offset, "{} moved", e.name);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let reference = reference_map();
    let leaf_bytes: usize = reference.entries.iter().map(|e| e.size).sum();
    ensure(reference.entries.len() == 273, || {
        format!("{} parameters", reference.entries.len())
    })?;
    ensure(leaf_bytes >= 1841 && reference.occupied_bytes() >= 1841, || {
        format!("{leaf_bytes} occupied bytes")
    })?;
    ensure(reference.total_size == 2048, || {
        format!("padded to {}", reference.total_size)
    })
}

fn name_address_parity() -> Check {
    let map = reference_map();
    let image = Arc::new(Mutex::new(Image {
        version: map.version.to_string(),
        bytes: vec![0; map.total_size],
    }));
    let mut session =
        RefSession::connect(Box::new(Shared(Arc::clone(&image))), &MapStore::builtin()).map_err(|e| e.to_string())?;
    let entries = session.map().entries().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for round in 0..100 {
        let state: Vec<u8> = (0..map.total_size).map(|_| rng.gen()).collect();
        image.lock().unwrap().bytes = state.clone();
        for e in &entries {
            let got = session.read_reg(&e.name, 0, e.array_len).map_err(|e| e.to_string())?;
            let raw = &state[e.offset..e.offset + e.size];
            let want: Vec<i128> = raw
                .chunks(e.elem_size())
                .map(|c| decode(c, e.ty.is_signed(), e.endian == Endian::Big))
                .collect();
            ensure(got.data == Some(Value::List(want)), || {
                format!("state {round}: {} differs", e.name)
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "protocol golden responses", 1_000, golden_replies),
        (2, "nack_data register read fails with EIO", 1_000, nack_data_read),
        (3, "single register read counters", 1_000, register_read_counts),
        (4, "seeded fault matrix and healthy runs", 30_000, fault_matrix),
        (5, "bus speed estimation within 5%", 10_000, bus_speed),
        (6, "capture method envelopes", 10_000, capture_envelope),
        (7, "timer ppm classification", 5_000, timer_ppm),
        (8, "overlap delay linearity", 5_000, overlap_delay),
        (9, "layout properties", 10_000, layout_properties),
        (10, "name and address parity", 10_000, name_address_parity),
    ];
    let mut unexpected = 0;
    for (id, title, budget_ms, check) in criteria {
        let start = Instant::now();
        let mut outcome = check();
        let took = start.elapsed();
        if outcome.is_ok() && took > Duration::from_millis(budget_ms) {
            outcome = Err(format!("took {took:?}, budget {budget_ms} ms"));
        }
        let known = KNOWN_RED.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        match (&outcome, known) {
            (Ok(()), _) => println!("criterion {id:>2} PASS  {title} ({} ms)", took.as_millis()),
            (Err(why), Some(note)) => {
                println!(
                    "criterion {id:>2} FAIL  {title} ({} ms): {why} [known: {note}]",
                    took.as_millis()
                )
            }
            (Err(why), None) => {
                unexpected += 1;
                println!("criterion {id:>2} FAIL  {title} ({} ms): {why}", took.as_millis())
            }
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
