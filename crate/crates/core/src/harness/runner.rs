use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

use crate::dut::{Bench, DutConfig, DutResponse, FaultConfig, Outcome, Value};
use crate::pal::{DutClient, MapStore, PalResult, RefSession, SimTransport};
use crate::sim::{CaptureKind, GpioEvent};

use super::manifest::{Approx, DutExpect, RefSpan, Step, Suite, TestCase};
use super::report::{CaseReport, TestReport, Verdict};
use super::stats::{compute_timing_stats, linear_fit};

/// Default accuracy budget for the DUT timer.
pub const DEFAULT_PPM_THRESHOLD: f64 = 170.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub ppm_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            ppm_threshold: DEFAULT_PPM_THRESHOLD,
        }
    }
}

/// A trace event with its capture sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TracedEvent {
    pub seq: u64,
    pub event: GpioEvent,
}

type StepResult = Result<(), String>;

struct CaseCtx {
    vars: HashMap<String, i128>,
    measured: BTreeMap<String, f64>,
}

impl CaseCtx {
    fn subst(&self, text: &str) -> Result<String, String> {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| format!("unclosed placeholder in `{text}`"))?;
            let key = &rest[open + 1..open + close];
            let v = self.vars.get(key).ok_or_else(|| format!("unknown variable `{key}`"))?;
            out.push_str(&rest[..open]);
            out.push_str(&v.to_string());
            rest = &rest[open + close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn scalar(&self, v: &Json) -> Result<i128, String> {
        match v {
            Json::Number(n) => n
                .as_i64()
                .map(i128::from)
                .or_else(|| n.as_u64().map(i128::from))
                .ok_or_else(|| format!("not an integer: {n}")),
            Json::String(s) => self.subst(s)?.parse().map_err(|_| format!("`{s}` is not an integer")),
            other => Err(format!("expected a number, got {other}")),
        }
    }

    fn value(&self, v: &Json) -> Result<Value, String> {
        match v {
            Json::Array(items) => items
                .iter()
                .map(|i| self.scalar(i))
                .collect::<Result<_, _>>()
                .map(Value::List),
            Json::String(s) if !s.starts_with('{') => Ok(Value::Text(s.clone())),
            other => self.scalar(other).map(Value::Int),
        }
    }
}

fn same_data(expected: &Value, got: Option<&Value>) -> bool {
    match (expected, got) {
        (Value::Int(e), Some(Value::List(g))) => g.len() == 1 && g[0] == *e,
        (e, Some(g)) => e == g,
        (_, None) => false,
    }
}

fn show(v: Option<&Value>) -> String {
    match v {
        Some(Value::List(l)) if l.len() == 1 => l[0].to_string(),
        Some(v) => v.to_string(),
        None => "nothing".to_string(),
    }
}

/// Drives one DUT and one reference device through suite manifests.
pub struct Runner {
    refs: RefSession,
    dut: DutClient,
    config: RunConfig,
    expected_version: String,
}

impl Runner {
    pub fn new(refs: RefSession, dut: DutClient, config: RunConfig) -> Self {
        let expected_version = refs.map().version().to_string();
        Runner {
            refs,
            dut,
            config,
            expected_version,
        }
    }

    pub fn run_suite(&mut self, suite: &Suite) -> TestReport {
        let started = Instant::now();
        let mut report = TestReport::new(suite.suite, self.config.seed);
        match self.board_gaps() {
            Ok(unsupported) => {
                for (i, case) in suite.cases.iter().enumerate() {
                    if let Some(missing) = case.requires.iter().find(|r| unsupported.contains(*r)) {
                        report.push(CaseReport {
                            id: case.id.clone(),
                            category: case.category,
                            verdict: Verdict::Skip,
                            measured: BTreeMap::new(),
                            reason: Some(format!("board does not support {missing}")),
                        });
                        continue;
                    }
                    match self.setup().and_then(|()| self.vars(i as u64)) {
                        Ok(vars) => report.push(self.run_case(case, vars)),
                        Err(e) => {
                            report.infrastructure_error = Some(format!("setup of {}: {e}", case.id));
                            break;
                        }
                    }
                }
            }
            Err(e) => report.infrastructure_error = Some(e),
        }
        report.sim_time_ns = self.refs.read_value("sys.tick").map_or(0, |t| t as u64);
        report.wall_time_ms = started.elapsed().as_millis() as u64;
        report
    }

    /// Features the board reports as unsupported.
    fn board_gaps(&mut self) -> Result<BTreeSet<String>, String> {
        let meta = self.dut.get_metadata();
        let text = match (&meta.result, meta.data.as_ref().and_then(Value::as_text)) {
            (Outcome::Success, Some(t)) => t.to_string(),
            _ => return Err(format!("DUT metadata unavailable: {}", crate::pal::render(&meta))),
        };
        Ok(text
            .split_whitespace()
            .filter_map(|kv| kv.strip_prefix("unsupported="))
            .flat_map(|v| v.split(','))
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect())
    }

    /// Resets both devices and re-establishes the session.
    fn setup(&mut self) -> Result<(), String> {
        let r = self.dut.reset();
        if r.result != Outcome::Success {
            return Err(format!("DUT reset: {}", r.result));
        }
        let r = self.refs.reset();
        if r.result != Outcome::Success {
            return Err(format!("reference reset: {}", r.result));
        }
        let v = self.refs.version();
        match v.data.as_ref().and_then(Value::as_text) {
            Some(ver) if ver == self.expected_version => {}
            other => {
                return Err(format!(
                    "expected reference version {}, got {}",
                    self.expected_version,
                    other.unwrap_or("none")
                ))
            }
        }
        let s = self.dut.sync();
        if s.result != Outcome::Success {
            return Err(format!("DUT sync: {}", s.result));
        }
        Ok(())
    }

    fn vars(&mut self, case_index: u64) -> Result<HashMap<String, i128>, String> {
        let addr = self.refs.read_value("i2c.slave_addr_1").map_err(|e| e.to_string())? & 0x7f;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ case_index);
        let mut vars = HashMap::new();
        vars.insert("i2c_addr".to_string(), addr);
        vars.insert("absent_addr".to_string(), (addr + 1) & 0x7f);
        for k in 0..4 {
            vars.insert(format!("r{k}"), rng.gen::<u8>() as i128);
        }
        vars.insert("r0_inc".to_string(), (vars["r0"] + 1) & 0xff);
        Ok(vars)
    }

    fn run_case(&mut self, case: &TestCase, vars: HashMap<String, i128>) -> CaseReport {
        let mut ctx = CaseCtx {
            vars,
            measured: BTreeMap::new(),
        };
        let mut reason = None;
        for (i, step) in case.steps.iter().enumerate() {
            if let Err(why) = self.run_step(step, &mut ctx) {
                reason = Some(format!("step {}: {why}", i + 1));
                break;
            }
        }
        CaseReport {
            id: case.id.clone(),
            category: case.category,
            verdict: if reason.is_some() { Verdict::Fail } else { Verdict::Pass },
            measured: ctx.measured,
            reason,
        }
    }

    fn run_step(&mut self, step: &Step, ctx: &mut CaseCtx) -> StepResult {
        match step {
            Step::RefWrite {
                name,
                index,
                value,
                execute,
            } => {
                let values = match ctx.value(value)? {
                    Value::Int(v) => vec![v],
                    Value::List(vs) => vs,
                    Value::Text(t) => return Err(format!("cannot write text `{t}`")),
                };
                let res = match (*execute, values.as_slice()) {
                    (true, [v]) if *index == 0 => self.refs.write_and_execute(name, *v),
                    (true, _) => self.refs.write_reg_at(name, *index, &values).map(|r| {
                        if r.result == Outcome::Success {
                            self.refs.execute()
                        } else {
                            r
                        }
                    }),
                    (false, _) => self.refs.write_reg_at(name, *index, &values),
                }
                .map_err(|e| format!("ref_write {name}: {e}"))?;
                expect_success(&format!("ref_write {name}"), &res)
            }
            Step::RefRead {
                name,
                index,
                count,
                expect,
                approx,
            } => {
                let res = self.ref_read(name, *index, *count)?;
                let got = res.data.as_ref();
                if let Some(Value::List(vals)) = got {
                    if let [v] = vals.as_slice() {
                        ctx.measured.insert(name.clone(), *v as f64);
                    }
                }
                if let Some(exp) = expect {
                    let exp = ctx.value(exp)?;
                    if !same_data(&exp, got) {
                        return Err(format!("ref_read {name}: expected {exp}, got {}", show(got)));
                    }
                }
                if let Some(Approx { value, rel }) = approx {
                    let v = got
                        .and_then(Value::as_list)
                        .and_then(|l| l.first())
                        .copied()
                        .unwrap_or(0) as f64;
                    if !(Approx {
                        value: *value,
                        rel: *rel,
                    })
                    .holds(v)
                    {
                        return Err(format!(
                            "ref_read {name}: {v} not within {:.1}% of {value}",
                            rel * 100.0
                        ));
                    }
                }
                Ok(())
            }
            Step::Dut { cmd, expect } => {
                let line = ctx.subst(cmd)?;
                let resp = self.dut.call(&line);
                self.check_dut(&line, &resp, expect, ctx)
            }
            Step::WiringCheck { pins } => self.wiring_check(pins),
            Step::TimerAccuracy {
                half_period_ns,
                events,
                pin,
                threshold_ppm,
            } => {
                let threshold = threshold_ppm.unwrap_or(self.config.ppm_threshold);
                self.timer_accuracy(*half_period_ns, *events, *pin, threshold, ctx)
            }
            Step::OverlapDelay {
                n_max,
                period_ns,
                pin,
                overhead_ns,
                tolerance,
            } => self.overlap_delay(*n_max, *period_ns, *pin, *overhead_ns, *tolerance, ctx),
        }
    }

    fn ref_read(&mut self, name: &str, index: usize, count: usize) -> Result<PalResult, String> {
        let res = self
            .refs
            .read_reg(name, index, count)
            .map_err(|e| format!("ref_read {name}: {e}"))?;
        expect_success(&format!("ref_read {name}"), &res)?;
        Ok(res)
    }

    fn check_dut(&mut self, line: &str, resp: &DutResponse, expect: &DutExpect, ctx: &CaseCtx) -> StepResult {
        if let Some(want) = expect.result {
            if resp.result != want {
                return Err(format!("`{line}`: expected {want}, got {}", resp.result));
            }
        }
        if let Some(code) = expect.error_code {
            if resp.error_code != Some(code) {
                let got = resp.error_code.map_or_else(|| "none".to_string(), |c| c.to_string());
                return Err(format!("`{line}`: expected error code {code}, got {got}"));
            }
        }
        if let Some(data) = &expect.data {
            let want = ctx.value(data)?;
            if !same_data(&want, resp.data.as_ref()) {
                return Err(format!(
                    "`{line}`: expected data {want}, got {}",
                    show(resp.data.as_ref())
                ));
            }
        }
        if let Some(RefSpan { name, index, count }) = &expect.data_from_ref {
            let held = self.ref_read(name, *index, *count)?;
            if held.data != resp.data {
                return Err(format!(
                    "`{line}`: returned {} but {name} holds {}",
                    show(resp.data.as_ref()),
                    show(held.data.as_ref())
                ));
            }
        }
        Ok(())
    }

    /// Restarts the reference trace with `method`.
    fn restart_trace(&mut self, method: CaptureKind) -> StepResult {
        let res = self
            .refs
            .write_and_execute("trace.mode.method", method.code() as i128)
            .map_err(|e| e.to_string())?;
        expect_success("trace restart", &res)
    }

    pub fn read_trace(&mut self) -> Result<Vec<TracedEvent>, String> {
        read_trace(&mut self.refs)
    }

    fn overrun(&mut self) -> Result<u64, String> {
        self.refs
            .read_value("trace.overrun")
            .map(|v| v as u64)
            .map_err(|e| e.to_string())
    }

    fn dut_ok(&mut self, line: &str) -> StepResult {
        let r = self.dut.call(line);
        expect_success(&format!("`{line}`"), &r)
    }

    /// Toggles each DUT pin and checks that only the same-numbered reference
    /// input saw exactly one rising and one falling edge.
    pub fn wiring_check(&mut self, pins: &[usize]) -> StepResult {
        let mut problems = Vec::new();
        for &pin in pins {
            self.restart_trace(CaptureKind::TimerCaptureIrq)?;
            self.dut_ok(&format!("gpio_toggle {pin}"))?;
            self.dut_ok(&format!("gpio_toggle {pin}"))?;
            let events = self.read_trace()?;
            let seen: BTreeSet<u8> = events.iter().map(|e| e.event.pin).collect();
            if events.is_empty() {
                problems.push(format!("no edges observed on pin {pin}"));
            } else if !seen.contains(&(pin as u8)) || seen.len() > 1 {
                let other: Vec<String> = seen.iter().filter(|&&p| p as usize != pin).map(u8::to_string).collect();
                problems.push(format!("pin {pin} drives reference pin {}", other.join(",")));
            } else {
                let levels: Vec<u8> = events.iter().map(|e| e.event.level).collect();
                if levels != [1, 0] {
                    problems.push(format!(
                        "pin {pin}: expected one rising and one falling edge, saw {levels:?}"
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }

    fn timer_accuracy(
        &mut self,
        half_period: u64,
        events: u32,
        pin: usize,
        threshold: f64,
        ctx: &mut CaseCtx,
    ) -> StepResult {
        self.restart_trace(CaptureKind::TimerCaptureIrq)?;
        self.dut_ok(&format!("timer_bench 1 {half_period} {pin} {events}"))?;
        let overrun = self.overrun()?;
        if overrun > 0 {
            return Err(format!("trace overrun: {overrun} events dropped"));
        }
        // the start marker is not part of the periodic signal
        let trace: Vec<GpioEvent> = self
            .read_trace()?
            .into_iter()
            .filter(|e| e.seq > 0 && e.event.pin as usize == pin)
            .map(|e| e.event)
            .collect();
        let stats = compute_timing_stats(&trace, 2.0 * half_period as f64).map_err(|e| e.to_string())?;
        ctx.measured.insert("n_events".into(), stats.n_events as f64);
        ctx.measured.insert("mean_period_ns".into(), stats.mean_period_ns);
        ctx.measured.insert("ppm_error".into(), stats.ppm_error);
        ctx.measured.insert("jitter_ns".into(), stats.jitter_ns);
        ctx.measured.insert("drift_ns_per_s".into(), stats.drift_ns_per_s);
        if stats.ppm_error.abs() > threshold {
            return Err(format!(
                "timer error {:.1} ppm exceeds ±{threshold} ppm",
                stats.ppm_error
            ));
        }
        Ok(())
    }

    fn overlap_delay(
        &mut self,
        n_max: u32,
        period: u64,
        pin: usize,
        overhead: u64,
        tol: f64,
        ctx: &mut CaseCtx,
    ) -> StepResult {
        let mut delays = Vec::new();
        for n in 1..=n_max {
            self.restart_trace(CaptureKind::TimerCaptureIrq)?;
            self.dut_ok(&format!("timer_bench {n} {period} {pin} 1"))?;
            let overrun = self.overrun()?;
            if overrun > 0 {
                return Err(format!("n={n}: trace overrun, {overrun} events dropped"));
            }
            let trace: Vec<TracedEvent> = self
                .read_trace()?
                .into_iter()
                .filter(|e| e.event.pin as usize == pin)
                .collect();
            if trace.len() != n as usize + 1 || trace[0].seq != 0 {
                return Err(format!("n={n}: expected {} edges, saw {}", n + 1, trace.len()));
            }
            let marker = trace[0].event.timestamp_ns as f64;
            let last = trace[trace.len() - 1].event.timestamp_ns as f64;
            delays.push(last - (marker + period as f64));
        }
        let ns: Vec<f64> = (1..=n_max).map(f64::from).collect();
        for (i, d) in delays.iter().enumerate() {
            ctx.measured.insert(format!("delay_n{:02}_ns", i + 1), *d);
        }
        if let Some(w) = delays.windows(2).position(|w| w[1] < w[0]) {
            return Err(format!("delay decreased from n={} to n={}", w + 1, w + 2));
        }
        let Some((slope, _)) = linear_fit(&ns, &delays) else {
            return Ok(());
        };
        ctx.measured.insert("slope_ns".into(), slope);
        let rel = (slope - overhead as f64).abs() / overhead as f64;
        if rel > tol {
            return Err(format!(
                "slope {slope:.0} ns per timer is {:.1}% off {overhead} ns",
                rel * 100.0
            ));
        }
        Ok(())
    }
}

/// Events still held by the reference trace, oldest first.
pub fn read_trace(refs: &mut RefSession) -> Result<Vec<TracedEvent>, String> {
    let index = refs.read_value("trace.index").map_err(|e| e.to_string())? as u64;
    let slots = refs.map().lookup("trace.tick").map_err(|e| e.to_string())?.array_len as u64;
    let held = index.min(slots);
    if held == 0 {
        return Ok(Vec::new());
    }
    let mut list = |name: &str| -> Result<Vec<i128>, String> {
        let res = refs
            .read_reg(name, 0, slots as usize)
            .map_err(|e| format!("{name}: {e}"))?;
        expect_success(name, &res)?;
        Ok(res
            .data
            .and_then(|d| d.as_list().map(<[i128]>::to_vec))
            .unwrap_or_default())
    };
    let ticks = list("trace.tick")?;
    let sources = list("trace.source")?;
    Ok((index - held..index)
        .map(|seq| {
            let slot = (seq % slots) as usize;
            TracedEvent {
                seq,
                event: GpioEvent {
                    pin: (sources[slot] & 0x7f) as u8,
                    level: (sources[slot] >> 7) as u8 & 1,
                    timestamp_ns: ticks[slot] as u64,
                },
            }
        })
        .collect())
}

fn expect_success(what: &str, res: &PalResult) -> StepResult {
    if res.result == Outcome::Success {
        Ok(())
    } else {
        Err(format!("{what}: {}", crate::pal::render(res)))
    }
}

/// Runs `suite` against a fresh in-process bench.
pub fn run_on_bench(suite: &Suite, board: DutConfig, faults: &FaultConfig, config: RunConfig) -> TestReport {
    let bench = Bench::new(board, faults, config.seed);
    let (ref_t, dut_t, _) = SimTransport::pair(bench);
    match RefSession::connect(Box::new(ref_t), &MapStore::builtin()) {
        Ok(session) => Runner::new(session, DutClient::new(Box::new(dut_t)), config).run_suite(suite),
        Err(e) => {
            let mut report = TestReport::new(suite.suite, config.seed);
            report.infrastructure_error = Some(format!("reference device: {e}"));
            report
        }
    }
}
