mod serve;
mod shell;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hil_core::dut::{Bench, DutConfig, FaultConfig};
use hil_core::harness::{read_trace, ReportFormat, RunConfig, Runner, Suite, TestReport, DEFAULT_PPM_THRESHOLD};
use hil_core::memmap::{compute_layout, parse_config, reference_map, write_artifacts, LayoutedMap};
use hil_core::pal::{DutClient, MapStore, RefSession, SimTransport, TcpTransport, Transport};

#[derive(Parser)]
#[command(name = "hiltest", version, about = "Simulated hardware-in-the-loop test bench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate layout, struct, CSV name map and docs from a map configuration.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Serve the reference device (and optionally the DUT) of a simulated bench.
    Serve(ServeArgs),
    /// Virtual DUT commands.
    Dut {
        #[command(subcommand)]
        cmd: DutCmd,
    },
    /// Interactive name-based shell on the reference device.
    Shell {
        /// host:port, or `sim` for an in-process bench.
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        maps: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        timeout_ms: u64,
    },
    /// Print the reference device's GPIO trace as CSV.
    DumpTrace {
        #[arg(long = "ref")]
        ref_addr: String,
        #[arg(long)]
        maps: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        timeout_ms: u64,
    },
    /// Run a test suite against a DUT/reference pair.
    RunSuite(RunArgs),
}

#[derive(Subcommand)]
enum DutCmd {
    /// Serve the DUT shell (and optionally the reference device) of a simulated bench.
    Serve(DutServeArgs),
}

#[derive(Args, Clone)]
pub struct BenchArgs {
    /// Board description JSON.
    #[arg(long)]
    board: Option<PathBuf>,
    /// Fault configuration JSON.
    #[arg(long)]
    faults: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Map configuration for the reference device instead of the bundled one.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "mode", required = true, multiple = false, args = ["stdio", "listen"])]
pub struct ServeArgs {
    #[arg(long)]
    stdio: bool,
    #[arg(long)]
    listen: Option<String>,
    /// Also serve the DUT shell on this address.
    #[arg(long)]
    dut_listen: Option<String>,
    #[command(flatten)]
    bench: BenchArgs,
}

#[derive(Args)]
#[group(id = "mode", required = true, multiple = false, args = ["stdio", "listen"])]
pub struct DutServeArgs {
    #[arg(long)]
    stdio: bool,
    #[arg(long)]
    listen: Option<String>,
    /// Also serve the reference device on this address.
    #[arg(long)]
    ref_listen: Option<String>,
    #[command(flatten)]
    bench: BenchArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled suite name or manifest path.
    #[arg(long)]
    suite: String,
    /// host:port, or `sim` for an in-process bench.
    #[arg(long, default_value = "sim")]
    dut: String,
    #[arg(long = "ref", default_value = "sim")]
    ref_addr: String,
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault configuration for a `sim` bench.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Board description for a `sim` bench.
    #[arg(long)]
    board: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PPM_THRESHOLD)]
    ppm_threshold: f64,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Generate { config, out_dir } => {
            let layout = load_layout(&config)?;
            for path in write_artifacts(&layout, &out_dir)? {
                println!("{}", path.display());
            }
        }
        Cmd::Serve(args) => {
            let bench = build_bench(&args.bench)?;
            serve::run(bench, serve::Side::Reference, args.stdio, args.listen, args.dut_listen)?;
        }
        Cmd::Dut {
            cmd: DutCmd::Serve(args),
        } => {
            let bench = build_bench(&args.bench)?;
            serve::run(bench, serve::Side::Dut, args.stdio, args.listen, args.ref_listen)?;
        }
        Cmd::Shell {
            endpoint,
            maps,
            timeout_ms,
        } => {
            let transport = connect(&endpoint, timeout_ms)?;
            let session = RefSession::connect(transport, &map_store(maps.as_deref()))?;
            shell::run(session)?;
        }
        Cmd::DumpTrace {
            ref_addr,
            maps,
            timeout_ms,
        } => {
            let transport = connect(&ref_addr, timeout_ms)?;
            let mut session = RefSession::connect(transport, &map_store(maps.as_deref()))?;
            let events = read_trace(&mut session).map_err(anyhow::Error::msg)?;
            println!("pin,level,timestamp_ns");
            for e in events {
                println!("{},{},{}", e.event.pin, e.event.level, e.event.timestamp_ns);
            }
        }
        Cmd::RunSuite(args) => return run_suite(args),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_layout(path: &Path) -> Result<LayoutedMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = parse_config(&text)?;
    Ok(compute_layout(&spec)?)
}

pub fn build_bench(args: &BenchArgs) -> Result<Bench> {
    let board = match &args.board {
        Some(p) => DutConfig::load(p)?,
        None => DutConfig::default(),
    };
    let faults = match &args.faults {
        Some(p) => FaultConfig::load(p)?,
        None => FaultConfig::none(),
    };
    let map = match &args.config {
        Some(p) => load_layout(p)?,
        None => reference_map(),
    };
    Ok(Bench::with_map(Arc::new(map), board, &faults, args.seed)?)
}

fn sim_pair(bench: Bench) -> (Box<dyn Transport>, Box<dyn Transport>) {
    let (r, d, _) = SimTransport::pair(bench);
    (Box::new(r), Box::new(d))
}

fn tcp(addr: &str, timeout_ms: u64) -> Result<Box<dyn Transport>> {
    let t = TcpTransport::connect(addr, Duration::from_millis(timeout_ms))
        .with_context(|| format!("connecting to {addr}"))?;
    Ok(Box::new(t))
}

/// `sim` is a fresh in-process bench; anything else is a TCP address.
fn connect(addr: &str, timeout_ms: u64) -> Result<Box<dyn Transport>> {
    if addr == "sim" {
        Ok(sim_pair(Bench::healthy(0)).0)
    } else {
        tcp(addr, timeout_ms)
    }
}

fn map_store(maps: Option<&Path>) -> MapStore {
    maps.map_or_else(MapStore::builtin, MapStore::dir)
}

fn run_suite(args: RunArgs) -> Result<ExitCode> {
    let format: ReportFormat = args.format.parse()?;
    let suite = Suite::resolve(&args.suite)?;
    let config = RunConfig {
        seed: args.seed,
        ppm_threshold: args.ppm_threshold,
    };
    let pair = match (args.ref_addr.as_str(), args.dut.as_str()) {
        ("sim", "sim") => sim_pair(build_bench(&BenchArgs {
            board: args.board.clone(),
            faults: args.faults.clone(),
            seed: args.seed,
            config: None,
        })?),
        ("sim", _) | (_, "sim") => bail!("`sim` must be used for both --ref and --dut"),
        _ if args.faults.is_some() || args.board.is_some() => {
            bail!("--faults and --board apply to `sim` endpoints; pass them to the server instead")
        }
        (r, d) => match (tcp(r, args.timeout_ms), tcp(d, args.timeout_ms)) {
            (Ok(r), Ok(d)) => (r, d),
            (Err(e), _) | (_, Err(e)) => {
                return emit(
                    &args,
                    format,
                    infrastructure_failure(&suite, args.seed, format!("{e:#}")),
                )
            }
        },
    };
    let report = match RefSession::connect(pair.0, &map_store(args.maps.as_deref())) {
        Ok(session) => Runner::new(session, DutClient::new(pair.1), config).run_suite(&suite),
        Err(e) => infrastructure_failure(&suite, args.seed, format!("reference device: {e}")),
    };
    emit(&args, format, report)
}

fn infrastructure_failure(suite: &Suite, seed: u64, why: String) -> TestReport {
    let mut r = TestReport::new(suite.suite, seed);
    r.infrastructure_error = Some(why);
    r
}

fn emit(args: &RunArgs, format: ReportFormat, report: TestReport) -> Result<ExitCode> {
    let text = report.render(format);
    match &args.report {
        Some(path) => {
            std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            eprint!("{}", report.to_table());
        }
        None => println!("{}", text.trim_end()),
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}
