use std::io::{self, BufReader};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use anyhow::{Context, Result};

use hil_core::dut::Bench;
use hil_core::pal::serve_lines;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Reference,
    Dut,
}

impl Side {
    fn other(self) -> Side {
        match self {
            Side::Reference => Side::Dut,
            Side::Dut => Side::Reference,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Side::Reference => "reference",
            Side::Dut => "dut",
        }
    }
}

fn handle(bench: &Mutex<Bench>, side: Side, line: &str) -> String {
    let mut b = bench.lock().unwrap_or_else(|p| p.into_inner());
    match side {
        Side::Reference => b.ref_line(line),
        Side::Dut => b.dut_line(line),
    }
}

fn bind(addr: &str, side: Side) -> Result<TcpListener> {
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    eprintln!("{} listening on {}", side.name(), listener.local_addr()?);
    Ok(listener)
}

fn accept_loop(listener: TcpListener, bench: Arc<Mutex<Bench>>, side: Side) {
    for stream in listener.incoming().flatten() {
        let bench = Arc::clone(&bench);
        thread::spawn(move || {
            let _ = serve_stream(stream, &bench, side);
        });
    }
}

fn serve_stream(stream: TcpStream, bench: &Mutex<Bench>, side: Side) -> io::Result<()> {
    let _ = stream.set_nodelay(true);
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(reader, stream, |line| handle(bench, side, line))
}

/// Serves `side` of `bench` on stdio or `listen`, and the other side on
/// `other_listen` if given. Both share one simulated clock.
pub fn run(bench: Bench, side: Side, stdio: bool, listen: Option<String>, other_listen: Option<String>) -> Result<()> {
    let bench = Arc::new(Mutex::new(bench));
    if let Some(addr) = other_listen {
        let listener = bind(&addr, side.other())?;
        let b = Arc::clone(&bench);
        thread::spawn(move || accept_loop(listener, b, side.other()));
    }
    if stdio {
        let stdin = io::stdin().lock();
        serve_lines(stdin, io::stdout().lock(), |line| handle(&bench, side, line))?;
    } else if let Some(addr) = listen {
        accept_loop(bind(&addr, side)?, bench, side);
    }
    Ok(())
}
