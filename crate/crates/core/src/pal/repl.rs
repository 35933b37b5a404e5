use std::fmt::Write;

use super::refclient::RefSession;
use super::{PalError, PalResult};

const COMMANDS: &[&str] = &["help", "read", "write", "wae", "ex", "list", "raw", "version", "quit"];

const USAGE: &str = "\
commands:
  read <name> [index [count]]   read a parameter
  write <name> <value>          stage a write
  wae <name> <value>            write, set the module init flag, execute
  ex                            execute staged writes
  list [prefix]                 list parameter names
  help [name]                   this text, or a parameter's description
  raw <line>                    send a protocol line as is
  version                       device interface version
  quit                          leave";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplReply {
    pub text: String,
    pub quit: bool,
}

impl ReplReply {
    fn text(text: impl Into<String>) -> Self {
        ReplReply {
            text: text.into(),
            quit: false,
        }
    }
}

/// Line evaluator behind the interactive shell. Input errors are printed,
/// never propagated.
pub struct Repl {
    session: RefSession,
}

pub fn render(res: &PalResult) -> String {
    serde_json::to_string(res).expect("results are serialisable")
}

impl Repl {
    pub fn new(session: RefSession) -> Self {
        Repl { session }
    }

    pub fn session(&mut self) -> &mut RefSession {
        &mut self.session
    }

    pub fn prompt(&self) -> String {
        format!("refdev {}> ", self.session.map().version())
    }

    /// Candidates for the word ending at `pos`, with the byte offset where
    /// that word starts.
    pub fn complete(&self, line: &str, pos: usize) -> (usize, Vec<String>) {
        let head = &line[..pos.min(line.len())];
        let start = head.rfind(' ').map_or(0, |i| i + 1);
        let word = &head[start..];
        let first = head[..start].split_whitespace().next();
        let candidates = match first {
            None => COMMANDS
                .iter()
                .filter(|c| c.starts_with(word))
                .map(|c| c.to_string())
                .collect(),
            Some("read" | "write" | "wae" | "help" | "list") if head[..start].split_whitespace().count() == 1 => self
                .session
                .map()
                .completions(word)
                .into_iter()
                .map(str::to_string)
                .collect(),
            _ => Vec::new(),
        };
        (start, candidates)
    }

    pub fn eval(&mut self, line: &str) -> ReplReply {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let Some((&cmd, args)) = toks.split_first() else {
            return ReplReply::text("");
        };
        let out = match cmd {
            "quit" | "exit" => {
                return ReplReply {
                    text: String::new(),
                    quit: true,
                }
            }
            "help" => return ReplReply::text(self.help(args.first().copied())),
            "list" => {
                let names = self.session.map().completions(args.first().copied().unwrap_or(""));
                return ReplReply::text(names.join("\n"));
            }
            "read" => self.read(args),
            "write" | "wae" => match args {
                [name, value] => match parse_value(value) {
                    Some(v) if cmd == "write" => self.session.write_reg(name, v),
                    Some(v) => self.session.write_and_execute(name, v),
                    None => Err(PalError::Usage(format!("bad value `{value}`"))),
                },
                _ => Err(PalError::Usage(format!("usage: {cmd} <name> <value>"))),
            },
            "ex" => Ok(self.session.execute()),
            "version" => Ok(self.session.version()),
            "raw" => match line.trim().strip_prefix("raw") {
                Some(rest) if !rest.trim().is_empty() => Ok(self.session.raw(rest)),
                _ => Err(PalError::Usage("usage: raw <line>".into())),
            },
            other => Err(PalError::Usage(format!("unknown command `{other}`; try `help`"))),
        };
        ReplReply::text(match out {
            Ok(res) => render(&res),
            Err(e) => format!("error: {e}"),
        })
    }

    fn read(&mut self, args: &[&str]) -> Result<PalResult, PalError> {
        let num = |i: usize, default: usize| -> Result<usize, PalError> {
            match args.get(i) {
                None => Ok(default),
                Some(t) => t.parse().map_err(|_| PalError::Usage(format!("bad number `{t}`"))),
            }
        };
        match args.first() {
            Some(name) => self.session.read_reg(name, num(1, 0)?, num(2, 1)?),
            None => Err(PalError::Usage("usage: read <name> [index [count]]".into())),
        }
    }

    fn help(&self, name: Option<&str>) -> String {
        let Some(name) = name else {
            return USAGE.to_string();
        };
        match self.session.map().get(name) {
            Some(e) => {
                let mut s = String::new();
                let _ = writeln!(
                    s,
                    "{} ({}, {} at {}, {} bytes)",
                    e.name,
                    e.type_label(),
                    e.access,
                    e.offset,
                    e.size
                );
                let _ = write!(s, "{}", e.description);
                s
            }
            None => format!("error: unknown parameter `{name}`"),
        }
    }
}

fn parse_value(tok: &str) -> Option<i128> {
    match tok.strip_prefix("0x") {
        Some(hex) => i128::from_str_radix(hex, 16).ok(),
        None => tok.parse().ok(),
    }
}
