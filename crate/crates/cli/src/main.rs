//! `metacore`: runs request scripts or an interactive session against a store.

mod session;

use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metacore::{deserialize, kind_of_token, Capacities, MetaKind, Mode, Store};

use session::{save, Session, Status, Step};

#[derive(Parser, Debug)]
#[command(name = "metacore", version, about = "Multi-level meta-modeling kernel")]
struct Cli {
    /// Snapshot to start from instead of an empty store.
    #[arg(long, value_name = "PATH")]
    load: Option<PathBuf>,

    /// Where to write the final snapshot.
    #[arg(long, value_name = "PATH")]
    save: Option<PathBuf>,

    /// Request script; without it (and without a subcommand) requests are
    /// read from stdin.
    #[arg(long, value_name = "PATH")]
    script: Option<PathBuf>,

    /// Slot capacity for one kind of a fresh store, e.g. `Class=4096`.
    #[arg(long = "capacity", value_name = "KIND=N", value_parser = parse_capacity)]
    capacities: Vec<(MetaKind, u32)>,

    /// Keep going after a failed request instead of stopping at the first.
    #[arg(long)]
    continue_on_error: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply a reflective meta-model change and print its impact report.
    Reflect {
        /// Operation and its arguments, e.g. `remove_feature Class:1 Attribute:2`.
        #[arg(required = true, num_args = 1.., allow_negative_numbers = true)]
        change: Vec<String>,
        /// Clear the invalidated slots instead of refusing the change.
        #[arg(long)]
        force: bool,
    },
    /// Print every diagnostic for the model.
    Validate,
}

fn parse_capacity(arg: &str) -> Result<(MetaKind, u32), String> {
    let (kind, n) = arg.split_once('=').ok_or("expected KIND=N")?;
    let kind = kind_of_token(kind).map_err(|e| e.to_string())?;
    let n = n.parse::<u32>().map_err(|e| format!("{n}: {e}"))?;
    if n == 0 {
        return Err("capacity must be positive".into());
    }
    Ok((kind, n))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(&cli) {
        Ok(status) => status,
        Err(message) => {
            eprintln!("metacore: {message}");
            Status::IoError
        }
    };
    ExitCode::from(status as u8)
}

fn open_store(cli: &Cli) -> Result<Store, String> {
    if let Some(path) = &cli.load {
        if !cli.capacities.is_empty() {
            return Err(
                "--capacity applies to fresh stores and cannot be combined with --load".into(),
            );
        }
        let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        return deserialize(&bytes).map_err(|e| format!("{}: {e}", path.display()));
    }
    let mut capacities = Capacities::default();
    for (kind, n) in &cli.capacities {
        capacities.set(*kind, *n);
    }
    Store::new(capacities).map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<Status, String> {
    let store = open_store(cli)?;
    let stdout = io::stdout().lock();
    let mut session = Session::new(store, stdout);
    let io_err = |e: io::Error| format!("stdout: {e}");

    // A stdin session never ends on a failed request, so it keeps going like
    // continue mode and saves at the end.
    let stdin_session = cli.script.is_none() && cli.command.is_none();
    let keep_going = cli.continue_on_error || stdin_session;

    let mut status = Status::Ok;
    if let Some(path) = &cli.script {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        status = feed(
            &mut session,
            text.lines(),
            cli.continue_on_error,
            &path.display().to_string(),
        )
        .map_err(io_err)?;
    } else if stdin_session {
        let stdin = io::stdin();
        let interactive = stdin.is_terminal();
        let lines = PromptedLines {
            stdin: stdin.lock(),
            interactive,
        };
        status = feed(&mut session, lines, true, "stdin").map_err(io_err)?;
    }

    if status == Status::Ok || keep_going {
        let failed = match &cli.command {
            Some(Command::Reflect { change, force }) => {
                let args: Vec<&str> = change.iter().map(String::as_str).collect();
                let mode = if *force { Mode::Force } else { Mode::Restrict };
                !session.reflect(&args, mode).map_err(io_err)?
            }
            Some(Command::Validate) => session.validate().map_err(io_err)?,
            None => false,
        };
        if failed {
            status = status.max(Status::RequestError);
        }
    }

    let (store, mut out) = session.into_parts();
    out.flush().map_err(io_err)?;
    let keep = status == Status::Ok || (keep_going && status != Status::IoError);
    if let (Some(path), true) = (&cli.save, keep) {
        save(&store, path).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(status)
}

/// Runs `lines` through the session. Without `keep_going` the first failure
/// stops the run.
fn feed<W: Write>(
    session: &mut Session<W>,
    lines: impl IntoIterator<Item = impl AsRef<str>>,
    keep_going: bool,
    source: &str,
) -> io::Result<Status> {
    let mut status = Status::Ok;
    for (n, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        match session.line(line)? {
            Step::Continue => {}
            Step::Quit => break,
            Step::Failed(s) => {
                eprintln!("{source}:{}: failed: {}", n + 1, line.trim());
                status = status.max(s);
                if !keep_going {
                    break;
                }
            }
        }
    }
    Ok(status)
}

/// Stdin lines, with a prompt when a person is typing.
struct PromptedLines<R> {
    stdin: R,
    interactive: bool,
}

impl<R: BufRead> Iterator for PromptedLines<R> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        if self.interactive {
            eprint!("> ");
        }
        let mut line = String::new();
        match self.stdin.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line),
        }
    }
}
