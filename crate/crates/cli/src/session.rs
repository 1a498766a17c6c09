//! A store plus the line protocol: CRUD requests and `:` directives.

use std::fs;
use std::io::Write;
use std::path::Path;

use metacore::levels::Severity;
use metacore::reflection::ReflectError;
use metacore::{apply_change, execute_line, serialize, validate_model, MetaChange, Mode, Store};

/// Process exit status; a larger value wins when several occur.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    #[default]
    Ok = 0,
    RequestError = 1,
    IoError = 2,
}

/// Outcome of one input line.
#[derive(Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Failed(Status),
    Quit,
}

pub struct Session<W: Write> {
    pub store: Store,
    out: W,
}

impl<W: Write> Session<W> {
    pub fn new(store: Store, out: W) -> Self {
        Session { store, out }
    }

    /// Runs one line. Blank lines and `#` comments do nothing.
    pub fn line(&mut self, line: &str) -> std::io::Result<Step> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(Step::Continue);
        }
        let Some(directive) = line.strip_prefix(':') else {
            let response = execute_line(&mut self.store, line);
            writeln!(self.out, "{response}")?;
            return Ok(if response.is_ok() {
                Step::Continue
            } else {
                Step::Failed(Status::RequestError)
            });
        };
        let mut words = directive.split_whitespace();
        match words.next() {
            Some("quit") => Ok(Step::Quit),
            Some("validate") => {
                let failed = self.validate()?;
                Ok(if failed {
                    Step::Failed(Status::RequestError)
                } else {
                    Step::Continue
                })
            }
            Some("save") => {
                let path = directive["save".len()..].trim();
                if path.is_empty() {
                    writeln!(self.out, "error ParseError :save needs a path")?;
                    return Ok(Step::Failed(Status::RequestError));
                }
                match save(&self.store, Path::new(path)) {
                    Ok(()) => {
                        writeln!(self.out, "ok")?;
                        Ok(Step::Continue)
                    }
                    Err(e) => {
                        writeln!(self.out, "error Io {path}: {e}")?;
                        Ok(Step::Failed(Status::IoError))
                    }
                }
            }
            Some("reflect") => {
                let mut args: Vec<&str> = words.collect();
                let force = args.last() == Some(&"--force");
                if force {
                    args.pop();
                }
                let ok = self.reflect(&args, if force { Mode::Force } else { Mode::Restrict })?;
                Ok(if ok {
                    Step::Continue
                } else {
                    Step::Failed(Status::RequestError)
                })
            }
            _ => {
                writeln!(self.out, "error ParseError unknown directive :{directive}")?;
                Ok(Step::Failed(Status::RequestError))
            }
        }
    }

    /// Prints every diagnostic and a closing tally. Returns whether any
    /// error-severity diagnostic was found.
    pub fn validate(&mut self) -> std::io::Result<bool> {
        let diags = validate_model(&self.store);
        for d in &diags {
            writeln!(self.out, "{d}")?;
        }
        let errors = diags
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .count();
        let warnings = diags.len() - errors;
        writeln!(self.out, "validate errors={errors} warnings={warnings}")?;
        Ok(errors > 0)
    }

    /// Applies a reflective change and prints its report. Returns whether the
    /// change went through.
    pub fn reflect(&mut self, args: &[&str], mode: Mode) -> std::io::Result<bool> {
        let change = match MetaChange::parse(args) {
            Ok(c) => c,
            Err(e) => {
                writeln!(self.out, "error {e}")?;
                return Ok(false);
            }
        };
        match apply_change(&mut self.store, &change, mode) {
            Ok(outcome) => {
                match outcome.created {
                    Some(id) => writeln!(self.out, "ok {id} {}", outcome.report.summary())?,
                    None => writeln!(self.out, "ok {}", outcome.report.summary())?,
                }
                for d in outcome.report.diagnostics(true) {
                    writeln!(self.out, "{d}")?;
                }
                Ok(true)
            }
            Err(ReflectError { error, report }) => {
                writeln!(self.out, "error {error}")?;
                for d in report.iter().flat_map(|r| r.diagnostics(false)) {
                    writeln!(self.out, "{d}")?;
                }
                Ok(false)
            }
        }
    }

    pub fn into_parts(self) -> (Store, W) {
        (self.store, self.out)
    }
}

pub fn save(store: &Store, path: &Path) -> std::io::Result<()> {
    fs::write(path, serialize(store))
}
