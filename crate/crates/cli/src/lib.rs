//! Reproducible experiment runner for the `exitdom` library.
//!
//! Every output embeds the fully resolved configuration, so feeding an output
//! file back through `--config` reproduces it byte for byte.

pub mod commands;
pub mod config;
pub mod output;
pub mod params;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::Path;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, ArgMatches, Command};
use thiserror::Error;

use crate::params::{specs, Param, COMMON};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<exitdom::Error> for CliError {
    fn from(e: exitdom::Error) -> Self {
        match e {
            exitdom::Error::InvalidParameter { .. } | exitdom::Error::NotExact(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn help_line(p: &Param) -> String {
    match p.default {
        Some(d) => format!("{} [default: {d}]", p.help),
        None if p.key == "config" => p.help.to_string(),
        None => format!("{} [required]", p.help),
    }
}

/// The full command tree, built from the parameter tables.
pub fn command() -> Command {
    let mut root = Command::new("exitdom")
        .version(VERSION)
        .about("Exit-time dominance for biased walks and drifted Brownian motion")
        .after_help("Exit status: 0 success, 1 usage error, 2 numerical check failed, 3 I/O error.")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for spec in specs() {
        let mut sub = Command::new(spec.name)
            .about(spec.about)
            .after_help(spec.schema);
        for p in spec.params.iter().chain(&COMMON) {
            sub = sub.arg(
                Arg::new(p.key)
                    .long(p.key)
                    .value_name(p.value_name)
                    .help(help_line(p))
                    .action(ArgAction::Set),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

fn flag_values(matches: &ArgMatches) -> BTreeMap<&'static str, String> {
    let spec = specs();
    let keys = spec
        .iter()
        .flat_map(|s| s.params.iter().map(|p| p.key))
        .chain(COMMON.iter().map(|p| p.key));
    let mut flags = BTreeMap::new();
    for key in keys {
        if let Ok(Some(v)) = matches.try_get_one::<String>(key) {
            flags.insert(key, v.clone());
        }
    }
    flags
}

/// Runs the tool on `args` (including the program name); returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(stderr, "{text}");
                    1
                }
                _ => {
                    let first = text.lines().next().unwrap_or("usage error");
                    let _ = writeln!(stderr, "exitdom: {first}");
                    1
                }
            };
        }
    };
    match dispatch(&matches, stdout) {
        Ok(None) => 0,
        Ok(Some(failure)) => {
            let _ = writeln!(stderr, "exitdom: check failed: {failure}");
            2
        }
        Err(e) => {
            let _ = writeln!(stderr, "exitdom: error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves, computes and writes; `Ok(Some(..))` reports a failed check.
fn dispatch(matches: &ArgMatches, stdout: &mut dyn Write) -> Result<Option<String>, CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let spec = specs()
        .into_iter()
        .find(|s| s.name == name)
        .expect("subcommands come from the tables");
    let flags = flag_values(sub);
    let file = match flags.get("config") {
        Some(path) => config::load(Path::new(path))?,
        None => Vec::new(),
    };
    let env_out_dir = std::env::var(config::OUT_DIR_ENV)
        .ok()
        .filter(|v| !v.is_empty());
    let resolved = config::resolve(&spec, &flags, &file, env_out_dir)?;
    commands::precheck(&resolved)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("invalid value for `--threads`: {e}")))?;
    let artifact = pool.install(|| commands::execute(&resolved))?;
    let written = output::emit(&resolved, &artifact, stdout)?;
    if resolved.out_dir != "-" {
        let mut text = artifact.summary.clone();
        for path in &written {
            text.push_str(&format!("wrote {}\n", path.display()));
        }
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}")))?;
    }
    Ok(artifact.failure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut argv = vec!["exitdom"];
        argv.extend_from_slice(args);
        let code = run_with(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn command_tree_is_valid() {
        command().debug_assert();
    }

    #[test]
    fn help_exits_zero_and_bare_call_is_usage() {
        assert_eq!(run_capture(&["--help"]).0, 0);
        assert_eq!(run_capture(&["rw-survival", "--help"]).0, 0);
        assert_eq!(run_capture(&[]).0, 1);
    }

    #[test]
    fn unknown_flag_is_a_single_line_usage_error() {
        let (code, _, err) = run_capture(&["rw-survival", "--colour", "red"]);
        assert_eq!(code, 1);
        assert_eq!(err.lines().count(), 1);
        assert!(err.contains("--colour"));
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        let usage: CliError = exitdom::Error::NotExact("0.1".into()).into();
        assert_eq!(usage.exit_code(), 1);
        let numerical: CliError = exitdom::Error::NonConvergence {
            what: "series",
            terms: 3,
        }
        .into();
        assert_eq!(numerical.exit_code(), 2);
    }
}
