//! The `wlra` command-line tool: instance generation, solving, verification
//! and scaling benchmarks.
//!
//! Exit codes: 0 on success, 1 for invalid flags or parameters, 2 for I/O
//! failures and unreadable files, 3 when a stored side-car disagrees with the
//! recomputed pattern structure.

pub mod bench;
pub mod commands;
pub mod error;
pub mod format;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use crate::commands::{dispatch, Cli, Io};

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    if !text.contains("Usage:") {
                        let _ = writeln!(err, "\n{}", usage_for(&args));
                    }
                    1
                }
            };
        }
    };
    let mut io = Io { out, err };
    match dispatch(cli, &mut io) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Usage text of the subcommand named in `args`, or of the whole tool.
fn usage_for(args: &[OsString]) -> String {
    let mut cmd = Cli::command();
    let name = args.get(1).and_then(|a| a.to_str()).unwrap_or_default();
    match cmd.find_subcommand_mut(name) {
        Some(sub) => sub.clone().bin_name(format!("wlra {name}")).render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}
