//! Library side of the `hlik` command: argument handling, the streaming
//! solve pipeline, solution files and the command implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod solutions;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{Cli, Command};
pub use error::{CliError, CliResult};

/// Caps rayon's worker count from `HLIK_THREADS`. Has no effect once the
/// global pool exists.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("HLIK_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("HLIK_THREADS must be a positive integer, got `{v}`")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = config::merge(args, commands::SWITCHES)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            return Err(CliError::usage(first.trim_start_matches("error: ")));
        }
    };
    init_threads()?;
    match &cli.command {
        Command::Gen(a) => commands::cmd_gen(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Solve(a) => commands::cmd_solve(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Bench(a) => commands::cmd_bench(a),
    }
}
