//! `ganvo` command-line entry point.

mod args;
mod data;
mod eval;
mod gradcheck;
mod manifest;
mod synth;
mod train;

use std::process::ExitCode;

use clap::Parser;
use ganvo_core::{Error, ErrorKind, Result};

use args::{Cli, Command};

const THREADS_VAR: &str = "GANVO_THREADS";

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn configure_threads() -> Result<()> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => {
            let n = v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| {
                    Error::Config(format!("{THREADS_VAR}={v:?} is not a positive integer"))
                })?;
            ganvo_core::init_thread_pool(n)
        }
        Err(_) => Ok(()),
    }
}

fn dispatch(command: Command) -> Result<()> {
    configure_threads()?;
    log::debug!("running {}", command.name());
    match command {
        Command::Train(a) => train::run(a),
        Command::EvalPose(a) => eval::pose(a),
        Command::EvalDepth(a) => eval::depth(a),
        Command::Synth(a) => synth::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
