// SPDX-License-Identifier: MIT OR Apache-2.0

//! `saelang` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors. Errors
//! are reported on stderr as one JSON object.

mod args;
mod commands;
mod config;
mod io;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use crate::args::Cli;
use crate::config::ConfigError;

fn report(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
}

fn usage(message: &str) -> ExitCode {
    report("Usage", message);
    ExitCode::from(2)
}

fn runtime(e: &saelang::Error) -> ExitCode {
    report(e.kind(), &e.to_string());
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(ConfigError::Usage(m)) => return usage(&m),
        Err(ConfigError::Runtime(e)) => return runtime(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if e.exit_code() == 0 => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return usage(e.render().to_string().trim_end()),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return runtime(&saelang::Error::InvalidParam(e.to_string()));
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => runtime(&e),
    }
}
