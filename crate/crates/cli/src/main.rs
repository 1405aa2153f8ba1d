mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;

/// A failure with its exit code: 1 for bad input, 2 for internal errors.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn from_clap(e: clap::Error) -> Self {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            return CliError {
                code: 0,
                message: e.to_string(),
            };
        }
        let rendered = e.render().to_string();
        let summary: Vec<&str> = rendered
            .lines()
            .take_while(|l| !l.starts_with("Usage:"))
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("tip:"))
            .collect();
        let summary = summary.join(" ");
        let summary = summary.strip_prefix("error: ").unwrap_or(&summary);
        CliError::invalid(format!("{summary} (see --help)"))
    }
}

impl From<forumtag::Error> for CliError {
    fn from(e: forumtag::Error) -> Self {
        let message = e.to_string().replace('\n', " ");
        if e.is_validation() {
            CliError::invalid(message)
        } else {
            CliError::internal(message)
        }
    }
}

fn main() -> ExitCode {
    let result = config::parse(std::env::args_os().collect()).and_then(|(cli, extra)| commands::run(cli, extra));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.code == 0 => {
            print!("{}", e.message);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
