mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use bbm::BbmError;
use settings::{Settings, UsageError};

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(
            BbmError::InvalidParameter(_) | BbmError::VocabularyMismatch(_) | BbmError::Dimension { .. },
        ) = cause.downcast_ref::<BbmError>()
        {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref();
    let workers = cli.workers;
    match cli.command {
        Command::Preprocess(a) => commands::preprocess_cmd(a, Settings::new("preprocess", config)?, workers),
        Command::Train(a) => commands::train_cmd(a, Settings::new("train", config)?, workers),
        Command::Eval(a) => commands::eval_cmd(a, Settings::new("eval", config)?, workers),
        Command::ExportFeatures(a) => {
            commands::export_cmd(a, Settings::new("export-features", config)?, workers)
        }
        Command::TopWords(a) => commands::top_words_cmd(a, Settings::new("top-words", config)?, workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
