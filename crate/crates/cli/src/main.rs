use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perfpower_core::Engine;

mod commands;
mod error;
mod http;

use error::CliError;

/// Measure how much a ranking's arrangement moves clicks.
#[derive(Parser)]
#[command(name = "perfpower", version)]
struct Cli {
    /// `key = value` config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log and its exact oracle values.
    Simulate {
        /// Directory for events.jsonl and truth.json.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of click events.
        #[arg(long)]
        events: Option<usize>,
    },
    /// Post an event log to a running ingest service.
    IngestReplay {
        /// Event log, or a directory holding events.jsonl.
        #[arg(long)]
        input: PathBuf,
        /// Base URL of the service, e.g. http://127.0.0.1:8080.
        #[arg(long)]
        url: String,
        /// Parallel connections.
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
    },
    /// Download stored events from the service.
    Fetch {
        #[arg(long)]
        url: String,
        /// Directory for events.jsonl.
        #[arg(long)]
        output: PathBuf,
        /// Read key; defaults to `service.apiReadKey` from the config.
        #[arg(long)]
        api_key: Option<String>,
        #[arg(long)]
        since: Option<i64>,
        #[arg(long)]
        until: Option<i64>,
    },
    /// Drop burn-in and unclassifiable clicks.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// Directory for events.jsonl and drop_report.json.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        burn_in_days: Option<u32>,
    },
    /// Estimate gaps, distortions and the power bound.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Directory for report.json and report.csv.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Print the treatment group of a (user, query) pair.
    Assign {
        #[arg(long)]
        user: String,
        #[arg(long)]
        query: String,
        #[arg(long, value_parser = parse_engine, default_value = "google")]
        engine: Engine,
    },
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    Engine::parse(s).ok_or_else(|| format!("unknown engine {s:?} (google or bing)"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = commands::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { output, seed, events } => commands::simulate(&config, &output, seed, events),
        Command::IngestReplay { input, url, concurrency } => {
            commands::ingest_replay(&input, &url, concurrency)
        }
        Command::Fetch { url, output, api_key, since, until } => {
            commands::fetch(&config, &url, &output, api_key, since, until)
        }
        Command::Preprocess { input, output, burn_in_days } => {
            commands::preprocess(&config, &input, &output, burn_in_days)
        }
        Command::Report { input, output, seed, resamples } => {
            commands::report(&config, &input, &output, seed, resamples)
        }
        Command::Assign { user, query, engine } => commands::assign(&config, &user, &query, engine),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
