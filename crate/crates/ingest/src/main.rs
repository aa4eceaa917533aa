use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use perfpower_ingest::{AppState, EventStore, FileStore, ServiceConfig};
use tracing_subscriber::EnvFilter;

/// Click-event ingestion service.
#[derive(Parser)]
#[command(name = "perfpower-ingest", version)]
struct Args {
    /// Config file with `service.*` keys.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `service.listen`.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut config = match ServiceConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    let interval = Duration::from_millis(config.fsync_interval_ms);
    let store = match FileStore::open(&config.store_path, interval) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("cannot open store {}: {e}", config.store_path.display());
            return ExitCode::from(3);
        }
    };
    let listener = match tokio::net::TcpListener::bind(config.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot listen on {}: {e}", config.listen);
            return ExitCode::from(3);
        }
    };
    if !interval.is_zero() {
        let store = Arc::clone(&store);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(interval);
            loop {
                tick.tick().await;
                if let Err(e) = store.sync() {
                    tracing::error!(error = %e, "periodic fsync failed");
                }
            }
        });
    }
    tracing::info!(listen = %config.listen, store = %config.store_path.display(), "serving");
    let state = AppState::new(store, &config);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match perfpower_ingest::serve(listener, state, shutdown).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("server error: {e}");
            ExitCode::from(3)
        }
    }
}
