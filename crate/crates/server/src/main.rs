//! `pathsup-server`: HTTP backend for the annotation tool.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use pathsup_server::{serve, Store};

#[derive(Parser)]
#[command(name = "pathsup-server", version, about = "Annotation session server")]
struct Cli {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory holding one subdirectory per session.
    #[arg(long)]
    data_dir: PathBuf,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let store = match Store::open(&cli.data_dir) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: --data-dir {}: {e}", cli.data_dir.display());
            return ExitCode::FAILURE;
        }
    };
    let listener = match tokio::net::TcpListener::bind(cli.addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: --addr {}: {e}", cli.addr);
            return ExitCode::FAILURE;
        }
    };
    log::info!("listening on {}", cli.addr);
    if let Err(e) = serve(listener, store).await {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
