use std::path::PathBuf;

use clap::Parser;

/// Serve echogram segmentation over HTTP.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080", env = "ECHOSEG_ADDR")]
    addr: String,
    /// Default checkpoint for inference requests.
    #[arg(long, env = "ECHOSEG_MODEL")]
    model: Option<PathBuf>,
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let listener = match tokio::net::TcpListener::bind(&args.addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.addr);
            std::process::exit(1);
        }
    };
    log::info!("listening on {}", args.addr);
    if let Err(e) = echoseg_service::serve(listener, args.model.as_deref()).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
