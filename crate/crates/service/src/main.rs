use std::net::SocketAddr;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use bishop_core::lexicon::Lexicon;
use bishop_core::resolution::{Engine, EngineConfig};
use bishop_service::{router, AppState, DEFAULT_IDLE_EXPIRY};

const SWEEP_INTERVAL: Duration = Duration::from_secs(60);

/// Usage: `bishop-serve [ADDR] [LEXICON]`, default address 127.0.0.1:8080.
#[tokio::main]
async fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let addr: SocketAddr = args
        .next()
        .unwrap_or_else(|| "127.0.0.1:8080".into())
        .parse()
        .context("parsing listen address")?;
    let lexicon = match args.next() {
        Some(p) => Lexicon::load(&p).with_context(|| format!("loading lexicon {p}"))?,
        None => Lexicon::packaged(),
    };
    let app = AppState::new(Engine::new(lexicon, EngineConfig::default()), DEFAULT_IDLE_EXPIRY);
    let sweeper = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(SWEEP_INTERVAL);
        loop {
            tick.tick().await;
            sweeper.sweep_expired(Instant::now()).await;
        }
    });
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on {addr}");
    axum::serve(listener, router(app)).await.context("serving")?;
    Ok(())
}
