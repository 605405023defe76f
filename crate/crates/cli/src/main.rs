//! `cardpay`: run the payment server, seed and inspect stores, and drive a
//! demo transaction against a running server.

mod client;
mod store;

use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use cardpay_core::server::{BoundServer, Config};
use cardpay_core::workflows::WorkflowKind;
use cardpay_core::{AccountId, Money, SystemClock};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cardpay", version, about = "Debit-card payment server and operator tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server until interrupted.
    Serve {
        /// TOML config file; flags and PORT / STORE_PATH override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// 0 picks a free port, printed on startup.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
    /// Create the demo customers and write their card files.
    Seed {
        #[arg(long, env = "STORE_PATH", default_value = "cardpay-store")]
        store: PathBuf,
        /// Wipe an existing store first.
        #[arg(long)]
        force: bool,
    },
    /// Rebuild balances from the journal and print the state hash.
    Replay {
        /// A store directory or a journal file.
        #[arg(env = "STORE_PATH", default_value = "cardpay-store")]
        path: PathBuf,
        /// Replay only the first N records.
        #[arg(long)]
        upto: Option<u64>,
    },
    /// Show an account's balance and recent transactions.
    Inspect {
        #[arg(long, env = "STORE_PATH", default_value = "cardpay-store")]
        store: PathBuf,
        account: String,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Run one transaction against a live server with the seeded card.
    Demo {
        /// potc, a2a, withdraw or deposit
        kind: String,
        /// Rupees, e.g. 100 or 100.50
        amount: String,
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
        /// Store holding the card files (its cards/ directory).
        #[arg(long, env = "STORE_PATH", default_value = "cardpay-store")]
        store: PathBuf,
        #[arg(long, default_value = cardpay_core::demo::CARDHOLDER_CARD)]
        card: String,
        #[arg(long, default_value = cardpay_core::demo::CARDHOLDER_PIN)]
        pin: String,
        /// Recipient for potc / a2a, target account for deposit.
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value = cardpay_core::demo::MERCHANT_USERNAME)]
        username: String,
        #[arg(long, default_value = cardpay_core::demo::MERCHANT_PASSWORD)]
        password: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain, skipping causes the outer message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Serve {
            config,
            port,
            store,
            host,
        } => {
            let mut cfg = match &config {
                Some(path) => Config::from_file(path)?,
                None => Config::default(),
            };
            cfg.apply_env(|k| std::env::var(k).ok())?;
            if let Some(port) = port {
                cfg.port = port;
            }
            if let Some(store) = store {
                cfg.store = store;
            }
            serve(cfg, host)?;
        }
        Command::Seed { store, force } => store::seed(&store, force)?,
        Command::Replay { path, upto } => store::replay(&path, upto)?,
        Command::Inspect { store, account, limit } => store::inspect(&store, &AccountId::new(account), limit)?,
        Command::Demo {
            kind,
            amount,
            server,
            store,
            card,
            pin,
            to,
            username,
            password,
        } => {
            let kind = WorkflowKind::from_slug(&kind)
                .with_context(|| format!("unknown transaction kind {kind:?} (potc, a2a, withdraw, deposit)"))?;
            let amount = Money::parse_wire(&amount).map_err(|e| anyhow::anyhow!("bad amount {amount:?}: {e}"))?;
            let demo = client::Demo {
                server,
                username,
                password,
                card_dir: store.join(store::CARDS_DIR),
                card: card.into(),
                pin,
                kind,
                amount,
                to: to.map(AccountId::new),
            };
            let outcome = demo.run()?;
            print!("{}", outcome.transcript);
            if !outcome.succeeded {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(config: Config, host: IpAddr) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = BoundServer::bind(&config, host, Arc::new(SystemClock)).await?;
        println!("listening on {}", server.local_addr());
        server.run(shutdown_signal()).await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
