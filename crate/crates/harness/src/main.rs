use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use awareness_harness::backend::{bind, serve_backend, BackendOptions};
use awareness_harness::config::run_files;
use awareness_harness::gateway::serve_gateway;
use awareness_harness::live::{run_live, LiveHandle, MessageSource};
use awareness_harness::pipeline::{
    cmd_distinguish, cmd_evaldet, cmd_render, cmd_specgen, cmd_train, cmd_validate_offline, load_model,
};
use awareness_harness::{HarnessConfig, HarnessError};
use clap::{Parser, Subcommand};
use tokio::sync::watch;

#[derive(Debug, Parser)]
#[command(name = "awareness", version, about = "Awareness-based GUI assurance testbed")]
struct Cli {
    /// JSON config file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root for every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate the labeled spec dataset and its train/test split.
    Specgen,
    /// Crop detector templates from the training split.
    Train,
    /// Evaluate the detector on the held-out split.
    Evaldet,
    /// Stream the scenario as NDJSON over TCP.
    Serve {
        /// Hold the stream until a client connects.
        #[arg(long)]
        wait_for_client: bool,
    },
    /// Render a message stream into a frame log.
    Render {
        /// Message log to render instead of generating the scenario.
        #[arg(long)]
        messages: Option<PathBuf>,
    },
    /// Validate a logged run offline. Exits 0 exactly when no frame fails.
    Validate {
        /// Frame log directory (default: <out>/run).
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Message log (default: messages.ndjson in the frame log directory).
        #[arg(long)]
        messages: Option<PathBuf>,
    },
    /// Run the self-validating GUI with its gateway.
    Live {
        /// Read messages from this backend instead of generating them.
        #[arg(long)]
        backend: Option<SocketAddr>,
        /// Do not start the HTTP/WebSocket gateway.
        #[arg(long)]
        no_gateway: bool,
    },
    /// Play the distinguisher game on a verdict log.
    Distinguish {
        /// Verdict log (default: <out>/run/verdicts.ndjson).
        #[arg(long)]
        verdicts: Option<PathBuf>,
        /// Verdict log the likelihood distinguisher is calibrated on
        /// (default: the suite itself).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<HarnessConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), HarnessError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

async fn shutdown_signal() -> watch::Receiver<bool> {
    let (tx, rx) = watch::channel(false);
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            tracing::info!("shutting down");
            let _ = tx.send(true);
        }
        // keep the channel open so receivers never see a spurious close
        std::future::pending::<()>().await;
    });
    rx
}

async fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    let cfg = load_config(&cli)?;
    let layout = cfg.layout();
    match cli.cmd {
        Cmd::Specgen => {
            let split = cmd_specgen(&cfg)?;
            println!("{} train, {} test images under {}", split.train.len(), split.test.len(), layout.spec_dir().display());
        }
        Cmd::Train => {
            let ts = cmd_train(&cfg)?;
            println!("{} templates saved to {}", ts.len(), layout.model_dir().display());
        }
        Cmd::Evaldet => {
            let report = cmd_evaldet(&cfg)?;
            print_json(&report)?;
            if !report.pass {
                eprintln!("holdout accuracy below floor {}", report.accuracy_floor);
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Serve { wait_for_client } => {
            let listener = bind(&cfg.net.host, cfg.net.backend_port).await?;
            let log = layout.run_dir().join(run_files::MESSAGES);
            let backend = serve_backend(&cfg, listener, &log, BackendOptions { wait_for_client }).await?;
            tracing::info!(addr = %backend.local_addr(), "backend streaming");
            backend.stop_on(shutdown_signal().await);
            print_json(&backend.finished().await?)?;
        }
        Cmd::Render { messages } => {
            let summary = cmd_render(&cfg, &layout.run_dir(), messages.as_deref())?;
            print_json(&summary)?;
        }
        Cmd::Validate { frames, messages } => {
            let frames = frames.unwrap_or_else(|| layout.run_dir());
            let messages = messages.unwrap_or_else(|| frames.join(run_files::MESSAGES));
            let outcome = cmd_validate_offline(&cfg, &frames, &messages, &frames)?;
            for e in &outcome.report.fault_episodes {
                println!(
                    "fault episode: frames {}..={} ts {}..={} ms ({} frames)",
                    e.start_frame_seq, e.end_frame_seq, e.start_ts_ms, e.end_ts_ms, e.frames
                );
            }
            println!(
                "n={} failures={} epsilon_hat={} ci95=[{:.6}, {:.6}]",
                outcome.report.n, outcome.report.failures, outcome.report.epsilon_hat, outcome.report.ci95.0, outcome.report.ci95.1
            );
            return Ok(ExitCode::from(outcome.exit_code() as u8));
        }
        Cmd::Live { backend, no_gateway } => {
            let ts = Arc::new(load_model(&cfg)?);
            let handle = LiveHandle::new(cfg.fault.clone());
            let stop = shutdown_signal().await;
            let gateway = if no_gateway {
                None
            } else {
                let listener = bind(&cfg.net.host, cfg.net.gateway_port).await?;
                tracing::info!(addr = %listener.local_addr()?, "gateway listening");
                Some(tokio::spawn(serve_gateway(listener, handle.clone(), stop.clone())))
            };
            let source = backend.map(MessageSource::Backend).unwrap_or(MessageSource::InProcess);
            let outcome = run_live(cfg.clone(), ts, handle.clone(), source, layout.live_dir(), stop).await?;
            println!(
                "{} messages, {} frames, {} checks, {} failures",
                outcome.messages,
                outcome.render.frames,
                outcome.verdicts.len(),
                outcome.verdicts.iter().filter(|v| !v.pass).count()
            );
            if let Some(g) = gateway {
                g.abort();
            }
        }
        Cmd::Distinguish { verdicts, calibration } => {
            let verdicts = verdicts.unwrap_or_else(|| layout.run_dir().join(run_files::VERDICTS));
            let report = cmd_distinguish(&cfg, &verdicts, calibration.as_deref(), &layout.distinguish_report())?;
            print_json(&report)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
