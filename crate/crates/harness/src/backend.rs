//! The backend service: streams the scenario as NDJSON over TCP, one
//! canonical message per line, and logs every emitted message.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use awareness_core::scenario::gen_scenario;
use awareness_core::ModelMessage;
use serde::{Deserialize, Serialize};
use tokio::fs::File;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::Instant;

use crate::{HarnessConfig, HarnessError};

/// Messages a slow client may fall behind before it is disconnected.
const CLIENT_BUFFER: usize = 1024;

pub async fn bind(host: &str, port: u16) -> Result<TcpListener, HarnessError> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr).await.map_err(|source| HarnessError::Bind { addr, source })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackendOptions {
    /// Hold the stream until the first client connects.
    pub wait_for_client: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSummary {
    pub emitted: u64,
    pub clients: u64,
    /// True when the stream was cut short by shutdown.
    pub interrupted: bool,
}

/// A running backend. Dropping the handle does not stop it; call
/// [`Backend::shutdown`] or await [`Backend::finished`].
pub struct Backend {
    addr: SocketAddr,
    stop: Arc<watch::Sender<bool>>,
    task: JoinHandle<Result<BackendSummary, HarnessError>>,
}

impl Backend {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Shuts the backend down when `signal` turns true.
    pub fn stop_on(&self, mut signal: watch::Receiver<bool>) {
        let stop = Arc::clone(&self.stop);
        tokio::spawn(async move {
            if signal.wait_for(|s| *s).await.is_ok() {
                stop.send_replace(true);
            }
        });
    }

    /// Stops emitting, flushes the log and waits for the service to end.
    pub async fn shutdown(self) -> Result<BackendSummary, HarnessError> {
        let _ = self.stop.send(true);
        self.finished().await
    }

    /// Waits until the whole scenario has been emitted.
    pub async fn finished(self) -> Result<BackendSummary, HarnessError> {
        self.task.await.map_err(|e| HarnessError::Task(e.to_string()))?
    }
}

/// Starts streaming `cfg.scenario` on `listener`, paced at
/// `msg_rate_hz × time_scale`, appending each emitted line to `log_path`.
pub async fn serve_backend(
    cfg: &HarnessConfig,
    listener: TcpListener,
    log_path: &Path,
    opts: BackendOptions,
) -> Result<Backend, HarnessError> {
    let msgs = gen_scenario(&cfg.scenario)?;
    let lines: Vec<Arc<str>> = msgs
        .iter()
        .map(|m| m.to_canonical().map(|c| Arc::<str>::from(format!("{c}\n"))))
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Protocol(e.to_string()))?;
    let timestamps: Vec<u64> = msgs.iter().map(|m| m.ts_ms).collect();
    if let Some(parent) = log_path.parent() {
        tokio::fs::create_dir_all(parent).await?;
    }
    let log = BufWriter::new(File::create(log_path).await?);
    let addr = listener.local_addr()?;
    let (stop, stop_rx) = watch::channel(false);
    let time_scale = cfg.rates.time_scale;
    let task = tokio::spawn(emit(listener, lines, timestamps, time_scale, log, stop_rx, opts));
    Ok(Backend { addr, stop: Arc::new(stop), task })
}

async fn emit(
    listener: TcpListener,
    lines: Vec<Arc<str>>,
    timestamps: Vec<u64>,
    time_scale: f64,
    mut log: BufWriter<File>,
    mut stop: watch::Receiver<bool>,
    opts: BackendOptions,
) -> Result<BackendSummary, HarnessError> {
    let (tx, _) = broadcast::channel::<Arc<str>>(CLIENT_BUFFER);
    let (joined_tx, mut joined_rx) = mpsc::unbounded_channel::<()>();
    let accept_tx = tx.clone();
    let acceptor = tokio::spawn(async move {
        loop {
            let Ok((stream, peer)) = listener.accept().await else { continue };
            // subscribe before the client task starts so no line is missed
            let rx = accept_tx.subscribe();
            let _ = joined_tx.send(());
            tokio::spawn(async move {
                if let Err(e) = feed_client(stream, rx).await {
                    tracing::debug!(%peer, "client dropped: {e}");
                }
            });
        }
    });

    let mut summary = BackendSummary::default();
    if opts.wait_for_client {
        tokio::select! {
            _ = joined_rx.recv() => summary.clients += 1,
            _ = stop.wait_for(|s| *s) => summary.interrupted = true,
        }
    }
    let start = Instant::now();
    if !summary.interrupted {
        for (line, ts) in lines.iter().zip(timestamps) {
            let due = start + Duration::from_secs_f64(ts as f64 / 1000.0 / time_scale);
            tokio::select! {
                _ = tokio::time::sleep_until(due) => {}
                _ = stop.wait_for(|s| *s) => {
                    summary.interrupted = true;
                    break;
                }
            }
            let _ = tx.send(Arc::clone(line));
            log.write_all(line.as_bytes()).await?;
            summary.emitted += 1;
        }
    }
    log.flush().await?;
    acceptor.abort();
    while joined_rx.try_recv().is_ok() {
        summary.clients += 1;
    }
    // dropping the last sender ends every client stream
    drop(tx);
    Ok(summary)
}

async fn feed_client(stream: TcpStream, mut rx: broadcast::Receiver<Arc<str>>) -> std::io::Result<()> {
    let mut w = BufWriter::new(stream);
    loop {
        match rx.recv().await {
            Ok(line) => {
                w.write_all(line.as_bytes()).await?;
                if rx.is_empty() {
                    w.flush().await?;
                }
            }
            Err(broadcast::error::RecvError::Lagged(n)) => {
                return Err(std::io::Error::other(format!("client fell {n} messages behind")));
            }
            Err(broadcast::error::RecvError::Closed) => break,
        }
    }
    w.flush().await?;
    w.into_inner().shutdown().await
}

/// Connects to a backend, retrying up to `attempts` times `delay` apart.
pub async fn connect(addr: SocketAddr, attempts: u32, delay: Duration) -> Result<TcpStream, HarnessError> {
    for i in 0..attempts.max(1) {
        match TcpStream::connect(addr).await {
            Ok(s) => return Ok(s),
            Err(e) => {
                tracing::debug!(%addr, attempt = i + 1, "connect failed: {e}");
                if i + 1 < attempts {
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }
    Err(HarnessError::Connect { addr, attempts })
}

/// Parses the backend stream into `out` until the connection closes or the
/// receiver goes away.
pub async fn read_messages(stream: TcpStream, out: mpsc::UnboundedSender<ModelMessage>) -> Result<u64, HarnessError> {
    let mut lines = BufReader::new(stream).lines();
    let mut n = 0;
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let msg = ModelMessage::from_json(&line).map_err(|e| HarnessError::Protocol(e.to_string()))?;
        if out.send(msg).is_err() {
            break;
        }
        n += 1;
    }
    Ok(n)
}
