//! The self-validating live loop. Messages drive a [`RenderLoop`] on the
//! simulation clock; at `validate_hz` the current frame is interpreted
//! before any overlay and compared with the latest received message. A
//! failing check raises the shame indicator on streamed frames.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use awareness_core::detector::TemplateSet;
use awareness_core::interpreter::{frame_digest, AffordanceMapping};
use awareness_core::raster::{draw_glyph, encode_png, GlyphClass, Image, Rect};
use awareness_core::renderer::{
    DirSink, FaultConfig, FaultMode, FrameLogEntry, FrameSink, RenderLoop, RenderSummary,
};
use awareness_core::scenario::{gen_scenario, tick_ts_ms};
use awareness_core::validator::{estimate_awareness, FaultEpisode, PairedSample, Validator, VerdictRecord};
use awareness_core::{CanonicalJson, ModelMessage};
use base64::Engine;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::time::Instant;

use crate::backend::{connect, read_messages};
use crate::config::run_files;
use crate::{HarnessConfig, HarnessError};

/// Side of the shame badge and its margin from the frame corner.
pub const SHAME_SIZE: u32 = 64;
pub const SHAME_MARGIN: u32 = 16;

/// Streamed ticks a slow observer may fall behind before losing the oldest.
const TICK_BUFFER: usize = 16;

/// Picks validation frames: the first logged frame at or after each
/// validation tick `round(j × 1000 / hz)`.
#[derive(Debug, Clone)]
pub struct ValidationClock {
    hz: f64,
    next: u64,
}

impl ValidationClock {
    pub fn new(hz: f64) -> Self {
        Self { hz, next: 0 }
    }

    /// Whether the frame at `frame_ts` is validated. Call once per logged
    /// frame, in order.
    pub fn due(&mut self, frame_ts: u64) -> bool {
        if frame_ts < tick_ts_ms(self.next, self.hz) {
            return false;
        }
        while tick_ts_ms(self.next, self.hz) <= frame_ts {
            self.next += 1;
        }
        true
    }
}

/// The frames a live run validates, selected from its frame log.
pub fn select_validation_frames(frames: &[FrameLogEntry], validate_hz: f64) -> Vec<FrameLogEntry> {
    let mut clock = ValidationClock::new(validate_hz);
    frames.iter().filter(|f| clock.due(f.ts_ms)).cloned().collect()
}

/// Where the bottom-left shame badge goes on a `width × height` frame.
pub fn shame_rect(width: u32, height: u32) -> Rect {
    Rect::new(
        SHAME_MARGIN as i64,
        height as i64 - (SHAME_MARGIN + SHAME_SIZE) as i64,
        SHAME_SIZE.min(width),
        SHAME_SIZE.min(height),
    )
}

/// Copy of `frame` with the shame badge drawn when `shame` is set.
pub fn overlay(frame: &Image, shame: bool) -> Result<Image, HarnessError> {
    let mut img = frame.clone();
    if shame {
        let r = shame_rect(img.width(), img.height());
        draw_glyph(&mut img, GlyphClass::Shame, r)?;
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub frames: u64,
    pub messages: u64,
    pub checks: u64,
    pub failures: u64,
}

/// Snapshot served by `GET /status`. `shame` is set exactly when the last
/// check failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LiveStatus {
    pub latest_backend: Option<CanonicalJson>,
    pub latest_perceived: Option<CanonicalJson>,
    pub shame: bool,
    pub last_check_ts_ms: Option<u64>,
    /// Simulation time of the latest rendered tick.
    pub sim_ms: u64,
    pub fault: FaultConfig,
    pub fault_active: bool,
    pub counters: Counters,
    pub episodes: Vec<FaultEpisode>,
    pub finished: bool,
}

/// One validation tick as streamed on `/live`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveTick {
    /// Base64 PNG, with the shame badge when `shame` is set.
    pub frame: String,
    pub backend: CanonicalJson,
    pub perceived: CanonicalJson,
    pub shame: bool,
    pub ts_ms: u64,
}

/// Shared between the live loop and the gateway.
#[derive(Clone)]
pub struct LiveHandle {
    status: Arc<RwLock<Arc<LiveStatus>>>,
    fault: Arc<watch::Sender<FaultConfig>>,
    ticks: broadcast::Sender<Arc<LiveTick>>,
    sim_ms: Arc<AtomicU64>,
    done: Arc<watch::Sender<bool>>,
}

impl LiveHandle {
    pub fn new(initial_fault: FaultConfig) -> Self {
        let status = LiveStatus { fault: initial_fault.clone(), fault_active: initial_fault.is_active(0), ..Default::default() };
        Self {
            status: Arc::new(RwLock::new(Arc::new(status))),
            fault: Arc::new(watch::channel(initial_fault).0),
            ticks: broadcast::channel(TICK_BUFFER).0,
            sim_ms: Arc::new(AtomicU64::new(0)),
            done: Arc::new(watch::channel(false).0),
        }
    }

    pub fn status(&self) -> Arc<LiveStatus> {
        Arc::clone(&self.status.read().expect("status lock"))
    }

    fn update(&self, f: impl FnOnce(&mut LiveStatus)) {
        let mut guard = self.status.write().expect("status lock");
        let mut next = LiveStatus::clone(&guard);
        f(&mut next);
        *guard = Arc::new(next);
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<LiveTick>> {
        self.ticks.subscribe()
    }

    /// Fires once the live loop has ended and no more ticks will come.
    pub fn done(&self) -> watch::Receiver<bool> {
        self.done.subscribe()
    }

    pub fn sim_ms(&self) -> u64 {
        self.sim_ms.load(Ordering::Acquire)
    }

    /// Activates `mode` from the current simulation time for `duration_ms`
    /// (indefinitely when `None`). Mode `none` clears any fault.
    pub fn inject_fault(&self, mode: FaultMode, duration_ms: Option<u64>) -> FaultConfig {
        let now = self.sim_ms();
        let fault = match (mode, duration_ms) {
            (FaultMode::None, _) => FaultConfig::none(),
            (mode, Some(d)) => FaultConfig::windowed(mode, now, now.saturating_add(d)),
            (mode, None) => FaultConfig { mode, active_window: None },
        };
        self.fault.send_replace(fault.clone());
        self.update(|s| {
            s.fault_active = fault.is_active(now);
            s.fault = fault.clone();
        });
        fault
    }

    fn fault_receiver(&self) -> watch::Receiver<FaultConfig> {
        self.fault.subscribe()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageSource {
    /// Generate and pace the scenario inside this process.
    InProcess,
    /// Read from a running backend service.
    Backend(SocketAddr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveOutcome {
    pub messages: u64,
    #[serde(flatten)]
    pub render: RenderSummary,
    pub verdicts: Vec<VerdictRecord>,
}

struct Job {
    entry: FrameLogEntry,
    frame: Arc<Image>,
    message: ModelMessage,
    alternates: Vec<ModelMessage>,
}

/// Runs the live loop until the message stream ends or `stop` fires, writing
/// the frame log, `messages.ndjson` and `live_verdicts.ndjson` to `run_dir`.
pub async fn run_live(
    cfg: HarnessConfig,
    templates: Arc<TemplateSet>,
    handle: LiveHandle,
    source: MessageSource,
    run_dir: PathBuf,
    mut stop: watch::Receiver<bool>,
) -> Result<LiveOutcome, HarnessError> {
    std::fs::create_dir_all(&run_dir)?;
    let (msg_tx, msg_rx) = mpsc::unbounded_channel::<ModelMessage>();
    let source_cfg = cfg.clone();
    let feeder = tokio::spawn(async move {
        tokio::select! {
            r = feed(source, &source_cfg, msg_tx) => r,
            _ = stop.wait_for(|s| *s) => Ok(()),
        }
    });

    let (job_tx, job_rx) = std::sync::mpsc::channel::<Job>();
    let render = {
        let (cfg, handle, dir) = (cfg.clone(), handle.clone(), run_dir.clone());
        tokio::task::spawn_blocking(move || render_thread(&cfg, &handle, &dir, msg_rx, job_tx))
    };
    let validate = {
        let (cfg, handle, dir) = (cfg.clone(), handle.clone(), run_dir.clone());
        tokio::task::spawn_blocking(move || validate_thread(&cfg, &templates, &handle, &dir, job_rx))
    };

    let join = |e: tokio::task::JoinError| HarnessError::Task(e.to_string());
    let fed = feeder.await.map_err(join)?;
    let rendered = render.await.map_err(join)?;
    let verdicts = validate.await.map_err(join)?;
    handle.update(|s| s.finished = true);
    handle.done.send_replace(true);
    fed?;
    let (messages, render) = rendered?;
    Ok(LiveOutcome { messages, render, verdicts: verdicts? })
}

async fn feed(source: MessageSource, cfg: &HarnessConfig, tx: mpsc::UnboundedSender<ModelMessage>) -> Result<(), HarnessError> {
    match source {
        MessageSource::InProcess => {
            let start = Instant::now();
            for msg in gen_scenario(&cfg.scenario)? {
                let due = start + Duration::from_secs_f64(msg.ts_ms as f64 / 1000.0 / cfg.rates.time_scale);
                tokio::time::sleep_until(due).await;
                if tx.send(msg).is_err() {
                    break;
                }
            }
            Ok(())
        }
        MessageSource::Backend(addr) => {
            let stream = connect(addr, 20, Duration::from_millis(250)).await?;
            read_messages(stream, tx).await.map(|_| ())
        }
    }
}

fn render_thread(
    cfg: &HarnessConfig,
    handle: &LiveHandle,
    run_dir: &Path,
    mut rx: mpsc::UnboundedReceiver<ModelMessage>,
    jobs: std::sync::mpsc::Sender<Job>,
) -> Result<(u64, RenderSummary), HarnessError> {
    let fault_rx = handle.fault_receiver();
    let duration = cfg.duration_ms();
    let mut lp = RenderLoop::new(cfg.render.clone(), cfg.rates.render_fps)?;
    let mut sink = DirSink::create(run_dir)?;
    let mut log = BufWriter::new(File::create(run_dir.join(run_files::MESSAGES))?);
    let mut clock = ValidationClock::new(cfg.rates.validate_hz);
    let mut recent: VecDeque<ModelMessage> = VecDeque::new();
    let mut summary = RenderSummary::default();
    let mut received = 0u64;

    let mut tick = |lp: &mut RenderLoop, recent: &mut VecDeque<ModelMessage>| -> Result<(), HarnessError> {
        let now = lp.next_tick_ms();
        let fault = fault_rx.borrow().clone();
        handle.sim_ms.store(now, Ordering::Release);
        let Some(t) = lp.step(&fault)? else { return Ok(()) };
        sink.put(&t)?;
        summary.frames += 1;
        summary.renders += t.fresh as u64;
        handle.update(|s| {
            s.sim_ms = now;
            s.fault_active = s.fault.is_active(now);
            s.counters.frames += 1;
        });
        if clock.due(t.entry.ts_ms) {
            let message = lp.state().last_message().expect("a frame implies a message").clone();
            let alternates = match cfg.validation.window_ms {
                None => Vec::new(),
                Some(w) => {
                    let from = now.saturating_sub(w);
                    while recent.front().is_some_and(|m| m.ts_ms < from) {
                        recent.pop_front();
                    }
                    recent.iter().filter(|m| m.ts_ms <= now).cloned().collect()
                }
            };
            // a closed validator has already failed and reports its own error
            let _ = jobs.send(Job { entry: t.entry, frame: t.frame, message, alternates });
        }
        Ok(())
    };

    while let Some(msg) = rx.blocking_recv() {
        while lp.next_tick_ms() < msg.ts_ms.min(duration) {
            tick(&mut lp, &mut recent)?;
        }
        writeln!(log, "{}", msg.to_canonical().map_err(|e| HarnessError::Protocol(e.to_string()))?)?;
        received += 1;
        handle.update(|s| s.counters.messages += 1);
        if cfg.validation.window_ms.is_some() {
            recent.push_back(msg.clone());
        }
        lp.push(msg);
    }
    while lp.next_tick_ms() < duration {
        tick(&mut lp, &mut recent)?;
    }
    log.flush()?;
    sink.finish()?;
    summary.dropped_messages = lp.state().dropped();
    Ok((received, summary))
}

fn validate_thread(
    cfg: &HarnessConfig,
    templates: &TemplateSet,
    handle: &LiveHandle,
    run_dir: &Path,
    jobs: std::sync::mpsc::Receiver<Job>,
) -> Result<Vec<VerdictRecord>, HarnessError> {
    let validator = Validator::new(templates, AffordanceMapping::for_templates(templates), cfg.filter.clone());
    let mut log = BufWriter::new(File::create(run_dir.join(run_files::LIVE_VERDICTS))?);
    let mut verdicts = Vec::new();
    for job in jobs {
        let perceived = validator.perceive(frame_digest(&job.frame), || Ok(Arc::clone(&job.frame)))?;
        let sample = PairedSample {
            lag_ms: job.entry.ts_ms - job.message.ts_ms,
            frame: job.entry,
            message: job.message,
            alternates: job.alternates,
        };
        let v = validator.judge(&sample, perceived);
        writeln!(log, "{}", serde_json::to_string(&v)?)?;
        log.flush()?;
        let shame = !v.pass;
        let png = encode_png(&overlay(&job.frame, shame)?)?;
        verdicts.push(v.clone());
        let episodes = estimate_awareness(&verdicts)?.fault_episodes;
        handle.update(|s| {
            s.latest_backend = Some(v.actual.clone());
            s.latest_perceived = Some(v.perceived.clone());
            s.shame = shame;
            s.last_check_ts_ms = Some(v.ts_ms);
            s.counters.checks += 1;
            s.counters.failures += shame as u64;
            s.episodes = episodes;
        });
        // no subscribers is fine
        let _ = handle.ticks.send(Arc::new(LiveTick {
            frame: base64::engine::general_purpose::STANDARD.encode(png),
            backend: v.actual,
            perceived: v.perceived,
            shame,
            ts_ms: v.ts_ms,
        }));
    }
    Ok(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(seq: u64, ts_ms: u64) -> FrameLogEntry {
        FrameLogEntry { seq, ts_ms, path: String::new(), width: 1, height: 1, source_msg_seq: 0, hud_msg_seq: 0 }
    }

    #[test]
    fn one_validation_per_period() {
        let frames: Vec<_> = (0..35).map(|k| entry(k, k * 100)).collect();
        let picked: Vec<u64> = select_validation_frames(&frames, 1.0).iter().map(|f| f.ts_ms).collect();
        assert_eq!(picked, vec![0, 1000, 2000, 3000]);
    }

    #[test]
    fn late_first_frame_is_validated() {
        let frames: Vec<_> = (0..12).map(|k| entry(k, 2300 + k * 100)).collect();
        let picked: Vec<u64> = select_validation_frames(&frames, 1.0).iter().map(|f| f.ts_ms).collect();
        assert_eq!(picked, vec![2300, 3000]);
    }

    #[test]
    fn shame_badge_only_when_asked() {
        let img = Image::new(200, 150, [10, 10, 10]);
        assert_eq!(overlay(&img, false).unwrap(), img);
        let shamed = overlay(&img, true).unwrap();
        let r = shame_rect(200, 150);
        assert_eq!((r.x, r.y), (16, 70));
        assert_ne!(shamed.crop(r).unwrap(), img.crop(r).unwrap());
        let outside = Rect::new(100, 0, 100, 150);
        assert_eq!(shamed.crop(outside).unwrap(), img.crop(outside).unwrap());
    }

    #[test]
    fn status_starts_clean() {
        let h = LiveHandle::new(FaultConfig::none());
        let s = h.status();
        assert!(!s.shame);
        assert_eq!(s.counters, Counters::default());
    }
}
