//! The GUI under test.
//!
//! The display has two layers with their own change detection, like view
//! components bound to separate subscriptions: the map layer (runtime tiles,
//! waypoints, drone marker) and the HUD layer (the warning glyph). Each
//! layer re-renders only when its part of the render key changes, which is
//! where the injectable faults live.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canonical::canonicalize;
use crate::model::{ModelMessage, WarningMode};
use crate::raster::{
    draw_disc, draw_drone_marker, draw_glyph, encode_png, tile_background_at, world_px, GlyphClass, Image,
    RasterError, Rect, TileStyle, TileStyleKind, WAYPOINT_ORANGE,
};
use crate::scenario::tick_ts_ms;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("nothing has been rendered yet")]
    NoMessage,
    #[error("message seq {seq} is not after {last}")]
    StaleMessage { seq: u64, last: u64 },
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub viewport: (u32, u32),
    pub meters_per_pixel: f64,
    pub hud_anchor: Rect,
    /// Pose resolution of the map layer's change detection.
    pub pose_grid_m: f64,
    pub world_seed: u64,
    pub marker_px: u32,
    pub waypoint_radius_px: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            viewport: (1024, 768),
            meters_per_pixel: 2.0,
            hud_anchor: Rect::new(1024 - 16 - 64, 16, 64, 64),
            pose_grid_m: 100.0,
            world_seed: 1,
            marker_px: 40,
            waypoint_radius_px: 5.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let (w, h) = self.viewport;
        if w == 0 || h == 0 {
            return Err(RenderError::InvalidConfig(format!("viewport {w}x{h}")));
        }
        let a = self.hud_anchor;
        if a.w == 0 || a.h == 0 || a.x < 0 || a.y < 0 || a.right() > w as i64 || a.bottom() > h as i64 {
            return Err(RenderError::InvalidConfig(format!("hud_anchor {a:?} outside {w}x{h}")));
        }
        if self.marker_px == 0 || self.marker_px > w.min(h) {
            return Err(RenderError::InvalidConfig(format!("marker_px {}", self.marker_px)));
        }
        for (name, v) in [("meters_per_pixel", self.meters_per_pixel), ("pose_grid_m", self.pose_grid_m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RenderError::InvalidConfig(format!("{name} {v}")));
            }
        }
        Ok(())
    }

    pub fn tile_style(&self) -> TileStyle {
        TileStyle { kind: TileStyleKind::Runtime, world_seed: self.world_seed }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    #[default]
    None,
    /// Caution and danger share one HUD key, so 1↔2 changes are missed.
    TransitionBlind,
    /// The HUD key ignores the warning mode altogether.
    StaleSubscription,
    /// No re-rendering at all while active.
    Freeze,
}

impl FaultMode {
    pub const ALL: [FaultMode; 4] =
        [FaultMode::None, FaultMode::TransitionBlind, FaultMode::StaleSubscription, FaultMode::Freeze];

    pub fn name(self) -> &'static str {
        match self {
            FaultMode::None => "none",
            FaultMode::TransitionBlind => "transition_blind",
            FaultMode::StaleSubscription => "stale_subscription",
            FaultMode::Freeze => "freeze",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// One fault, active inside `[start, end)` simulation milliseconds, or
/// always when no window is given.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultConfig {
    pub mode: FaultMode,
    pub active_window: Option<(u64, u64)>,
}

impl FaultConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn windowed(mode: FaultMode, start_ms: u64, end_ms: u64) -> Self {
        Self { mode, active_window: Some((start_ms, end_ms)) }
    }

    /// The fault mode in effect at `now_ms`.
    pub fn effective(&self, now_ms: u64) -> FaultMode {
        match self.active_window {
            Some((s, e)) if !(s..e).contains(&now_ms) => FaultMode::None,
            _ => self.mode,
        }
    }

    pub fn is_active(&self, now_ms: u64) -> bool {
        self.effective(now_ms) != FaultMode::None
    }
}

/// Map-layer key: pose cell and heading sector.
fn map_key(msg: &ModelMessage, cfg: &RenderConfig) -> Value {
    let (x, y) = msg.drone.pos.world_m();
    json!([
        (x / cfg.pose_grid_m).floor() as i64,
        (y / cfg.pose_grid_m).floor() as i64,
        heading_sector(msg.drone.heading_deg)
    ])
}

/// HUD-layer key under the given fault. Each fault spells its key
/// differently, so switching faults always refreshes the HUD.
fn hud_key(msg: &ModelMessage, fault: FaultMode) -> Value {
    match (fault, msg.warning_mode) {
        (FaultMode::TransitionBlind, WarningMode::Nominal) => json!("0"),
        (FaultMode::TransitionBlind, _) => json!("W"),
        (FaultMode::StaleSubscription, _) => Value::Null,
        _ => json!(msg.warning_mode.as_u8()),
    }
}

pub fn heading_sector(heading_deg: f64) -> u8 {
    ((heading_deg.rem_euclid(360.0) / 45.0).round() as u64 % 8) as u8
}

/// The change-detection key of `msg` under `fault` at `now_ms`.
pub fn render_key(msg: &ModelMessage, fault: &FaultConfig, now_ms: u64, cfg: &RenderConfig) -> String {
    let key = json!({ "hud": hud_key(msg, fault.effective(now_ms)), "map": map_key(msg, cfg) });
    canonicalize(&key).expect("keys hold only integers and strings").into_string()
}

/// What needs redrawing after ingesting messages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dirty {
    pub map: bool,
    pub hud: bool,
}

impl Dirty {
    pub fn any(self) -> bool {
        self.map || self.hud
    }
}

/// Owned by the render loop; see module docs.
#[derive(Debug, Clone)]
pub struct RenderState {
    cfg: RenderConfig,
    last_message: Option<ModelMessage>,
    map_msg: Option<ModelMessage>,
    hud_msg: Option<ModelMessage>,
    map_key: Option<Value>,
    hud_key: Option<Value>,
    dropped: u64,
}

impl RenderState {
    pub fn new(cfg: RenderConfig) -> Result<Self, RenderError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            last_message: None,
            map_msg: None,
            hud_msg: None,
            map_key: None,
            hud_key: None,
            dropped: 0,
        })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.cfg
    }

    pub fn last_message(&self) -> Option<&ModelMessage> {
        self.last_message.as_ref()
    }

    /// Message currently shown by the HUD layer.
    pub fn hud_message(&self) -> Option<&ModelMessage> {
        self.hud_msg.as_ref()
    }

    /// Message currently shown by the map layer.
    pub fn map_message(&self) -> Option<&ModelMessage> {
        self.map_msg.as_ref()
    }

    /// Out-of-order messages dropped so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Records `msg` and reports whether the display would change.
    pub fn ingest(&mut self, msg: ModelMessage, fault: &FaultConfig, now_ms: u64) -> Result<bool, RenderError> {
        if let Some(last) = &self.last_message {
            if msg.seq <= last.seq {
                self.dropped += 1;
                return Err(RenderError::StaleMessage { seq: msg.seq, last: last.seq });
            }
        }
        self.last_message = Some(msg);
        Ok(self.dirty(fault, now_ms).any())
    }

    /// Layers whose key differs for the latest message, or nothing while a
    /// freeze is active.
    pub fn dirty(&self, fault: &FaultConfig, now_ms: u64) -> Dirty {
        let Some(msg) = &self.last_message else { return Dirty::default() };
        let mode = fault.effective(now_ms);
        if mode == FaultMode::Freeze {
            return Dirty::default();
        }
        Dirty {
            map: self.map_key.as_ref() != Some(&map_key(msg, &self.cfg)),
            hud: self.hud_key.as_ref() != Some(&hud_key(msg, mode)),
        }
    }

    /// Marks the latest message as rendered in the given layers.
    pub fn commit(&mut self, dirty: Dirty, fault: &FaultConfig, now_ms: u64) {
        let Some(msg) = &self.last_message else { return };
        if dirty.map {
            self.map_key = Some(map_key(msg, &self.cfg));
            self.map_msg = Some(msg.clone());
        }
        if dirty.hud {
            self.hud_key = Some(hud_key(msg, fault.effective(now_ms)));
            self.hud_msg = Some(msg.clone());
        }
    }

    /// Composes the current display.
    pub fn render(&self) -> Result<Image, RenderError> {
        let (Some(map), Some(hud)) = (&self.map_msg, &self.hud_msg) else {
            return Err(RenderError::NoMessage);
        };
        let mut img = render_map_layer(map, &self.cfg)?;
        draw_hud(&mut img, hud.warning_mode, &self.cfg)?;
        Ok(img)
    }
}

/// Runtime tiles centered on the drone, waypoints, and the drone marker.
pub fn render_map_layer(msg: &ModelMessage, cfg: &RenderConfig) -> Result<Image, RenderError> {
    let (w, h) = cfg.viewport;
    let (cx, cy) = world_px(&msg.drone.pos, cfg.meters_per_pixel);
    let origin = (cx - (w / 2) as i64, cy - (h / 2) as i64);
    let mut img = tile_background_at(cfg.tile_style(), origin, (w, h));
    let r = cfg.waypoint_radius_px;
    for wp in &msg.waypoints {
        let (px, py) = world_px(wp, cfg.meters_per_pixel);
        let (x, y) = ((px - origin.0) as f64 + 0.5, (py - origin.1) as f64 + 0.5);
        if x > -r && y > -r && x < w as f64 + r && y < h as f64 + r {
            draw_disc(&mut img, x, y, r, WAYPOINT_ORANGE);
        }
    }
    let m = cfg.marker_px;
    let marker = Rect::new(((w - m) / 2) as i64, ((h - m) / 2) as i64, m, m);
    draw_drone_marker(&mut img, marker, heading_sector(msg.drone.heading_deg))?;
    Ok(img)
}

/// Warning glyph for `mode` at the HUD anchor; nominal draws nothing.
pub fn draw_hud(img: &mut Image, mode: WarningMode, cfg: &RenderConfig) -> Result<(), RenderError> {
    let cls = match mode {
        WarningMode::Nominal => return Ok(()),
        WarningMode::Caution => GlyphClass::Caution,
        WarningMode::Danger => GlyphClass::Danger,
    };
    draw_glyph(img, cls, cfg.hud_anchor)?;
    Ok(())
}

/// The display a correct GUI shows for `msg`: a pure function of the
/// message and the config.
pub fn render_message(msg: &ModelMessage, cfg: &RenderConfig) -> Result<Image, RenderError> {
    let mut img = render_map_layer(msg, cfg)?;
    draw_hud(&mut img, msg.warning_mode, cfg)?;
    Ok(img)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLogEntry {
    pub seq: u64,
    pub ts_ms: u64,
    /// Relative to the frame log directory.
    pub path: String,
    pub width: u32,
    pub height: u32,
    /// Latest message drawn into either layer.
    pub source_msg_seq: u64,
    /// Message whose warning mode the HUD shows.
    pub hud_msg_seq: u64,
}

pub fn frame_file_name(seq: u64) -> String {
    format!("frames/{seq:06}.png")
}

/// One logged tick of the render loop.
#[derive(Debug, Clone)]
pub struct TickFrame {
    pub entry: FrameLogEntry,
    pub frame: Arc<Image>,
    /// False when the frame repeats the previous one unchanged.
    pub fresh: bool,
}

/// Receives every logged frame in order.
pub trait FrameSink {
    fn put(&mut self, tick: &TickFrame) -> Result<(), RenderError>;

    fn finish(&mut self) -> Result<(), RenderError> {
        Ok(())
    }
}

/// Keeps frames in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub frames: Vec<TickFrame>,
}

impl FrameSink for MemorySink {
    fn put(&mut self, tick: &TickFrame) -> Result<(), RenderError> {
        self.frames.push(tick.clone());
        Ok(())
    }
}

/// Writes `frames/NNNNNN.png` and `frames.ndjson` under a directory.
/// Unchanged frames are hard links to the previous file when the
/// filesystem allows it.
pub struct DirSink {
    dir: PathBuf,
    manifest: BufWriter<File>,
    previous: Option<PathBuf>,
}

impl DirSink {
    pub fn create(dir: &Path) -> Result<Self, RenderError> {
        std::fs::create_dir_all(dir.join("frames"))?;
        let manifest = BufWriter::new(File::create(frames_manifest_path(dir))?);
        Ok(Self { dir: dir.to_path_buf(), manifest, previous: None })
    }
}

impl FrameSink for DirSink {
    fn put(&mut self, tick: &TickFrame) -> Result<(), RenderError> {
        let path = self.dir.join(&tick.entry.path);
        let linked = match (&self.previous, tick.fresh) {
            (Some(prev), false) => std::fs::hard_link(prev, &path).or_else(|_| std::fs::copy(prev, &path).map(|_| ())).is_ok(),
            _ => false,
        };
        if !linked {
            std::fs::write(&path, encode_png(&tick.frame)?)?;
        }
        writeln!(self.manifest, "{}", serde_json::to_string(&tick.entry).expect("entries serialize"))?;
        self.previous = Some(path);
        Ok(())
    }

    fn finish(&mut self) -> Result<(), RenderError> {
        self.manifest.flush()?;
        Ok(())
    }
}

pub fn frames_manifest_path(dir: &Path) -> PathBuf {
    dir.join("frames.ndjson")
}

pub fn read_frame_log(dir: &Path) -> Result<Vec<FrameLogEntry>, RenderError> {
    let text = std::fs::read_to_string(frames_manifest_path(dir))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                RenderError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("frames.ndjson line {}: {e}", i + 1)))
            })
        })
        .collect()
}

/// Fixed-rate render loop on the simulation clock. Frame tick `k` happens
/// at `round(k × 1000 / fps)` ms and sees every message with `ts_ms` up to
/// and including that time.
pub struct RenderLoop {
    state: RenderState,
    fps: f64,
    tick: u64,
    frame_seq: u64,
    current: Option<Arc<Image>>,
    map_layer: Option<Arc<Image>>,
    source_msg_seq: u64,
    pending: Vec<ModelMessage>,
}

impl RenderLoop {
    pub fn new(cfg: RenderConfig, fps: f64) -> Result<Self, RenderError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(RenderError::InvalidConfig(format!("fps {fps}")));
        }
        Ok(Self {
            state: RenderState::new(cfg)?,
            fps,
            tick: 0,
            frame_seq: 0,
            current: None,
            map_layer: None,
            source_msg_seq: 0,
            pending: Vec::new(),
        })
    }

    pub fn state(&self) -> &RenderState {
        &self.state
    }

    pub fn next_tick_ms(&self) -> u64 {
        tick_ts_ms(self.tick, self.fps)
    }

    /// Queues a message for the first tick at or after its timestamp.
    pub fn push(&mut self, msg: ModelMessage) {
        self.pending.push(msg);
    }

    /// Runs the next tick. Returns the logged frame, or `None` while no
    /// message has been rendered yet.
    pub fn step(&mut self, fault: &FaultConfig) -> Result<Option<TickFrame>, RenderError> {
        let now = self.next_tick_ms();
        self.tick += 1;
        let due: Vec<ModelMessage>;
        (due, self.pending) = std::mem::take(&mut self.pending).into_iter().partition(|m| m.ts_ms <= now);
        for msg in due {
            // out-of-order messages are counted by the state and skipped
            let _ = self.state.ingest(msg, fault, now);
        }
        let dirty = self.state.dirty(fault, now);
        let mut fresh = false;
        if dirty.any() {
            self.state.commit(dirty, fault, now);
            let cfg = self.state.config();
            if dirty.map || self.map_layer.is_none() {
                let map_msg = self.state.map_message().expect("committed");
                self.map_layer = Some(Arc::new(render_map_layer(map_msg, cfg)?));
            }
            let mut img = Image::clone(self.map_layer.as_ref().expect("map layer rendered"));
            draw_hud(&mut img, self.state.hud_message().expect("committed").warning_mode, cfg)?;
            self.current = Some(Arc::new(img));
            self.source_msg_seq = self.state.last_message().expect("committed").seq;
            fresh = true;
        }
        let Some(frame) = &self.current else { return Ok(None) };
        let entry = FrameLogEntry {
            seq: self.frame_seq,
            ts_ms: now,
            path: frame_file_name(self.frame_seq),
            width: frame.width(),
            height: frame.height(),
            source_msg_seq: self.source_msg_seq,
            hud_msg_seq: self.state.hud_message().expect("rendered").seq,
        };
        self.frame_seq += 1;
        Ok(Some(TickFrame { entry, frame: Arc::clone(frame), fresh }))
    }
}

/// Summary of an offline render run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub frames: u64,
    pub renders: u64,
    pub dropped_messages: u64,
}

/// Replays `msgs` through a [`RenderLoop`] until `duration_ms`, handing every
/// logged frame to `sink`. Returns the frame log.
pub fn run_render_loop<I>(
    msgs: I,
    cfg: &RenderConfig,
    fps: f64,
    duration_ms: u64,
    fault: &FaultConfig,
    sink: &mut dyn FrameSink,
) -> Result<(Vec<FrameLogEntry>, RenderSummary), RenderError>
where
    I: IntoIterator<Item = ModelMessage>,
{
    let mut lp = RenderLoop::new(cfg.clone(), fps)?;
    let mut log = Vec::new();
    let mut summary = RenderSummary::default();
    let mut emit = |lp: &mut RenderLoop, log: &mut Vec<FrameLogEntry>| -> Result<(), RenderError> {
        if let Some(tick) = lp.step(fault)? {
            sink.put(&tick)?;
            summary.renders += tick.fresh as u64;
            log.push(tick.entry);
        }
        Ok(())
    };
    for msg in msgs {
        while lp.next_tick_ms() < msg.ts_ms.min(duration_ms) {
            emit(&mut lp, &mut log)?;
        }
        lp.push(msg);
    }
    while lp.next_tick_ms() < duration_ms {
        emit(&mut lp, &mut log)?;
    }
    sink.finish()?;
    summary.frames = log.len() as u64;
    summary.dropped_messages = lp.state().dropped();
    Ok((log, summary))
}
