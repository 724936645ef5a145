//! Offline awareness validation: pair frames with messages, compare the
//! filtered interpretation of each frame with the filtered message, and
//! estimate the failure rate.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{apply_filter, CanonicalJson, FilterSpec};
use crate::interpreter::{frame_digest, interpret, AffordanceMapping};
use crate::detector::TemplateSet;
use crate::model::ModelMessage;
use crate::raster::{decode_png, Image, RasterError};
use crate::renderer::{FrameLogEntry, TickFrame};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("{log} log is not sorted by ts_ms at entry {index}")]
    UnsortedLog { log: &'static str, index: usize },
    #[error("no samples to validate")]
    EmptyInput,
    #[error("frame {0} not available")]
    MissingFrame(u64),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub frame: FrameLogEntry,
    pub message: ModelMessage,
    pub lag_ms: u64,
    /// Every message with ts in `[frame ts − window, frame ts]` when a
    /// window is requested (this includes `message`).
    pub alternates: Vec<ModelMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub samples: Vec<PairedSample>,
    /// Frames logged before any message.
    pub skipped: usize,
}

fn check_sorted<T>(items: &[T], ts: impl Fn(&T) -> u64, log: &'static str) -> Result<(), ValidatorError> {
    match items.windows(2).position(|w| ts(&w[1]) < ts(&w[0])) {
        Some(i) => Err(ValidatorError::UnsortedLog { log, index: i + 1 }),
        None => Ok(()),
    }
}

/// Pairs each frame with the latest message whose ts does not exceed the
/// frame's. Among messages sharing that ts, the last one logged wins.
pub fn pair_logs(
    frames: &[FrameLogEntry],
    messages: &[ModelMessage],
    window_ms: Option<u64>,
) -> Result<Pairing, ValidatorError> {
    check_sorted(frames, |f| f.ts_ms, "frame")?;
    check_sorted(messages, |m| m.ts_ms, "message")?;
    let mut samples = Vec::with_capacity(frames.len());
    let mut skipped = 0;
    // number of messages with ts <= current frame ts
    let mut upto = 0;
    for f in frames {
        while upto < messages.len() && messages[upto].ts_ms <= f.ts_ms {
            upto += 1;
        }
        if upto == 0 {
            skipped += 1;
            continue;
        }
        let message = messages[upto - 1].clone();
        let alternates = match window_ms {
            None => Vec::new(),
            Some(w) => {
                let from = f.ts_ms.saturating_sub(w);
                let first = messages[..upto].partition_point(|m| m.ts_ms < from);
                messages[first..upto].to_vec()
            }
        };
        samples.push(PairedSample { lag_ms: f.ts_ms - message.ts_ms, frame: f.clone(), message, alternates });
    }
    Ok(Pairing { samples, skipped })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub frame_seq: u64,
    pub ts_ms: u64,
    pub msg_seq: u64,
    pub perceived: CanonicalJson,
    pub actual: CanonicalJson,
    pub pass: bool,
    pub lag_ms: u64,
}

/// Where validation gets frame pixels from.
pub trait FrameSource: Sync {
    /// A digest of the frame's content; equal digests mean equal pictures.
    fn key(&self, entry: &FrameLogEntry) -> Result<[u8; 32], ValidatorError>;
    fn image(&self, entry: &FrameLogEntry) -> Result<Arc<Image>, ValidatorError>;
}

/// Frames stored as PNG files under a frame log directory.
pub struct DirFrames {
    dir: PathBuf,
}

impl DirFrames {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }
}

impl FrameSource for DirFrames {
    fn key(&self, entry: &FrameLogEntry) -> Result<[u8; 32], ValidatorError> {
        let bytes = std::fs::read(self.dir.join(&entry.path))?;
        Ok(Sha256::digest(&bytes).into())
    }

    fn image(&self, entry: &FrameLogEntry) -> Result<Arc<Image>, ValidatorError> {
        let bytes = std::fs::read(self.dir.join(&entry.path))?;
        Ok(Arc::new(decode_png(&bytes)?))
    }
}

/// Frames held in memory, looked up by frame seq.
#[derive(Default)]
pub struct MemoryFrames {
    frames: HashMap<u64, (Arc<Image>, [u8; 32])>,
}

impl MemoryFrames {
    pub fn new<'a>(ticks: impl IntoIterator<Item = &'a TickFrame>) -> Self {
        let mut digests: HashMap<*const Image, [u8; 32]> = HashMap::new();
        let frames = ticks
            .into_iter()
            .map(|t| {
                let d = *digests.entry(Arc::as_ptr(&t.frame)).or_insert_with(|| frame_digest(&t.frame));
                (t.entry.seq, (Arc::clone(&t.frame), d))
            })
            .collect();
        Self { frames }
    }
}

impl FrameSource for MemoryFrames {
    fn key(&self, entry: &FrameLogEntry) -> Result<[u8; 32], ValidatorError> {
        self.frames.get(&entry.seq).map(|f| f.1).ok_or(ValidatorError::MissingFrame(entry.seq))
    }

    fn image(&self, entry: &FrameLogEntry) -> Result<Arc<Image>, ValidatorError> {
        self.frames.get(&entry.seq).map(|f| Arc::clone(&f.0)).ok_or(ValidatorError::MissingFrame(entry.seq))
    }
}

/// Frame interpretation shared by all verdicts of a run. Results are
/// remembered per frame digest; interpretation is pure so this only saves
/// time.
pub struct Validator<'a> {
    templates: &'a TemplateSet,
    mapping: AffordanceMapping,
    filter: FilterSpec,
    perceived: Mutex<HashMap<[u8; 32], CanonicalJson>>,
}

impl<'a> Validator<'a> {
    pub fn new(templates: &'a TemplateSet, mapping: AffordanceMapping, filter: FilterSpec) -> Self {
        Self { templates, mapping, filter, perceived: Mutex::new(HashMap::new()) }
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    /// Filtered interpretation of a frame.
    pub fn perceive(&self, key: [u8; 32], image: impl FnOnce() -> Result<Arc<Image>, ValidatorError>) -> Result<CanonicalJson, ValidatorError> {
        if let Some(hit) = self.perceived.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let model = interpret(image()?.as_ref(), self.templates, &self.mapping);
        let view = apply_filter(&self.filter, &model.tree);
        self.perceived.lock().expect("cache lock").insert(key, view.clone());
        Ok(view)
    }

    /// Verdict for one frame already interpreted as `perceived`.
    pub fn judge(&self, s: &PairedSample, perceived: CanonicalJson) -> VerdictRecord {
        let actual = apply_filter(&self.filter, &s.message.to_value());
        let pass = perceived == actual
            || s.alternates.iter().any(|m| apply_filter(&self.filter, &m.to_value()) == perceived);
        VerdictRecord {
            frame_seq: s.frame.seq,
            ts_ms: s.frame.ts_ms,
            msg_seq: s.message.seq,
            perceived,
            actual,
            pass,
            lag_ms: s.lag_ms,
        }
    }

    pub fn validate_pair(&self, s: &PairedSample, frames: &dyn FrameSource) -> Result<VerdictRecord, ValidatorError> {
        let perceived = self.perceive(frames.key(&s.frame)?, || frames.image(&s.frame))?;
        Ok(self.judge(s, perceived))
    }

    /// Verdicts for all samples, in sample order.
    pub fn validate_all(&self, samples: &[PairedSample], frames: &dyn FrameSource) -> Result<Vec<VerdictRecord>, ValidatorError> {
        let keys: Vec<[u8; 32]> = samples.par_iter().map(|s| frames.key(&s.frame)).collect::<Result<_, _>>()?;
        // interpret each distinct picture once, in parallel
        let mut first: HashMap<[u8; 32], usize> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            first.entry(*k).or_insert(i);
        }
        let mut distinct: Vec<usize> = first.into_values().collect();
        distinct.sort_unstable();
        distinct
            .par_iter()
            .map(|&i| self.perceive(keys[i], || frames.image(&samples[i].frame)).map(|_| ()))
            .collect::<Result<Vec<()>, _>>()?;
        samples
            .iter()
            .zip(keys)
            .map(|(s, k)| Ok(self.judge(s, self.perceive(k, || frames.image(&s.frame))?)))
            .collect()
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEpisode {
    pub start_frame_seq: u64,
    pub end_frame_seq: u64,
    pub start_ts_ms: u64,
    pub end_ts_ms: u64,
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwarenessReport {
    pub n: u64,
    pub failures: u64,
    pub epsilon_hat: f64,
    pub ci95: (f64, f64),
    pub fault_episodes: Vec<FaultEpisode>,
}

impl AwarenessReport {
    pub fn aware(&self) -> bool {
        self.failures == 0
    }
}

/// Failure-rate estimate, Wilson interval and episodes (maximal runs of
/// consecutive failing verdicts).
pub fn estimate_awareness(verdicts: &[VerdictRecord]) -> Result<AwarenessReport, ValidatorError> {
    if verdicts.is_empty() {
        return Err(ValidatorError::EmptyInput);
    }
    let n = verdicts.len() as u64;
    let failures = verdicts.iter().filter(|v| !v.pass).count() as u64;
    let mut episodes: Vec<FaultEpisode> = Vec::new();
    let mut open = false;
    for v in verdicts {
        match (v.pass, open) {
            (false, false) => {
                episodes.push(FaultEpisode {
                    start_frame_seq: v.frame_seq,
                    end_frame_seq: v.frame_seq,
                    start_ts_ms: v.ts_ms,
                    end_ts_ms: v.ts_ms,
                    frames: 1,
                });
                open = true;
            }
            (false, true) => {
                let e = episodes.last_mut().expect("open episode");
                e.end_frame_seq = v.frame_seq;
                e.end_ts_ms = v.ts_ms;
                e.frames += 1;
            }
            (true, _) => open = false,
        }
    }
    Ok(AwarenessReport {
        n,
        failures,
        epsilon_hat: failures as f64 / n as f64,
        ci95: wilson_interval(failures, n, Z95),
        fault_episodes: episodes,
    })
}

pub fn write_verdicts(path: &Path, verdicts: &[VerdictRecord]) -> Result<(), ValidatorError> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in verdicts {
        writeln!(w, "{}", serde_json::to_string(v).expect("verdicts serialize"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_verdicts(path: &Path) -> Result<Vec<VerdictRecord>, ValidatorError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ValidatorError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DroneState, GeoPoint, WarningMode};

    fn m(seq: u64, ts: u64) -> ModelMessage {
        ModelMessage {
            seq,
            ts_ms: ts,
            drone: DroneState { pos: GeoPoint { lat: 1.0, lon: 2.0 }, alt_m: 0.0, heading_deg: 0.0 },
            warning_mode: WarningMode::Nominal,
            waypoints: vec![GeoPoint { lat: 1.0, lon: 2.0 }],
        }
    }

    fn f(seq: u64, ts: u64) -> FrameLogEntry {
        FrameLogEntry { seq, ts_ms: ts, path: String::new(), width: 1, height: 1, source_msg_seq: 0, hud_msg_seq: 0 }
    }

    fn verdict(seq: u64, pass: bool) -> VerdictRecord {
        let c = CanonicalJson::parse("{}").unwrap();
        VerdictRecord { frame_seq: seq, ts_ms: seq * 100, msg_seq: 0, perceived: c.clone(), actual: c, pass, lag_ms: 0 }
    }

    #[test]
    fn pairs_latest_preceding() {
        let msgs = [m(0, 0), m(1, 100), m(2, 200)];
        let p = pair_logs(&[f(0, 150)], &msgs, None).unwrap();
        assert_eq!(p.samples[0].message.ts_ms, 100);
        assert_eq!(p.samples[0].lag_ms, 50);
        let p = pair_logs(&[f(0, 150)], &msgs, Some(120)).unwrap();
        assert_eq!(p.samples[0].alternates.iter().map(|a| a.ts_ms).collect::<Vec<_>>(), [100]);
    }

    #[test]
    fn skips_frames_before_messages() {
        let p = pair_logs(&[f(0, 50), f(1, 150)], &[m(0, 100)], None).unwrap();
        assert_eq!(p.skipped, 1);
        assert_eq!(p.samples.len(), 1);
    }

    #[test]
    fn unsorted_logs_rejected() {
        assert!(matches!(
            pair_logs(&[f(0, 50), f(1, 40)], &[m(0, 0)], None),
            Err(ValidatorError::UnsortedLog { log: "frame", index: 1 })
        ));
        assert!(matches!(
            pair_logs(&[f(0, 50)], &[m(0, 10), m(1, 0)], None),
            Err(ValidatorError::UnsortedLog { log: "message", .. })
        ));
    }

    #[test]
    fn wilson_zero_of_500() {
        let (lo, hi) = wilson_interval(0, 500, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.0076).abs() < 5e-5, "{hi}");
    }

    #[test]
    fn episodes_are_maximal_runs() {
        let vs: Vec<_> = (0..50).map(|i| verdict(i, !((10..=12).contains(&i) || i == 40))).collect();
        let r = estimate_awareness(&vs).unwrap();
        assert_eq!(r.failures, 4);
        assert_eq!(r.fault_episodes.len(), 2);
        assert_eq!((r.fault_episodes[0].start_ts_ms, r.fault_episodes[0].frames), (1000, 3));
        assert_eq!(r.fault_episodes[1].start_ts_ms, 4000);
    }

    #[test]
    fn all_fail_and_empty() {
        let vs: Vec<_> = (0..5).map(|i| verdict(i, false)).collect();
        let r = estimate_awareness(&vs).unwrap();
        assert_eq!(r.epsilon_hat, 1.0);
        assert!(r.ci95.0 <= 1.0 && r.ci95.1 == 1.0);
        assert!(matches!(estimate_awareness(&[]), Err(ValidatorError::EmptyInput)));
    }
}
