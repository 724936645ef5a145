//! Offline pipeline stages: spec dataset, training, detector evaluation,
//! rendering, offline validation and the distinguisher game.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use awareness_core::detector::{evaluate, load_labeled_images, manifest_path, train_templates, Metrics, TemplateSet};
use awareness_core::distinguisher::{optimal_success, play, AdvantageReport, CalibrationTable, Distinguisher, ViewPair};
use awareness_core::interpreter::AffordanceMapping;
use awareness_core::renderer::{read_frame_log, run_render_loop, DirSink, FaultConfig, FrameLogEntry, RenderSummary};
use awareness_core::scenario::{gen_scenario, read_message_log, write_message_log};
use awareness_core::specgen::{generate_spec_dataset, read_labels, split_dataset, LabeledImage};
use awareness_core::validator::{
    estimate_awareness, pair_logs, read_verdicts, write_verdicts, AwarenessReport, DirFrames, FrameSource, Validator,
    ValidatorError, VerdictRecord,
};
use awareness_core::ModelMessage;
use serde::{Deserialize, Serialize};

use crate::config::run_files;
use crate::{HarnessConfig, HarnessError};

fn require(path: &Path) -> Result<(), HarnessError> {
    if path.exists() {
        Ok(())
    } else {
        Err(HarnessError::MissingArtifact(path.to_path_buf()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Image paths of each half of the design-spec dataset, as in `labels.ndjson`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    /// Labels of one half, in dataset order.
    pub fn select(labels: &[LabeledImage], paths: &[String]) -> Vec<LabeledImage> {
        let wanted: BTreeSet<&str> = paths.iter().map(String::as_str).collect();
        labels.iter().filter(|l| wanted.contains(l.path.as_str())).cloned().collect()
    }
}

/// Writes the design-spec dataset and its train/test split.
pub fn cmd_specgen(cfg: &HarnessConfig) -> Result<SplitManifest, HarnessError> {
    let layout = cfg.layout();
    let labels = generate_spec_dataset(&cfg.spec, &layout.spec_dir())?;
    let (train, test) = split_dataset(&labels, cfg.split.train_fraction, cfg.split.seed);
    let split = SplitManifest {
        train: train.into_iter().map(|l| l.path).collect(),
        test: test.into_iter().map(|l| l.path).collect(),
    };
    write_json(&layout.split(), &split)?;
    Ok(split)
}

fn load_split(cfg: &HarnessConfig) -> Result<(Vec<LabeledImage>, SplitManifest), HarnessError> {
    let layout = cfg.layout();
    require(&layout.labels())?;
    require(&layout.split())?;
    let labels = read_labels(&layout.labels())?;
    let split: SplitManifest = serde_json::from_str(&std::fs::read_to_string(layout.split())?)?;
    Ok((labels, split))
}

/// Crops templates from the training half and saves the template set.
pub fn cmd_train(cfg: &HarnessConfig) -> Result<TemplateSet, HarnessError> {
    let layout = cfg.layout();
    let (labels, split) = load_split(cfg)?;
    let train = SplitManifest::select(&labels, &split.train);
    let images = load_labeled_images(&layout.spec_dir(), &train)?;
    let ts = train_templates(train.iter().zip(images.iter()), &cfg.detector)?;
    let model_dir = layout.model_dir();
    // stale template files from an earlier, larger training set must not linger
    if model_dir.join("templates").exists() {
        std::fs::remove_dir_all(model_dir.join("templates"))?;
    }
    ts.save(&model_dir)?;
    Ok(ts)
}

pub fn load_model(cfg: &HarnessConfig) -> Result<TemplateSet, HarnessError> {
    let dir = cfg.layout().model_dir();
    require(&manifest_path(&dir))?;
    Ok(TemplateSet::load(&dir)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub accuracy_floor: f64,
    pub pass: bool,
}

/// Evaluates the saved model on the held-out half and writes `metrics.json`.
pub fn cmd_evaldet(cfg: &HarnessConfig) -> Result<EvalReport, HarnessError> {
    let layout = cfg.layout();
    let ts = load_model(cfg)?;
    let (labels, split) = load_split(cfg)?;
    let test = SplitManifest::select(&labels, &split.test);
    let images = load_labeled_images(&layout.spec_dir(), &test)?;
    let metrics = evaluate(&ts, test.iter().zip(images.iter()));
    let pass = metrics.mode_accuracy.is_some_and(|a| a >= cfg.eval.accuracy_floor);
    let report = EvalReport { metrics, accuracy_floor: cfg.eval.accuracy_floor, pass };
    write_json(&layout.metrics(), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub render_fps: f64,
    pub duration_ms: u64,
    pub fault: FaultConfig,
    pub messages: u64,
    #[serde(flatten)]
    pub render: RenderSummary,
}

/// Renders a message stream into `run_dir`. Without `messages` the scenario
/// is generated from the config and logged as `messages.ndjson`.
pub fn cmd_render(cfg: &HarnessConfig, run_dir: &Path, messages: Option<&Path>) -> Result<RunSummary, HarnessError> {
    std::fs::create_dir_all(run_dir)?;
    let msgs = match messages {
        Some(path) => read_message_log(path)?,
        None => {
            let msgs = gen_scenario(&cfg.scenario)?;
            write_message_log(&run_dir.join(run_files::MESSAGES), &msgs)?;
            msgs
        }
    };
    let n = msgs.len() as u64;
    let mut sink = DirSink::create(run_dir)?;
    let (_, render) =
        run_render_loop(msgs, &cfg.render, cfg.rates.render_fps, cfg.duration_ms(), &cfg.fault, &mut sink)?;
    let summary = RunSummary {
        render_fps: cfg.rates.render_fps,
        duration_ms: cfg.duration_ms(),
        fault: cfg.fault.clone(),
        messages: n,
        render,
    };
    write_json(&run_dir.join(run_files::SUMMARY), &summary)?;
    Ok(summary)
}

/// Pairs and judges every frame of a run.
pub fn validate_frames(
    cfg: &HarnessConfig,
    ts: &TemplateSet,
    frames: &[FrameLogEntry],
    messages: &[ModelMessage],
    source: &dyn FrameSource,
) -> Result<(Vec<VerdictRecord>, usize), HarnessError> {
    let pairing = pair_logs(frames, messages, cfg.validation.window_ms)?;
    let validator = Validator::new(ts, AffordanceMapping::for_templates(ts), cfg.filter.clone());
    let verdicts = validator.validate_all(&pairing.samples, source)?;
    Ok((verdicts, pairing.skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOutcome {
    #[serde(flatten)]
    pub report: AwarenessReport,
    /// Frames logged before any message.
    pub skipped: usize,
    pub verdicts_path: PathBuf,
}

impl ValidateOutcome {
    /// Process exit code: 0 exactly when no verdict failed.
    pub fn exit_code(&self) -> i32 {
        if self.report.aware() {
            0
        } else {
            1
        }
    }
}

/// Validates a logged run and writes `verdicts.ndjson` and `report.json`
/// into `out_dir`.
pub fn cmd_validate_offline(
    cfg: &HarnessConfig,
    frames_dir: &Path,
    messages_path: &Path,
    out_dir: &Path,
) -> Result<ValidateOutcome, HarnessError> {
    let ts = load_model(cfg)?;
    let frames = match read_frame_log(frames_dir) {
        Ok(f) => f,
        Err(awareness_core::renderer::RenderError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    if frames.is_empty() {
        return Err(ValidatorError::EmptyInput.into());
    }
    require(messages_path)?;
    let messages = read_message_log(messages_path)?;
    let (verdicts, skipped) = validate_frames(cfg, &ts, &frames, &messages, &DirFrames::new(frames_dir))?;
    let report = estimate_awareness(&verdicts)?;
    std::fs::create_dir_all(out_dir)?;
    let verdicts_path = out_dir.join(run_files::VERDICTS);
    write_verdicts(&verdicts_path, &verdicts)?;
    let outcome = ValidateOutcome { report, skipped, verdicts_path };
    write_json(&out_dir.join(run_files::REPORT), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishReport {
    pub suite: usize,
    pub calibration: usize,
    /// Bayes-optimal success probability on the suite.
    pub optimal_success: f64,
    pub reports: Vec<AdvantageReport>,
}

/// Plays every builtin distinguisher against a verdict log. The likelihood
/// distinguisher is calibrated on `calibration` (defaults to the same log).
pub fn play_all(
    cfg: &HarnessConfig,
    suite: &[ViewPair],
    calibration: &[ViewPair],
) -> Result<DistinguishReport, HarnessError> {
    let table = CalibrationTable::from_pairs(calibration);
    let reports = Distinguisher::NAMES
        .iter()
        .map(|name| {
            let v = Distinguisher::by_name(name, Some(table.clone()))?;
            Ok(play(suite, &v, cfg.distinguish.trials, cfg.distinguish.seed)?.0)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(DistinguishReport {
        suite: suite.len(),
        calibration: calibration.len(),
        optimal_success: optimal_success(suite),
        reports,
    })
}

pub fn cmd_distinguish(
    cfg: &HarnessConfig,
    verdicts: &Path,
    calibration: Option<&Path>,
    out: &Path,
) -> Result<DistinguishReport, HarnessError> {
    require(verdicts)?;
    let suite: Vec<ViewPair> = read_verdicts(verdicts)?.iter().map(ViewPair::from).collect();
    let calib: Vec<ViewPair> = match calibration {
        Some(p) => {
            require(p)?;
            read_verdicts(p)?.iter().map(ViewPair::from).collect()
        }
        None => suite.clone(),
    };
    let report = play_all(cfg, &suite, &calib)?;
    write_json(out, &report)?;
    Ok(report)
}
