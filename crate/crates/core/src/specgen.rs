//! Procedural "designer spec" dataset: labeled images of each warning
//! condition drawn over designer-style map tiles, and its stratified split.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GeoPoint, WarningMode};
use crate::raster::{
    draw_drone_marker, draw_glyph, tile_background, write_png, GlyphClass, Image, RasterError, Rect, TileStyle,
    TileStyleKind,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("labels line {line}: {msg}")]
    BadLabel { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cls: GlyphClass,
    #[serde(flatten)]
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledImage {
    /// Relative to the directory holding the labels file.
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<BoundingBox>,
}

impl LabeledImage {
    /// The warning mode the labels imply: the most severe labeled class.
    pub fn mode(&self) -> WarningMode {
        let mut mode = WarningMode::Nominal;
        for b in &self.boxes {
            match b.cls {
                GlyphClass::Danger => return WarningMode::Danger,
                GlyphClass::Caution => mode = WarningMode::Caution,
                _ => {}
            }
        }
        mode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecDatasetConfig {
    pub per_class: usize,
    pub image_size: (u32, u32),
    /// Inclusive icon side range in pixels.
    pub icon_size_range: (u32, u32),
    pub seed: u64,
    pub style: TileStyleKind,
    pub meters_per_pixel: f64,
}

impl Default for SpecDatasetConfig {
    fn default() -> Self {
        Self {
            per_class: 30,
            image_size: (640, 480),
            icon_size_range: (48, 80),
            seed: 7,
            style: TileStyleKind::Designer,
            meters_per_pixel: 2.0,
        }
    }
}

impl SpecDatasetConfig {
    pub fn validate(&self) -> Result<(), SpecError> {
        let (w, h) = self.image_size;
        let (lo, hi) = self.icon_size_range;
        if self.per_class == 0 {
            return Err(SpecError::InvalidConfig("per_class must be positive".into()));
        }
        if lo == 0 || lo > hi {
            return Err(SpecError::InvalidConfig(format!("icon_size_range ({lo}, {hi})")));
        }
        if hi > w || hi > h {
            return Err(SpecError::InvalidConfig(format!("icons up to {hi}px do not fit {w}x{h}")));
        }
        if !(self.meters_per_pixel.is_finite() && self.meters_per_pixel > 0.0) {
            return Err(SpecError::InvalidConfig(format!("meters_per_pixel {}", self.meters_per_pixel)));
        }
        Ok(())
    }

    pub fn image_count(&self) -> usize {
        3 * self.per_class
    }
}

/// Mode of dataset image `index`: images come in class blocks of
/// `per_class`, nominal first.
pub fn mode_of_index(cfg: &SpecDatasetConfig, index: usize) -> WarningMode {
    WarningMode::ALL[(index / cfg.per_class).min(2)]
}

pub fn image_file_name(index: usize) -> String {
    format!("images/spec_{index:04}.png")
}

/// Renders dataset image `index` and its labels. Pure function of `(cfg, index)`.
pub fn render_spec_image(cfg: &SpecDatasetConfig, index: usize) -> Result<(Image, LabeledImage), SpecError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (w, h) = cfg.image_size;
    let origin = GeoPoint { lat: rng.random_range(40.60..40.80), lon: rng.random_range(-74.10..-73.90) };
    let style = TileStyle { kind: cfg.style, world_seed: cfg.seed };
    let mut img = tile_background(style, origin, (w, h), cfg.meters_per_pixel);

    // the drone sits in the middle of every wireframe, as in the running app
    let marker = 40u32;
    let sector = rng.random_range(0..8u8);
    draw_drone_marker(&mut img, Rect::new(((w - marker) / 2) as i64, ((h - marker) / 2) as i64, marker, marker), sector)?;

    let mut boxes = Vec::new();
    let cls = match mode_of_index(cfg, index) {
        WarningMode::Nominal => None,
        WarningMode::Caution => Some(GlyphClass::Caution),
        WarningMode::Danger => Some(GlyphClass::Danger),
    };
    if let Some(cls) = cls {
        let (lo, hi) = cfg.icon_size_range;
        let side = rng.random_range(lo..=hi);
        let x = rng.random_range(0..=(w - side)) as i64;
        let y = rng.random_range(0..=(h - side)) as i64;
        let rect = Rect::new(x, y, side, side);
        draw_glyph(&mut img, cls, rect)?;
        boxes.push(BoundingBox { cls, rect });
    }
    let label = LabeledImage { path: image_file_name(index), width: w, height: h, boxes };
    Ok((img, label))
}

/// Writes `3 × per_class` images under `out_dir/images/` and
/// `out_dir/labels.ndjson`.
pub fn generate_spec_dataset(cfg: &SpecDatasetConfig, out_dir: &Path) -> Result<Vec<LabeledImage>, SpecError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir.join("images"))?;
    let labels = (0..cfg.image_count())
        .into_par_iter()
        .map(|i| {
            let (img, label) = render_spec_image(cfg, i)?;
            write_png(&img, &out_dir.join(&label.path))?;
            Ok(label)
        })
        .collect::<Result<Vec<_>, SpecError>>()?;
    write_labels(&out_dir.join("labels.ndjson"), &labels)?;
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[LabeledImage]) -> Result<(), SpecError> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(w, "{}", serde_json::to_string(l).expect("labels serialize"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledImage>, SpecError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let label: LabeledImage =
            serde_json::from_str(&line).map_err(|e| SpecError::BadLabel { line: i + 1, msg: e.to_string() })?;
        out.push(label);
    }
    Ok(out)
}

/// Resolves a label's image path against the labels directory.
pub fn image_path(labels_dir: &Path, label: &LabeledImage) -> PathBuf {
    labels_dir.join(&label.path)
}

/// Stratified, seeded split. Within each class `round(n × train_fraction)`
/// images go to train; both halves keep dataset order.
pub fn split_dataset(
    ds: &[LabeledImage],
    train_fraction: f64,
    seed: u64,
) -> (Vec<LabeledImage>, Vec<LabeledImage>) {
    let fraction = train_fraction.clamp(0.0, 1.0);
    let mut in_train = vec![false; ds.len()];
    for mode in WarningMode::ALL {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds[i].mode() == mode).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(mode.as_u8() as u64);
        // Fisher-Yates
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let n_train = (idx.len() as f64 * fraction).round() as usize;
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, t) in ds.iter().zip(in_train) {
        if t {
            train.push(label.clone());
        } else {
            test.push(label.clone());
        }
    }
    (train, test)
}
