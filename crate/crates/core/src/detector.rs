//! Template-matching affordance detector.
//!
//! "Training" crops every labeled box from the design-spec images into a grayscale
//! template. Detection slides each template, at each configured scale, over
//! the grayscale frame and scores windows by zero-normalized
//! cross-correlation. Window statistics come from integral images, and a
//! mean-color gate skips windows whose average color is far from the
//! template's before any correlation is computed. Candidates are pruned with
//! per-class greedy NMS.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::imageops::{resize, FilterType};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpreter::AffordanceMapping;
use crate::raster::{read_gray_png, read_png, to_grayscale, write_gray_png, GlyphClass, GrayImage, Image, RasterError, Rect};
use crate::specgen::{image_path, LabeledImage};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("no training boxes for class {0}")]
    MissingClass(GlyphClass),
    #[error("crop {rect:?} of {image} has zero variance")]
    DegenerateCrop { image: String, rect: Rect },
    #[error("patch dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub scales: Vec<f64>,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub stride: u32,
    /// Maximum Euclidean distance between window and template mean RGB.
    pub color_tolerance: f64,
    /// Classes training must find examples of.
    pub classes: Vec<GlyphClass>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            scales: vec![0.75, 1.0, 1.25],
            score_threshold: 0.6,
            nms_iou: 0.5,
            stride: 2,
            color_tolerance: 80.0,
            classes: GlyphClass::WARNINGS.to_vec(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(DetectorError::InvalidConfig(format!("scales {:?}", self.scales)));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return Err(DetectorError::InvalidConfig(format!("score_threshold {}", self.score_threshold)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(DetectorError::InvalidConfig(format!("nms_iou {}", self.nms_iou)));
        }
        if self.stride == 0 {
            return Err(DetectorError::InvalidConfig("stride must be positive".into()));
        }
        if !(self.color_tolerance.is_finite() && self.color_tolerance >= 0.0) {
            return Err(DetectorError::InvalidConfig(format!("color_tolerance {}", self.color_tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub cls: GlyphClass,
    pub patch: GrayImage,
    pub mean_rgb: [f64; 3],
    pub source_image: String,
    pub source_box: Rect,
}

/// Trained templates plus the config they were trained with. Immutable.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<Template>,
    config: DetectorConfig,
    prepared: OnceLock<Vec<SizeGroup>>,
}

impl PartialEq for TemplateSet {
    fn eq(&self, other: &Self) -> bool {
        self.templates == other.templates && self.config == other.config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cls: GlyphClass,
    pub rect: Rect,
    pub score: f64,
}

/// A template resized to one scale, zero-meaned and ready to correlate.
#[derive(Debug, Clone, PartialEq)]
struct Prepared {
    cls: GlyphClass,
    w: u32,
    h: u32,
    zero_mean: Vec<f32>,
    norm: f64,
    mean_rgb: [f64; 3],
}

/// Zero-normalized cross-correlation of two equally sized patches, clamped
/// to [-1, 1]; 0 when either patch is constant.
pub fn ncc_score(window: &GrayImage, tpl: &GrayImage) -> Result<f64, DetectorError> {
    if (window.width(), window.height()) != (tpl.width(), tpl.height()) {
        return Err(DetectorError::DimensionMismatch(
            (window.width(), window.height()),
            (tpl.width(), tpl.height()),
        ));
    }
    let n = window.pixels().len() as f64;
    let mw = window.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
    let mt = tpl.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
    let (mut cov, mut vw, mut vt) = (0.0, 0.0, 0.0);
    for (&a, &b) in window.pixels().iter().zip(tpl.pixels()) {
        let (da, db) = (a as f64 - mw, b as f64 - mt);
        cov += da * db;
        vw += da * da;
        vt += db * db;
    }
    if vw <= 0.0 || vt <= 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (vw.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0) as f64;
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0) as f64;
    let inter = ix * iy;
    let union = a.area() as f64 + b.area() as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Descending score, then smaller x, then smaller y.
fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.rect.x.cmp(&b.rect.x))
        .then(a.rect.y.cmp(&b.rect.y))
        .then(a.cls.cmp(&b.cls))
        .then(a.rect.w.cmp(&b.rect.w))
}

/// Greedy per-class non-maximum suppression. Survivors of one class have
/// pairwise IoU below `iou_thr`. Output is ranked by descending score.
pub fn nms(mut dets: Vec<Detection>, iou_thr: f64) -> Vec<Detection> {
    dets.sort_by(rank);
    let mut keep: Vec<Detection> = Vec::new();
    for d in dets {
        if keep.iter().all(|k| k.cls != d.cls || iou(&k.rect, &d.rect) < iou_thr) {
            keep.push(d);
        }
    }
    keep
}

impl TemplateSet {
    pub fn new(templates: Vec<Template>, config: DetectorConfig) -> Result<Self, DetectorError> {
        config.validate()?;
        for cls in &config.classes {
            if !templates.iter().any(|t| t.cls == *cls) {
                return Err(DetectorError::MissingClass(*cls));
            }
        }
        Ok(Self { templates, config, prepared: OnceLock::new() })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn count(&self, cls: GlyphClass) -> usize {
        self.templates.iter().filter(|t| t.cls == cls).count()
    }

    /// Scaled templates grouped by size. Exact duplicates are dropped:
    /// they would produce identical candidates that NMS removes anyway.
    fn prepared(&self) -> &[SizeGroup] {
        self.prepared.get_or_init(|| {
            let mut groups: Vec<SizeGroup> = Vec::new();
            for t in &self.templates {
                for &s in &self.config.scales {
                    let Some(p) = prepare(t, s) else { continue };
                    match groups.iter_mut().find(|g| (g.w, g.h) == (p.w, p.h)) {
                        Some(g) => {
                            if !g.members.contains(&p) {
                                g.members.push(p);
                            }
                        }
                        None => groups.push(SizeGroup { w: p.w, h: p.h, members: vec![p] }),
                    }
                }
            }
            groups.sort_by_key(|g| (g.w, g.h));
            groups
        })
    }

    /// Writes template PNGs and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), DetectorError> {
        std::fs::create_dir_all(dir.join("templates"))?;
        let mut entries = Vec::with_capacity(self.templates.len());
        for (i, t) in self.templates.iter().enumerate() {
            let rel = format!("templates/tpl_{i:03}_{}.png", t.cls);
            write_gray_png(&t.patch, &dir.join(&rel))?;
            entries.push(ManifestEntry {
                cls: t.cls,
                path: rel,
                mean_rgb: t.mean_rgb,
                source_image: t.source_image.clone(),
                source_box: t.source_box,
            });
        }
        let manifest = Manifest { config: self.config.clone(), templates: entries };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| DetectorError::Manifest(e.to_string()))?;
        std::fs::write(manifest_path(dir), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DetectorError> {
        let text = std::fs::read_to_string(manifest_path(dir))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DetectorError::Manifest(e.to_string()))?;
        let templates = manifest
            .templates
            .into_iter()
            .map(|e| {
                Ok(Template {
                    cls: e.cls,
                    patch: read_gray_png(&dir.join(&e.path))?,
                    mean_rgb: e.mean_rgb,
                    source_image: e.source_image,
                    source_box: e.source_box,
                })
            })
            .collect::<Result<Vec<_>, DetectorError>>()?;
        Self::new(templates, manifest.config)
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: DetectorConfig,
    templates: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    cls: GlyphClass,
    path: String,
    mean_rgb: [f64; 3],
    source_image: String,
    source_box: Rect,
}

#[derive(Debug, Clone)]
struct SizeGroup {
    w: u32,
    h: u32,
    members: Vec<Prepared>,
}

fn prepare(t: &Template, scale: f64) -> Option<Prepared> {
    let w = ((t.patch.width() as f64 * scale).round() as u32).max(1);
    let h = ((t.patch.height() as f64 * scale).round() as u32).max(1);
    let patch = if (w, h) == (t.patch.width(), t.patch.height()) {
        t.patch.clone()
    } else {
        GrayImage::from_luma_image(resize(&t.patch.to_luma_image(), w, h, FilterType::Triangle))
    };
    let n = (w * h) as f64;
    let mean = patch.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
    let zero_mean: Vec<f32> = patch.pixels().iter().map(|&p| (p as f64 - mean) as f32).collect();
    let norm = zero_mean.iter().map(|&z| (z as f64) * (z as f64)).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return None;
    }
    Some(Prepared { cls: t.cls, w, h, zero_mean, norm, mean_rgb: t.mean_rgb })
}

/// Crops one template per labeled box of a detectable class.
pub fn train_templates<'a, I>(train: I, cfg: &DetectorConfig) -> Result<TemplateSet, DetectorError>
where
    I: IntoIterator<Item = (&'a LabeledImage, &'a Image)>,
{
    cfg.validate()?;
    let mut templates = Vec::new();
    for (label, img) in train {
        for b in &label.boxes {
            if !cfg.classes.contains(&b.cls) {
                continue;
            }
            let crop = img.crop(b.rect)?;
            let patch = to_grayscale(&crop);
            let first = patch.pixels()[0];
            if patch.pixels().iter().all(|&p| p == first) {
                return Err(DetectorError::DegenerateCrop { image: label.path.clone(), rect: b.rect });
            }
            templates.push(Template {
                cls: b.cls,
                patch,
                mean_rgb: crop.mean_rgb(crop.bounds())?,
                source_image: label.path.clone(),
                source_box: b.rect,
            });
        }
    }
    TemplateSet::new(templates, cfg.clone())
}

/// Loads the images referenced by `labels` (paths relative to `labels_dir`).
pub fn load_labeled_images(labels_dir: &Path, labels: &[LabeledImage]) -> Result<Vec<Image>, DetectorError> {
    labels
        .par_iter()
        .map(|l| Ok(read_png(&image_path(labels_dir, l))?))
        .collect()
}

/// Summed-area tables over gray, gray², and the color channels. Color sums
/// are interleaved per pixel so one gate check touches four cache lines.
struct Integrals {
    stride: usize,
    gray: Vec<f64>,
    gray_sq: Vec<f64>,
    rgb: Vec<[u32; 4]>,
}

impl Integrals {
    fn new(img: &Image, gray: &GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let len = stride * (h + 1);
        let mut g = vec![0.0; len];
        let mut g2 = vec![0.0; len];
        let mut rgb = vec![[0u32; 4]; len];
        let px = img.pixels();
        let gp = gray.pixels();
        for y in 0..h {
            let (mut rs, mut rs2) = (0.0, 0.0);
            let mut rc = [0u32; 3];
            for x in 0..w {
                let v = gp[y * w + x] as f64;
                rs += v;
                rs2 += v * v;
                let above = y * stride + x + 1;
                let here = (y + 1) * stride + x + 1;
                g[here] = g[above] + rs;
                g2[here] = g2[above] + rs2;
                for c in 0..3 {
                    rc[c] += px[(y * w + x) * 3 + c] as u32;
                    rgb[here][c] = rgb[above][c] + rc[c];
                }
            }
        }
        Self { stride, gray: g, gray_sq: g2, rgb }
    }

    #[inline]
    fn box_gray(&self, t: &[f64], x: usize, y: usize, w: usize, h: usize) -> f64 {
        let s = self.stride;
        t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x]
    }

    /// Channel sums over a window. Wrapping arithmetic is exact because the
    /// true sums fit in `u32` for any image this crate can hold in memory.
    #[inline]
    fn box_rgb(&self, x: usize, y: usize, w: usize, h: usize) -> [u32; 3] {
        let s = self.stride;
        let (a, b) = (&self.rgb[y * s + x], &self.rgb[y * s + x + w]);
        let (c, d) = (&self.rgb[(y + h) * s + x], &self.rgb[(y + h) * s + x + w]);
        std::array::from_fn(|i| d[i].wrapping_add(a[i]).wrapping_sub(b[i]).wrapping_sub(c[i]))
    }
}

/// Runs every template at every scale over `img`; see module docs.
pub fn detect(img: &Image, ts: &TemplateSet) -> Vec<Detection> {
    let cfg = &ts.config;
    let prepared = ts.prepared();
    let gray = to_grayscale(img);
    let gray_f: Vec<f32> = gray.pixels().iter().map(|&p| p as f32).collect();
    let integrals = Integrals::new(img, &gray);
    let (iw, ih) = (img.width() as usize, img.height() as usize);
    let stride = cfg.stride as usize;

    // Window positions are visited in square blocks. Pixel values are
    // non-negative, so every window sum in a block lies between the sums
    // over the windows' common intersection and their union; a block whose
    // whole range is out of color tolerance for every template is skipped.
    let block = 4 * stride;
    let block_rows: Vec<usize> = (0..ih).step_by(block).collect();
    let candidates: Vec<Vec<Detection>> = block_rows
        .par_iter()
        .map(|&y0| {
            let mut found = Vec::new();
            for g in prepared {
                let (w, h) = (g.w as usize, g.h as usize);
                if w > iw || y0 + h > ih {
                    continue;
                }
                let n = (w * h) as f64;
                let tol_n = cfg.color_tolerance * n;
                let targets: Vec<[f64; 3]> = g.members.iter().map(|p| p.mean_rgb.map(|m| m * n)).collect();
                let y1 = last_position(y0, block, stride, ih - h);
                let mut x0 = 0;
                while x0 + w <= iw {
                    let x1 = last_position(x0, block, stride, iw - w);
                    let inner = integrals.box_rgb(x1, y1, x0 + w - x1, y0 + h - y1);
                    let outer = integrals.box_rgb(x0, y0, x1 + w - x0, y1 + h - y0);
                    let reachable = targets.iter().any(|t| {
                        let d: f64 = (0..3)
                            .map(|c| {
                                let (lo, hi) = (inner[c] as f64, outer[c] as f64);
                                (lo - t[c]).max(t[c] - hi).max(0.0).powi(2)
                            })
                            .sum();
                        d <= tol_n * tol_n
                    });
                    if reachable {
                        for y in (y0..=y1).step_by(stride) {
                            for x in (x0..=x1).step_by(stride) {
                                let sums = integrals.box_rgb(x, y, w, h);
                                for (p, t) in g.members.iter().zip(&targets) {
                                    let d: f64 = (0..3).map(|c| (sums[c] as f64 - t[c]).powi(2)).sum();
                                    if d > tol_n * tol_n {
                                        continue;
                                    }
                                    let Some(score) = window_ncc(&integrals, &gray_f, iw, p, x, y) else { continue };
                                    if score >= cfg.score_threshold {
                                        let rect = Rect::new(x as i64, y as i64, p.w, p.h);
                                        found.push(Detection { cls: p.cls, rect, score });
                                    }
                                }
                            }
                        }
                    }
                    x0 += block;
                }
            }
            found
        })
        .collect();

    nms(candidates.into_iter().flatten().collect(), cfg.nms_iou)
}

/// Dot product with eight independent lanes so it vectorizes; the
/// summation order is fixed, so results stay deterministic.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Last stride position of the block starting at `start`, capped at `max`.
#[inline]
fn last_position(start: usize, block: usize, stride: usize, max: usize) -> usize {
    let end = (start + block - 1).min(max);
    start + (end - start) / stride * stride
}

/// NCC of the window at (x, y) against a prepared template; `None` when the
/// window is flat.
#[inline]
fn window_ncc(integrals: &Integrals, gray: &[f32], iw: usize, p: &Prepared, x: usize, y: usize) -> Option<f64> {
    let (w, h) = (p.w as usize, p.h as usize);
    let n = (w * h) as f64;
    let s = integrals.box_gray(&integrals.gray, x, y, w, h);
    let s2 = integrals.box_gray(&integrals.gray_sq, x, y, w, h);
    let var_n = s2 - s * s / n;
    if var_n <= 1e-9 {
        return None;
    }
    let mut num = 0.0f64;
    for j in 0..h {
        let row = &gray[(y + j) * iw + x..(y + j) * iw + x + w];
        let trow = &p.zero_mean[j * w..(j + 1) * w];
        num += dot(row, trow) as f64;
    }
    Some((num / (var_n.sqrt() * p.norm)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `None` when nothing was detected.
    pub precision: Option<f64>,
    /// `None` when there was nothing to find.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub images: usize,
    pub caution: ClassMetrics,
    pub danger: ClassMetrics,
    pub frames_correct: usize,
    /// Fraction of images whose interpreted warning mode equals the label's.
    pub mode_accuracy: Option<f64>,
}

impl Metrics {
    pub fn class(&self, cls: GlyphClass) -> Option<&ClassMetrics> {
        match cls {
            GlyphClass::Caution => Some(&self.caution),
            GlyphClass::Danger => Some(&self.danger),
            _ => None,
        }
    }
}

/// Box-level precision/recall at IoU 0.5 and frame-level mode accuracy.
pub fn evaluate<'a, I>(ts: &TemplateSet, holdout: I) -> Metrics
where
    I: IntoIterator<Item = (&'a LabeledImage, &'a Image)>,
{
    let items: Vec<(&LabeledImage, &Image)> = holdout.into_iter().collect();
    let mapping = AffordanceMapping::for_templates(ts);
    let per_image: Vec<(Vec<Detection>, &LabeledImage)> =
        items.par_iter().map(|(label, img)| (detect(img, ts), *label)).collect();

    let mut m = Metrics { images: items.len(), ..Default::default() };
    for (dets, label) in &per_image {
        for cls in GlyphClass::WARNINGS {
            let truths: Vec<Rect> = label.boxes.iter().filter(|b| b.cls == cls).map(|b| b.rect).collect();
            let mut matched = vec![false; truths.len()];
            let cm = if cls == GlyphClass::Caution { &mut m.caution } else { &mut m.danger };
            // detections are already ranked by score
            for d in dets.iter().filter(|d| d.cls == cls) {
                let best = truths
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !matched[*i])
                    .map(|(i, t)| (i, iou(&d.rect, t)))
                    .filter(|(_, v)| *v >= 0.5)
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
                match best {
                    Some((i, _)) => {
                        matched[i] = true;
                        cm.true_positives += 1;
                    }
                    None => cm.false_positives += 1,
                }
            }
            cm.false_negatives += matched.iter().filter(|x| !**x).count();
        }
        if mapping.mode_from_detections(dets) == label.mode() {
            m.frames_correct += 1;
        }
    }
    for cm in [&mut m.caution, &mut m.danger] {
        let det = cm.true_positives + cm.false_positives;
        let truth = cm.true_positives + cm.false_negatives;
        cm.precision = (det > 0).then(|| cm.true_positives as f64 / det as f64);
        cm.recall = (truth > 0).then(|| cm.true_positives as f64 / truth as f64);
    }
    m.mode_accuracy = (m.images > 0).then(|| m.frames_correct as f64 / m.images as f64);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> GrayImage {
        let px = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        GrayImage::from_raw(w, h, px).unwrap()
    }

    #[test]
    fn ncc_identities() {
        let t = gray(9, 7, |x, y| ((x * 31 + y * 17) % 251) as u8);
        assert!((ncc_score(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let inv = gray(9, 7, |x, y| 255 - t.get(x, y));
        assert!((ncc_score(&t, &inv).unwrap() + 1.0).abs() < 1e-12);
        let flat = gray(9, 7, |_, _| 40);
        assert_eq!(ncc_score(&t, &flat).unwrap(), 0.0);
        assert_eq!(ncc_score(&flat, &t).unwrap(), 0.0);
    }

    #[test]
    fn ncc_dimension_mismatch() {
        let a = gray(3, 3, |x, _| x as u8);
        let b = gray(3, 4, |x, _| x as u8);
        assert!(matches!(ncc_score(&a, &b), Err(DetectorError::DimensionMismatch(..))));
    }

    #[test]
    fn iou_cases() {
        let r = Rect::new(10, 10, 20, 20);
        assert_eq!(iou(&r, &r), 1.0);
        assert_eq!(iou(&r, &Rect::new(40, 40, 5, 5)), 0.0);
        assert_eq!(iou(&r, &Rect::new(30, 10, 20, 20)), 0.0);
        assert!((iou(&r, &Rect::new(20, 10, 20, 20)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nms_cases() {
        let d = |x, s| Detection { cls: GlyphClass::Danger, rect: Rect::new(x, 0, 10, 10), score: s };
        let kept = nms(vec![d(0, 0.8), d(0, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(nms(vec![d(0, 0.8), d(50, 0.9)], 0.5).len(), 2);
        // other classes never suppress each other
        let mut c = d(0, 0.7);
        c.cls = GlyphClass::Caution;
        assert_eq!(nms(vec![d(0, 0.9), c], 0.5).len(), 2);
        // equal scores: smaller x wins
        let kept = nms(vec![d(2, 0.9), d(0, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].rect.x, 0);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        assert!(DetectorConfig { scales: vec![], ..Default::default() }.validate().is_err());
        assert!(DetectorConfig { score_threshold: 1.0, ..Default::default() }.validate().is_err());
        assert!(DetectorConfig { stride: 0, ..Default::default() }.validate().is_err());
    }
}
