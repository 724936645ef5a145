//! Minimal deterministic rasterization: RGB buffers, glyphs, procedural map
//! tiles and PNG I/O.
//!
//! Nothing here reads a clock or a global RNG; every output is a pure
//! function of the arguments.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::GeoPoint;
use crate::model::METERS_PER_DEGREE;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("rect {rect:?} exceeds {width}x{height} image")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("image dimensions must be positive, got {0}x{1}")]
    EmptyImage(u32, u32),
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    BadBuffer { width: u32, height: u32, got: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png decode: {0}")]
    Decode(String),
    #[error("png encode: {0}")]
    Encode(String),
}

pub type Rgb = [u8; 3];

pub const CAUTION_YELLOW: Rgb = [255, 204, 0];
pub const DANGER_RED: Rgb = [220, 0, 0];
pub const BADGE_PLATE: Rgb = [0, 170, 200];
pub const DRONE_BLUE: Rgb = [30, 90, 230];
pub const SHAME_MAGENTA: Rgb = [230, 0, 230];
pub const WAYPOINT_ORANGE: Rgb = [255, 140, 0];
const BLACK: Rgb = [0, 0, 0];
const WHITE: Rgb = [255, 255, 255];

/// Side of one procedural map tile in pixels.
pub const TILE_PX: i64 = 256;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&fill);
        }
        Self { width, height, pixels }
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage(width, height));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(RasterError::BadBuffer { width, height, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = self.idx(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let i = self.idx(x, y);
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Copies `r`, which must lie inside the image.
    pub fn crop(&self, r: Rect) -> Result<Image, RasterError> {
        self.check_inside(r)?;
        let mut pixels = Vec::with_capacity(r.w as usize * r.h as usize * 3);
        for y in 0..r.h {
            let start = self.idx(r.x as u32, r.y as u32 + y);
            pixels.extend_from_slice(&self.pixels[start..start + r.w as usize * 3]);
        }
        Image::from_raw(r.w, r.h, pixels)
    }

    /// Pastes `src` with its top-left corner at (x, y), clipping to bounds.
    pub fn paste(&mut self, src: &Image, x: i64, y: i64) {
        for sy in 0..src.height {
            for sx in 0..src.width {
                let (dx, dy) = (x + sx as i64, y + sy as i64);
                if dx >= 0 && dy >= 0 && dx < self.width as i64 && dy < self.height as i64 {
                    self.put(dx as u32, dy as u32, src.get(sx, sy));
                }
            }
        }
    }

    pub fn mean_rgb(&self, r: Rect) -> Result<[f64; 3], RasterError> {
        self.check_inside(r)?;
        let mut acc = [0u64; 3];
        for y in r.y as u32..r.y as u32 + r.h {
            for x in r.x as u32..r.x as u32 + r.w {
                let p = self.get(x, y);
                for c in 0..3 {
                    acc[c] += p[c] as u64;
                }
            }
        }
        let n = r.area() as f64;
        Ok([acc[0] as f64 / n, acc[1] as f64 / n, acc[2] as f64 / n])
    }

    pub fn check_inside(&self, r: Rect) -> Result<(), RasterError> {
        if r.x >= 0 && r.y >= 0 && r.right() <= self.width as i64 && r.bottom() <= self.height as i64 {
            Ok(())
        } else {
            Err(RasterError::OutOfBounds { rect: r, width: self.width, height: self.height })
        }
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer length checked")
    }

    pub fn from_rgb_image(img: image::RgbImage) -> Self {
        let (width, height) = img.dimensions();
        Self { width, height, pixels: img.into_raw() }
    }
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage(width, height));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(RasterError::BadBuffer { width, height, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn to_rgb(&self) -> Image {
        let pixels = self.pixels.iter().flat_map(|&g| [g, g, g]).collect();
        Image { width: self.width, height: self.height, pixels }
    }

    pub fn to_luma_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer length checked")
    }

    pub fn from_luma_image(img: image::GrayImage) -> Self {
        let (width, height) = img.dimensions();
        Self { width, height, pixels: img.into_raw() }
    }
}

/// Axis-aligned pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: i64, y: i64, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> i64 {
        self.x + self.w as i64
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h as i64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Rect {
        Rect { x: self.x + dx, y: self.y + dy, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphClass {
    Caution,
    Danger,
    DroneMarker,
    Shame,
}

impl GlyphClass {
    /// Classes a detector is trained to find.
    pub const WARNINGS: [GlyphClass; 2] = [GlyphClass::Caution, GlyphClass::Danger];

    pub fn name(self) -> &'static str {
        match self {
            GlyphClass::Caution => "caution",
            GlyphClass::Danger => "danger",
            GlyphClass::DroneMarker => "drone_marker",
            GlyphClass::Shame => "shame",
        }
    }
}

impl std::fmt::Display for GlyphClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Draws `cls` scaled to `r`. Drone markers point north; use
/// [`draw_drone_marker`] for other headings.
pub fn draw_glyph(img: &mut Image, cls: GlyphClass, r: Rect) -> Result<(), RasterError> {
    match cls {
        GlyphClass::Caution => fill_shape(img, r, caution_pixel),
        GlyphClass::Danger => fill_shape(img, r, danger_pixel),
        GlyphClass::DroneMarker => draw_drone_marker(img, r, 0),
        GlyphClass::Shame => fill_shape(img, r, shame_pixel),
    }
}

/// Blue disc with a white tick towards heading `sector × 45°` (0 = north).
pub fn draw_drone_marker(img: &mut Image, r: Rect, sector: u8) -> Result<(), RasterError> {
    let theta = (sector % 8) as f64 * std::f64::consts::FRAC_PI_4;
    let (dir_x, dir_y) = (theta.sin(), -theta.cos());
    fill_shape(img, r, |u, v| {
        let (dx, dy) = (u - 0.5, v - 0.5);
        if dx * dx + dy * dy > 0.38 * 0.38 {
            return None;
        }
        // distance from the tick segment [0, 0.34] along the heading
        let t = (dx * dir_x + dy * dir_y).clamp(0.0, 0.34);
        let (ex, ey) = (dx - t * dir_x, dy - t * dir_y);
        if ex * ex + ey * ey <= 0.07 * 0.07 {
            Some(WHITE)
        } else {
            Some(DRONE_BLUE)
        }
    })
}

/// Filled disc clipped to the image; may extend past the edges.
pub fn draw_disc(img: &mut Image, cx: f64, cy: f64, radius: f64, color: Rgb) {
    let x0 = (cx - radius).floor().max(0.0) as i64;
    let y0 = (cy - radius).floor().max(0.0) as i64;
    let x1 = ((cx + radius).ceil() as i64).min(img.width as i64 - 1);
    let y1 = ((cy + radius).ceil() as i64).min(img.height as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= radius * radius {
                img.put(x as u32, y as u32, color);
            }
        }
    }
}

fn fill_shape(img: &mut Image, r: Rect, shade: impl Fn(f64, f64) -> Option<Rgb>) -> Result<(), RasterError> {
    img.check_inside(r)?;
    for py in 0..r.h {
        let v = (py as f64 + 0.5) / r.h as f64;
        for px in 0..r.w {
            let u = (px as f64 + 0.5) / r.w as f64;
            if let Some(c) = shade(u, v) {
                img.put(r.x as u32 + px, r.y as u32 + py, c);
            }
        }
    }
    Ok(())
}

/// Signed distance to the inside of the triangle (positive inside), using
/// edge normals; the vertices run clockwise on screen (y down).
fn triangle_depth(u: f64, v: f64, tri: [(f64, f64); 3]) -> f64 {
    let mut depth = f64::INFINITY;
    for i in 0..3 {
        let (ax, ay) = tri[i];
        let (bx, by) = tri[(i + 1) % 3];
        let (ex, ey) = (bx - ax, by - ay);
        let len = (ex * ex + ey * ey).sqrt();
        // inward normal for this winding
        let d = ((v - ay) * ex - (u - ax) * ey) / len;
        depth = depth.min(d);
    }
    depth
}

fn caution_pixel(u: f64, v: f64) -> Option<Rgb> {
    const TRI: [(f64, f64); 3] = [(0.5, 0.10), (0.94, 0.86), (0.06, 0.86)];
    let d = triangle_depth(u, v, TRI);
    if d < 0.0 {
        return Some(BADGE_PLATE);
    }
    if d < 0.07 {
        return Some(BLACK);
    }
    let on_stem = (u - 0.5).abs() <= 0.045;
    if on_stem && ((0.36..=0.64).contains(&v) || (0.70..=0.78).contains(&v)) {
        return Some(BLACK);
    }
    Some(CAUTION_YELLOW)
}

fn danger_pixel(u: f64, v: f64) -> Option<Rgb> {
    let (dx, dy) = ((u - 0.5).abs(), (v - 0.5).abs());
    const APOTHEM: f64 = 0.44;
    let inside = dx <= APOTHEM && dy <= APOTHEM && (dx + dy) <= APOTHEM * std::f64::consts::SQRT_2;
    if !inside {
        return Some(BADGE_PLATE);
    }
    let (sx, sy) = (u - 0.5, v - 0.5);
    let on_cross = dx <= 0.24 && dy <= 0.24 && ((sx - sy).abs() <= 0.09 || (sx + sy).abs() <= 0.09);
    Some(if on_cross { WHITE } else { DANGER_RED })
}

fn shame_pixel(u: f64, v: f64) -> Option<Rgb> {
    let on_stem = (u - 0.5).abs() <= 0.08;
    if on_stem && ((0.14..=0.62).contains(&v) || (0.72..=0.88).contains(&v)) {
        Some(WHITE)
    } else {
        Some(SHAME_MAGENTA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileStyleKind {
    /// Light street-map look used by the designer's spec images.
    Designer,
    /// Dark satellite-noise look used by the running GUI.
    Runtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileStyle {
    pub kind: TileStyleKind,
    pub world_seed: u64,
}

/// World pixel of a geo point at the given scale (flat projection).
pub fn world_px(p: &GeoPoint, meters_per_pixel: f64) -> (i64, i64) {
    let (mx, my) = p.world_m();
    ((mx / meters_per_pixel).round() as i64, (my / meters_per_pixel).round() as i64)
}

/// Longitude/latitude span of one tile at the given scale.
pub fn tile_span_deg(meters_per_pixel: f64) -> f64 {
    TILE_PX as f64 * meters_per_pixel / METERS_PER_DEGREE
}

/// Renders map background whose top-left pixel is the world pixel of `origin`.
pub fn tile_background(style: TileStyle, origin: GeoPoint, size: (u32, u32), meters_per_pixel: f64) -> Image {
    tile_background_at(style, world_px(&origin, meters_per_pixel), size)
}

/// Renders map background whose top-left pixel is world pixel `(ox, oy)`.
pub fn tile_background_at(style: TileStyle, (ox, oy): (i64, i64), size: (u32, u32)) -> Image {
    let (w, h) = size;
    let mut img = Image::new(w, h, BLACK);
    for y in 0..h {
        for x in 0..w {
            let (wx, wy) = (ox + x as i64, oy + y as i64);
            let c = match style.kind {
                TileStyleKind::Designer => designer_pixel(style.world_seed, wx, wy),
                TileStyleKind::Runtime => runtime_pixel(style.world_seed, wx, wy),
            };
            img.put(x, y, c);
        }
    }
    img
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn hash4(seed: u64, a: i64, b: i64, salt: u64) -> u64 {
    mix64(seed ^ mix64(a as u64 ^ mix64(b as u64 ^ mix64(salt))))
}

const DESIGNER_BLOCKS: [Rgb; 5] = [
    [242, 239, 233],
    [217, 208, 201],
    [205, 235, 197],
    [181, 211, 223],
    [228, 224, 218],
];

fn designer_pixel(seed: u64, wx: i64, wy: i64) -> Rgb {
    let (tx, ty) = (wx.div_euclid(TILE_PX), wy.div_euclid(TILE_PX));
    let (lx, ly) = (wx.rem_euclid(TILE_PX), wy.rem_euclid(TILE_PX));
    // major streets along tile edges, 12 px wide across the seam
    let edge = |l: i64| !(6..TILE_PX - 6).contains(&l);
    if edge(lx) || edge(ly) {
        return WHITE;
    }
    let casing = |l: i64| l == 6 || l == TILE_PX - 7;
    if casing(lx) || casing(ly) {
        return [200, 196, 190];
    }
    let h = hash4(seed, tx, ty, 1);
    let half = TILE_PX / 2;
    if (h & 1 == 1 && (half - 3..half + 3).contains(&lx)) || (h & 2 == 2 && (half - 3..half + 3).contains(&ly)) {
        return [252, 252, 250];
    }
    let block = hash4(seed, tx * 2 + (lx >= half) as i64, ty * 2 + (ly >= half) as i64, 2);
    let base = DESIGNER_BLOCKS[(block % DESIGNER_BLOCKS.len() as u64) as usize];
    // building footprints on a 32 px lot grid
    let lot = hash4(seed, wx.div_euclid(32), wy.div_euclid(32), 3);
    let (mx, my) = (wx.rem_euclid(32), wy.rem_euclid(32));
    if base == DESIGNER_BLOCKS[1] && lot % 3 != 0 && (4..28).contains(&mx) && (4..28).contains(&my) {
        return [196, 186, 178];
    }
    base
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, wx: i64, wy: i64, cell: i64, octave: u64) -> f64 {
    let (cx, cy) = (wx.div_euclid(cell), wy.div_euclid(cell));
    let fx = smooth((wx.rem_euclid(cell) as f64 + 0.5) / cell as f64);
    let fy = smooth((wy.rem_euclid(cell) as f64 + 0.5) / cell as f64);
    let corner = |x: i64, y: i64| (hash4(seed, x, y, 10 + octave) >> 11) as f64 / (1u64 << 53) as f64;
    let top = corner(cx, cy) * (1.0 - fx) + corner(cx + 1, cy) * fx;
    let bottom = corner(cx, cy + 1) * (1.0 - fx) + corner(cx + 1, cy + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn runtime_pixel(seed: u64, wx: i64, wy: i64) -> Rgb {
    let (lx, ly) = (wx.rem_euclid(TILE_PX), wy.rem_euclid(TILE_PX));
    if !(3..TILE_PX - 3).contains(&lx) || !(3..TILE_PX - 3).contains(&ly) {
        return [96, 94, 88];
    }
    let n = 0.55 * value_noise(seed, wx, wy, 64, 0)
        + 0.30 * value_noise(seed, wx, wy, 16, 1)
        + 0.15 * value_noise(seed, wx, wy, 4, 2);
    const STOPS: [(f64, [f64; 3]); 3] = [(0.0, [24.0, 52.0, 26.0]), (0.5, [58.0, 86.0, 38.0]), (1.0, [118.0, 94.0, 58.0])];
    let (lo, hi) = if n < 0.5 { (STOPS[0], STOPS[1]) } else { (STOPS[1], STOPS[2]) };
    let t = (n - lo.0) / (hi.0 - lo.0);
    let mut c = [0u8; 3];
    for i in 0..3 {
        c[i] = (lo.1[i] + (hi.1[i] - lo.1[i]) * t).round() as u8;
    }
    c
}

/// BT.601 luma, integer rounding.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let pixels = img
        .pixels
        .chunks_exact(3)
        .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
        .collect();
    GrayImage { width: img.width, height: img.height, pixels }
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, RasterError> {
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Sub)
        .write_image(&img.pixels, img.width, img.height, image::ExtendedColorType::Rgb8)
        .map_err(|e| RasterError::Encode(e.to_string()))?;
    Ok(buf)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, RasterError> {
    let dynimg = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| RasterError::Decode(e.to_string()))?;
    Ok(Image::from_rgb_image(dynimg.to_rgb8()))
}

pub fn write_png(img: &Image, path: &Path) -> Result<(), RasterError> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<Image, RasterError> {
    decode_png(&std::fs::read(path)?)
}

pub fn write_gray_png(img: &GrayImage, path: &Path) -> Result<(), RasterError> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Sub)
        .write_image(&img.pixels, img.width, img.height, image::ExtendedColorType::L8)
        .map_err(|e| RasterError::Encode(e.to_string()))?;
    std::fs::write(path, buf.into_inner())?;
    Ok(())
}

pub fn read_gray_png(path: &Path) -> Result<GrayImage, RasterError> {
    let bytes = std::fs::read(path)?;
    let dynimg = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| RasterError::Decode(e.to_string()))?;
    Ok(GrayImage::from_luma_image(dynimg.to_luma8()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_formula() {
        let g = to_grayscale(&Image::new(4, 3, WHITE));
        assert!(g.pixels().iter().all(|&p| p == 255));
        let g = to_grayscale(&Image::new(4, 3, [255, 0, 0]));
        assert!(g.pixels().iter().all(|&p| p == 76));
        let g = to_grayscale(&Image::new(2, 2, CAUTION_YELLOW));
        assert_eq!(g.get(0, 0), 196);
    }

    #[test]
    fn grayscale_idempotent_on_gray() {
        let mut img = Image::new(16, 1, BLACK);
        for x in 0..16 {
            img.put(x, 0, [x as u8 * 17, x as u8 * 5, 255 - x as u8 * 11]);
        }
        let g = to_grayscale(&img);
        assert_eq!(to_grayscale(&g.to_rgb()), g);
    }

    #[test]
    fn glyph_out_of_bounds() {
        let mut img = Image::new(32, 32, BLACK);
        assert!(matches!(
            draw_glyph(&mut img, GlyphClass::Danger, Rect::new(20, 0, 16, 16)),
            Err(RasterError::OutOfBounds { .. })
        ));
        assert!(draw_glyph(&mut img, GlyphClass::Danger, Rect::new(-1, 0, 8, 8)).is_err());
        assert!(draw_glyph(&mut img, GlyphClass::Danger, Rect::new(16, 16, 16, 16)).is_ok());
    }

    #[test]
    fn glyph_deterministic() {
        for cls in [GlyphClass::Caution, GlyphClass::Danger, GlyphClass::DroneMarker, GlyphClass::Shame] {
            let mut a = Image::new(80, 80, WHITE);
            let mut b = Image::new(80, 80, WHITE);
            draw_glyph(&mut a, cls, Rect::new(8, 8, 64, 64)).unwrap();
            draw_glyph(&mut b, cls, Rect::new(8, 8, 64, 64)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn drone_marker_is_transparent_at_corners() {
        let mut img = Image::new(40, 40, [1, 2, 3]);
        draw_drone_marker(&mut img, Rect::new(0, 0, 40, 40), 3).unwrap();
        assert_eq!(img.get(0, 0), [1, 2, 3]);
        assert_eq!(img.get(20, 20), WHITE);
    }

    #[test]
    fn crop_and_paste() {
        let mut img = Image::new(10, 10, BLACK);
        img.put(3, 4, WHITE);
        let c = img.crop(Rect::new(3, 4, 2, 2)).unwrap();
        assert_eq!(c.get(0, 0), WHITE);
        let mut dst = Image::new(4, 4, BLACK);
        dst.paste(&c, 3, 3);
        assert_eq!(dst.get(3, 3), WHITE);
        assert!(img.crop(Rect::new(9, 9, 2, 2)).is_err());
    }

    #[test]
    fn tiles_deterministic() {
        let style = TileStyle { kind: TileStyleKind::Runtime, world_seed: 9 };
        let o = GeoPoint { lat: 40.705, lon: -74.01 };
        assert_eq!(tile_background(style, o, (64, 48), 2.0), tile_background(style, o, (64, 48), 2.0));
    }

    #[test]
    fn png_rejects_garbage() {
        assert!(matches!(decode_png(b"not a png"), Err(RasterError::Decode(_))));
    }
}
