//! Georeferenced rasters: loading with world files, GSD resampling, the
//! non-overlapping chip grid, center-point annotation assignment and
//! per-scene positive/negative sample selection.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, GeoTransform, PixelBox, METERS_PER_DEGREE};
use crate::rng::{derive_seed, key_of, SplitMix64};

pub const DEFAULT_CHIP_PX: u32 = 512;
pub const JPEG_QUALITY: u8 = 95;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid GSD: {0}")]
    InvalidGsd(String),
    #[error("raster has no pixels")]
    EmptyRaster,
    #[error("raster {width}x{height} is smaller than one {chip_px}px chip")]
    RasterTooSmall { width: u32, height: u32, chip_px: u32 },
    #[error("buffer of {radius_px} px exceeds a quarter chip ({limit_px} px)")]
    BufferTooLarge { radius_px: f64, limit_px: f64 },
    #[error("pixel buffer holds {actual} samples, expected {expected}")]
    SampleCount { expected: usize, actual: usize },
    #[error("world file {path}: {reason}")]
    WorldFile { path: PathBuf, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image codec failure on {path}: {source}")]
    Codec { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io { path: path.to_path_buf(), source }
}

/// 8-bit RGB raster, row-major, band-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub transform: GeoTransform,
    pub scene_id: String,
}

impl RasterImage {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        transform: GeoTransform,
        scene_id: impl Into<String>,
    ) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(RasterError::SampleCount { expected, actual: pixels.len() });
        }
        transform.validate()?;
        Ok(Self { width, height, pixels, transform, scene_id: scene_id.into() })
    }

    pub fn center(&self) -> GeoPoint {
        self.transform.image_to_geo(f64::from(self.width) / 2.0, f64::from(self.height) / 2.0)
    }

    /// Ground sample distance along x, in meters, at the scene-center latitude.
    pub fn gsd_m(&self) -> f64 {
        self.transform.px_size_x * METERS_PER_DEGREE * self.center().lat.to_radians().cos()
    }

    fn sample(&self, x: usize, y: usize, band: usize) -> f64 {
        f64::from(self.pixels[(y * self.width as usize + x) * 3 + band])
    }
}

/// Rescales to `target_gsd_m` with bilinear interpolation. The geographic
/// extent is preserved exactly; when the output size equals the input size
/// the raster is returned unchanged.
pub fn resample_to_gsd(r: &RasterImage, target_gsd_m: f64) -> Result<RasterImage, RasterError> {
    if !(target_gsd_m.is_finite() && target_gsd_m > 0.0) {
        return Err(RasterError::InvalidGsd(format!("target {target_gsd_m} m")));
    }
    if r.width == 0 || r.height == 0 {
        return Err(RasterError::EmptyRaster);
    }
    let source = r.gsd_m();
    if !(source.is_finite() && source > 0.0) {
        return Err(RasterError::InvalidGsd(format!("source {source} m")));
    }
    let scale = source / target_gsd_m;
    let out_w = (scale * f64::from(r.width)).round() as u32;
    let out_h = (scale * f64::from(r.height)).round() as u32;
    if out_w == 0 || out_h == 0 {
        return Err(RasterError::EmptyRaster);
    }
    if out_w == r.width && out_h == r.height {
        return Ok(r.clone());
    }

    let (in_w, in_h) = (r.width as usize, r.height as usize);
    let fx = in_w as f64 / f64::from(out_w);
    let fy = in_h as f64 / f64::from(out_h);
    let mut pixels = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for oy in 0..out_h as usize {
        let sy = ((oy as f64 + 0.5) * fy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let ty = sy - y0 as f64;
        for ox in 0..out_w as usize {
            let sx = ((ox as f64 + 0.5) * fx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let tx = sx - x0 as f64;
            for band in 0..3 {
                let top = r.sample(x0, y0, band) * (1.0 - tx) + r.sample(x1, y0, band) * tx;
                let bottom = r.sample(x0, y1, band) * (1.0 - tx) + r.sample(x1, y1, band) * tx;
                pixels.push((top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8);
            }
        }
    }

    let gt = &r.transform;
    let px_x = gt.px_size_x * fx;
    let px_y = gt.px_size_y * fy;
    let transform = GeoTransform::new(
        gt.origin_x - 0.5 * gt.px_size_x + 0.5 * px_x,
        gt.origin_y - 0.5 * gt.px_size_y + 0.5 * px_y,
        px_x,
        px_y,
    )?;
    RasterImage::new(out_w, out_h, pixels, transform, r.scene_id.clone())
}

/// A buffer radius may span at most a quarter of the chip, in pixels.
pub fn validate_buffer(radius_m: f64, gsd_m: f64, chip_px: u32) -> Result<(), RasterError> {
    if !(radius_m > 0.0 && gsd_m > 0.0 && chip_px > 0) {
        return Err(RasterError::InvalidGsd(format!(
            "buffer check needs positive inputs (radius {radius_m}, gsd {gsd_m}, chip {chip_px})"
        )));
    }
    let radius_px = radius_m / gsd_m;
    let limit_px = f64::from(chip_px) / 4.0;
    if radius_px > limit_px {
        return Err(RasterError::BufferTooLarge { radius_px, limit_px });
    }
    Ok(())
}

/// Grid position of a chip. Orders row-major (row, then column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChipIndex {
    pub col: u32,
    pub row: u32,
}

impl Ord for ChipIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.row, self.col).cmp(&(other.row, other.col))
    }
}

impl PartialOrd for ChipIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChipWindow {
    pub index: ChipIndex,
    pub x_off: u32,
    pub y_off: u32,
    pub size: u32,
}

impl ChipWindow {
    /// Closed-interval containment of an image-space point.
    fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, y0) = (f64::from(self.x_off), f64::from(self.y_off));
        let s = f64::from(self.size);
        x >= x0 && x <= x0 + s && y >= y0 && y <= y0 + s
    }
}

/// Full windows at multiples of `chip_px`, row-major; partial strips dropped.
pub fn chip_grid(r: &RasterImage, chip_px: u32) -> Result<Vec<ChipWindow>, RasterError> {
    if chip_px == 0 || r.width < chip_px || r.height < chip_px {
        return Err(RasterError::RasterTooSmall { width: r.width, height: r.height, chip_px });
    }
    let (cols, rows) = (r.width / chip_px, r.height / chip_px);
    Ok((0..rows)
        .flat_map(|row| {
            (0..cols).map(move |col| ChipWindow {
                index: ChipIndex { col, row },
                x_off: col * chip_px,
                y_off: row * chip_px,
                size: chip_px,
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub scene_id: String,
    pub index: ChipIndex,
    pub offset: (u32, u32),
    pub size: u32,
    pub pixels: Vec<u8>,
    /// Chip-local boxes, clipped to `[0, size]`.
    pub annotations: Vec<PixelBox>,
    pub transform: GeoTransform,
}

impl Chip {
    pub fn is_positive(&self) -> bool {
        !self.annotations.is_empty()
    }

    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.scene_id, self.index.col, self.index.row)
    }

    /// WGS84 position of the chip's geometric center.
    pub fn geo_center(&self) -> GeoPoint {
        let half = f64::from(self.size) / 2.0;
        self.transform.image_to_geo(half, half)
    }
}

fn cut_window(r: &RasterImage, w: &ChipWindow) -> Vec<u8> {
    let stride = r.width as usize * 3;
    let row_bytes = w.size as usize * 3;
    let mut out = Vec::with_capacity(row_bytes * w.size as usize);
    for y in w.y_off as usize..(w.y_off + w.size) as usize {
        let start = y * stride + w.x_off as usize * 3;
        out.extend_from_slice(&r.pixels[start..start + row_bytes]);
    }
    out
}

/// Cuts every window into a chip and hands each scene-space box to the
/// window holding its center. Windows are treated as closed squares and the
/// first hit in (row, col) order wins, so a center on a shared edge goes to
/// the upper/left window. Returns the chips and the number of boxes whose
/// center fell in no window.
pub fn assign_annotations(r: &RasterImage, windows: &[ChipWindow], boxes: &[PixelBox]) -> (Vec<Chip>, usize) {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| windows[i].index);

    let mut per_window: Vec<Vec<PixelBox>> = vec![Vec::new(); windows.len()];
    let mut dropped = 0;
    for b in boxes {
        let (cx, cy) = b.center();
        let hit = order.iter().copied().find(|&i| windows[i].contains(cx, cy));
        let clipped = hit.and_then(|i| {
            let w = &windows[i];
            let s = f64::from(w.size);
            b.translate(-f64::from(w.x_off), -f64::from(w.y_off))
                .clip(0.0, 0.0, s, s)
                .map(|c| (i, c))
        });
        match clipped {
            Some((i, c)) => per_window[i].push(c),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("scene {}: {dropped} boxes centred outside every full chip window", r.scene_id);
    }

    let chips = order
        .into_iter()
        .map(|i| {
            let w = &windows[i];
            Chip {
                scene_id: r.scene_id.clone(),
                index: w.index,
                offset: (w.x_off, w.y_off),
                size: w.size,
                pixels: cut_window(r, w),
                annotations: std::mem::take(&mut per_window[i]),
                transform: r.transform.shifted(f64::from(w.x_off), f64::from(w.y_off)),
            }
        })
        .collect();
    (chips, dropped)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChipPlan {
    pub positives: Vec<Chip>,
    pub negatives: Vec<Chip>,
}

impl ChipPlan {
    /// Keeps every chip, split by label presence, sorted by (scene, index).
    pub fn partition(chips: Vec<Chip>) -> ChipPlan {
        let (mut positives, mut negatives): (Vec<_>, Vec<_>) = chips.into_iter().partition(Chip::is_positive);
        positives.sort_by(|a, b| (&a.scene_id, a.index).cmp(&(&b.scene_id, b.index)));
        negatives.sort_by(|a, b| (&a.scene_id, a.index).cmp(&(&b.scene_id, b.index)));
        ChipPlan { positives, negatives }
    }

    pub fn annotation_count(&self) -> usize {
        self.positives.iter().map(|c| c.annotations.len()).sum()
    }

    pub fn merge(&mut self, other: ChipPlan) {
        self.positives.extend(other.positives);
        self.negatives.extend(other.negatives);
        self.positives.sort_by(|a, b| (&a.scene_id, a.index).cmp(&(&b.scene_id, b.index)));
        self.negatives.sort_by(|a, b| (&a.scene_id, a.index).cmp(&(&b.scene_id, b.index)));
    }
}

/// One positive and one negative chip per scene, drawn uniformly. Each scene
/// draws from its own stream `derive_seed(seed, fnv1a(scene_id))`, positive
/// first, so the result does not depend on input order.
pub fn select_samples(chips: Vec<Chip>, seed: u64) -> ChipPlan {
    let mut scenes: BTreeMap<String, (Vec<Chip>, Vec<Chip>)> = BTreeMap::new();
    for c in chips {
        let entry = scenes.entry(c.scene_id.clone()).or_default();
        if c.is_positive() {
            entry.0.push(c);
        } else {
            entry.1.push(c);
        }
    }
    let mut plan = ChipPlan::default();
    for (scene, (mut pos, mut neg)) in scenes {
        pos.sort_by_key(|c| c.index);
        neg.sort_by_key(|c| c.index);
        let mut rng = SplitMix64::new(derive_seed(seed, key_of(&scene)));
        if !pos.is_empty() {
            let i = rng.below(pos.len());
            plan.positives.push(pos.swap_remove(i));
        }
        if !neg.is_empty() {
            let i = rng.below(neg.len());
            plan.negatives.push(neg.swap_remove(i));
        }
    }
    plan
}

/// Six-line ESRI world file; values use the shortest round-trip decimal form.
pub fn world_file_text(gt: &GeoTransform) -> String {
    gt.world_terms().iter().map(|v| format!("{v}\n")).collect()
}

pub fn read_world_file(path: &Path) -> Result<GeoTransform, RasterError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |reason: String| RasterError::WorldFile { path: path.to_path_buf(), reason };
    let values = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().map_err(|e| bad(format!("`{l}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let terms: [f64; 6] = values
        .try_into()
        .map_err(|v: Vec<f64>| bad(format!("expected 6 values, found {}", v.len())))?;
    GeoTransform::from_world_terms(terms).map_err(|e| bad(e.to_string()))
}

fn world_file_candidates(image: &Path) -> Vec<PathBuf> {
    let ext = image.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut exts: Vec<String> = match ext.as_str() {
        "jpg" | "jpeg" => vec!["jgw".into()],
        "png" => vec!["pgw".into()],
        "tif" | "tiff" => vec!["tfw".into()],
        _ => vec![],
    };
    if ext.len() >= 2 {
        let mut chars = ext.chars();
        let first = chars.next().unwrap();
        let last = chars.last().unwrap();
        exts.push(format!("{first}{last}w"));
    }
    exts.push("wld".into());
    exts.into_iter().map(|e| image.with_extension(e)).collect()
}

fn read_scene_id(image: &Path) -> Result<Option<String>, RasterError> {
    let meta = image.with_extension("meta");
    if !meta.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&meta).map_err(io_err(&meta))?;
    Ok(text.lines().find_map(|l| {
        l.split_once('=')
            .filter(|(k, _)| k.trim() == "scene_id")
            .map(|(_, v)| v.trim().to_string())
            .filter(|v| !v.is_empty())
    }))
}

/// Loads a PNG/JPEG/TIFF with its world file and optional `.meta` sidecar.
/// Without a sidecar the scene id is the file stem.
pub fn load_raster(path: &Path) -> Result<RasterImage, RasterError> {
    let img = image::open(path)
        .map_err(|source| RasterError::Codec { path: path.to_path_buf(), source })?
        .to_rgb8();
    let world = world_file_candidates(path)
        .into_iter()
        .find(|p| p.exists())
        .ok_or_else(|| RasterError::WorldFile { path: path.to_path_buf(), reason: "no world file found".into() })?;
    let transform = read_world_file(&world)?;
    let scene_id = match read_scene_id(path)? {
        Some(id) => id,
        None => path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene").to_string(),
    };
    let (w, h) = img.dimensions();
    RasterImage::new(w, h, img.into_raw(), transform, scene_id)
}

/// Writes the raster as PNG plus `.pgw` and `.meta` sidecars.
pub fn save_raster_png(r: &RasterImage, path: &Path) -> Result<(), RasterError> {
    image::save_buffer(path, &r.pixels, r.width, r.height, ExtendedColorType::Rgb8)
        .map_err(|source| RasterError::Codec { path: path.to_path_buf(), source })?;
    let world = path.with_extension("pgw");
    fs::write(&world, world_file_text(&r.transform)).map_err(io_err(&world))?;
    let meta = path.with_extension("meta");
    fs::write(&meta, format!("scene_id={}\n", r.scene_id)).map_err(io_err(&meta))?;
    Ok(())
}

/// Writes `<scene>_<col>_<row>.jpg` (quality 95) and its `.jgw` world file
/// into an existing directory.
pub fn write_chip(c: &Chip, dir: &Path) -> Result<PathBuf, RasterError> {
    let path = dir.join(format!("{}.jpg", c.stem()));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    JpegEncoder::new_with_quality(BufWriter::new(file), JPEG_QUALITY)
        .encode(&c.pixels, c.size, c.size, ExtendedColorType::Rgb8)
        .map_err(|source| RasterError::Codec { path: path.clone(), source })?;
    let world = path.with_extension("jgw");
    fs::write(&world, world_file_text(&c.transform)).map_err(io_err(&world))?;
    Ok(path)
}
