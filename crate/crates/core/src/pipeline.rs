//! Per-scene chipping: resample, buffer tower points into boxes, cut the
//! chip grid and assign boxes to chips.

use crate::geo::{buffer_point, geobox_to_pixelbox, PixelBox};
use crate::ingest::TowerFeature;
use crate::raster::{assign_annotations, chip_grid, resample_to_gsd, validate_buffer, Chip, RasterError, RasterImage};

pub const DEFAULT_BUFFER_RADIUS_M: f64 = 25.0;
pub const DEFAULT_TARGET_GSD_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipParams {
    pub buffer_radius_m: f64,
    pub target_gsd_m: f64,
    pub chip_px: u32,
}

impl Default for ChipParams {
    fn default() -> Self {
        Self {
            buffer_radius_m: DEFAULT_BUFFER_RADIUS_M,
            target_gsd_m: DEFAULT_TARGET_GSD_M,
            chip_px: crate::raster::DEFAULT_CHIP_PX,
        }
    }
}

impl ChipParams {
    pub fn validate(&self) -> Result<(), RasterError> {
        validate_buffer(self.buffer_radius_m, self.target_gsd_m, self.chip_px)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneChips {
    pub chips: Vec<Chip>,
    /// Features whose point lies on the (resampled) raster.
    pub towers_in_scene: usize,
    /// Boxes whose center missed every full chip window.
    pub dropped: usize,
}

/// Scene-space box for every feature lying on the raster.
pub fn tower_boxes(r: &RasterImage, features: &[TowerFeature], radius_m: f64) -> Result<Vec<PixelBox>, RasterError> {
    let (w, h) = (f64::from(r.width), f64::from(r.height));
    let mut boxes = Vec::new();
    for f in features {
        let (x, y) = r.transform.geo_to_image(&f.point);
        if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
            continue;
        }
        let gb = buffer_point(&f.point, radius_m)?;
        boxes.push(geobox_to_pixelbox(&r.transform, &gb)?);
    }
    Ok(boxes)
}

pub fn chip_scene(r: &RasterImage, features: &[TowerFeature], params: &ChipParams) -> Result<SceneChips, RasterError> {
    params.validate()?;
    let resampled = resample_to_gsd(r, params.target_gsd_m)?;
    let boxes = tower_boxes(&resampled, features, params.buffer_radius_m)?;
    let windows = chip_grid(&resampled, params.chip_px)?;
    let (chips, dropped) = assign_annotations(&resampled, &windows, &boxes);
    Ok(SceneChips { chips, towers_in_scene: boxes.len(), dropped })
}
