//! COCO dataset assembly, seeded train/test splitting, latitude/longitude
//! band stratification, the experiment matrix, and training-config emission.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::raster::{Chip, ChipPlan};
use crate::rng::SplitMix64;

pub const TOWER_CATEGORY_ID: u32 = 1;
pub const TOWER_CATEGORY_NAME: &str = "cell_tower";
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("chip {scene}_{col}_{row} appears more than once in the plan")]
    DuplicateChip { scene: String, col: u32, row: u32 },
    #[error("dataset has no images")]
    EmptyDataset,
    #[error("train fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("image {0} has no geo_center")]
    MissingGeoCenter(u64),
    #[error("unknown training variant `{0}` (expected RN50-HPT, RN50-RI, RN50-INT or RN101-INT)")]
    UnknownVariant(String),
    #[error("unknown band `{0}`")]
    UnknownBand(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("COCO JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_center: Option<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl Default for CocoDataset {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            annotations: Vec::new(),
            categories: vec![CocoCategory { id: TOWER_CATEGORY_ID, name: TOWER_CATEGORY_NAME.into() }],
        }
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (v * k).round() / k
}

impl CocoDataset {
    pub fn from_json(bytes: &[u8]) -> Result<Self, DatasetError> {
        let ds: CocoDataset = serde_json::from_slice(bytes)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if !image_ids.insert(img.id) {
                return Err(DatasetError::Invalid(format!("duplicate image id {}", img.id)));
            }
            if let Some(c) = &img.geo_center {
                c.validate().map_err(|e| DatasetError::Invalid(format!("image {}: {e}", img.id)))?;
            }
        }
        let mut ann_ids = HashSet::new();
        for a in &self.annotations {
            if !ann_ids.insert(a.id) {
                return Err(DatasetError::Invalid(format!("duplicate annotation id {}", a.id)));
            }
            if !image_ids.contains(&a.image_id) {
                return Err(DatasetError::Invalid(format!("annotation {} references missing image {}", a.id, a.image_id)));
            }
            let [_, _, w, h] = a.bbox;
            if (a.area - w * h).abs() > 0.01 + 1e-9 * a.area.abs() {
                return Err(DatasetError::Invalid(format!("annotation {} area {} != w*h {}", a.id, a.area, w * h)));
            }
        }
        Ok(())
    }

    pub fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &CocoAnnotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }

    /// Sub-dataset restricted to `ids`, preserving image and annotation order.
    pub fn subset(&self, ids: &HashSet<u64>) -> CocoDataset {
        CocoDataset {
            images: self.images.iter().filter(|i| ids.contains(&i.id)).cloned().collect(),
            annotations: self.annotations.iter().filter(|a| ids.contains(&a.image_id)).cloned().collect(),
            categories: self.categories.clone(),
        }
    }
}

fn chip_image(chip: &Chip, id: u64) -> CocoImage {
    CocoImage {
        id,
        file_name: format!("{}.jpg", chip.stem()),
        width: chip.size,
        height: chip.size,
        geo_center: Some(chip.geo_center()),
    }
}

/// Converts a chip plan to COCO. Ids start at 1 and follow (scene_id, chip
/// index) order; boxes are rounded to one decimal.
pub fn to_coco(plan: &ChipPlan, include_negatives: bool) -> Result<CocoDataset, DatasetError> {
    let mut seen = HashSet::new();
    for c in plan.positives.iter().chain(&plan.negatives) {
        if !seen.insert((c.scene_id.as_str(), c.index)) {
            return Err(DatasetError::DuplicateChip { scene: c.scene_id.clone(), col: c.index.col, row: c.index.row });
        }
    }

    let mut chips: Vec<&Chip> = plan.positives.iter().collect();
    if include_negatives {
        chips.extend(&plan.negatives);
    }
    chips.sort_by(|a, b| (&a.scene_id, a.index).cmp(&(&b.scene_id, b.index)));

    let mut ds = CocoDataset::default();
    let mut next_ann = 1;
    for (i, chip) in chips.into_iter().enumerate() {
        let image_id = i as u64 + 1;
        ds.images.push(chip_image(chip, image_id));
        for b in &chip.annotations {
            let bbox = [round_to(b.x, 1), round_to(b.y, 1), round_to(b.w, 1), round_to(b.h, 1)];
            ds.annotations.push(CocoAnnotation {
                id: next_ann,
                image_id,
                category_id: TOWER_CATEGORY_ID,
                bbox,
                area: round_to(bbox[2] * bbox[3], 2),
                iscrowd: 0,
            });
            next_ann += 1;
        }
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: CocoDataset,
    pub test: CocoDataset,
}

/// Image-level split: shuffle ids with the seeded stream, the first
/// `floor(n * fraction)` go to train. Both halves keep input order.
pub fn split_train_test(ds: &CocoDataset, train_fraction: f64, seed: u64) -> Result<SplitResult, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    if ds.images.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = ds.images.len();
    // The epsilon absorbs products like 7 * 0.1 landing just under an integer.
    let n_train = ((n as f64) * train_fraction + 1e-9).floor() as usize;
    let mut ids: Vec<u64> = ds.images.iter().map(|i| i.id).collect();
    SplitMix64::new(seed).shuffle(&mut ids);
    let train_ids: HashSet<u64> = ids[..n_train].iter().copied().collect();
    let test_ids: HashSet<u64> = ids[n_train..].iter().copied().collect();
    Ok(SplitResult { train: ds.subset(&train_ids), test: ds.subset(&test_ids) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Latitude,
    Longitude,
}

impl Axis {
    pub fn coordinate(self, p: &GeoPoint) -> f64 {
        match self {
            Axis::Latitude => p.lat,
            Axis::Longitude => p.lon,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Latitude => "lat",
            Axis::Longitude => "lon",
        })
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lat" | "latitude" => Ok(Axis::Latitude),
            "lon" | "longitude" => Ok(Axis::Longitude),
            other => Err(format!("unknown axis `{other}` (expected lat or lon)")),
        }
    }
}

/// Interval `(lower, upper]` on one axis; `[lower, upper]` when
/// `lower_inclusive` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBand {
    pub name: String,
    pub axis: Axis,
    pub lower: f64,
    pub upper: f64,
    pub lower_inclusive: bool,
}

impl RegionBand {
    pub fn contains(&self, v: f64) -> bool {
        v <= self.upper && (v > self.lower || (self.lower_inclusive && v == self.lower))
    }
}

/// The six latitude/longitude bands. Adjacent bands share a boundary value,
/// which belongs to the band it is the upper edge of; the lowest band of each
/// axis is closed on both sides. "Upper" longitude is the westernmost band.
pub fn default_bands() -> Vec<RegionBand> {
    let band = |name: &str, axis, lower, upper, lower_inclusive| RegionBand {
        name: name.to_string(),
        axis,
        lower,
        upper,
        lower_inclusive,
    };
    vec![
        band("lat_upper", Axis::Latitude, -2.0, 14.0, false),
        band("lat_middle", Axis::Latitude, -16.5, -2.0, false),
        band("lat_lower", Axis::Latitude, -28.0, -16.5, true),
        band("lon_upper", Axis::Longitude, 18.0, 31.0, true),
        band("lon_middle", Axis::Longitude, 31.0, 41.0, false),
        band("lon_lower", Axis::Longitude, 41.0, 58.0, false),
    ]
}

pub fn bands_for_axis(bands: &[RegionBand], axis: Axis) -> Vec<RegionBand> {
    bands.iter().filter(|b| b.axis == axis).cloned().collect()
}

/// First band on `axis` (in list order) containing the point's coordinate.
pub fn band_of<'a>(bands: &'a [RegionBand], axis: Axis, p: &GeoPoint) -> Option<&'a RegionBand> {
    let v = axis.coordinate(p);
    bands.iter().find(|b| b.axis == axis && b.contains(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    pub by_band: BTreeMap<String, CocoDataset>,
    /// `(image_id, axis, band name)` for every in-band image.
    pub assignments: Vec<(u64, Axis, String)>,
    /// Images that fell outside every band of an axis.
    pub out_of_band: Vec<(u64, Axis)>,
}

pub fn stratify(ds: &CocoDataset, bands: &[RegionBand]) -> Result<Strata, DatasetError> {
    let axes: BTreeSet<Axis> = bands.iter().map(|b| b.axis).collect();
    let mut members: BTreeMap<&str, HashSet<u64>> = bands.iter().map(|b| (b.name.as_str(), HashSet::new())).collect();
    let mut assignments = Vec::new();
    let mut out_of_band = Vec::new();
    for img in &ds.images {
        let center = img.geo_center.ok_or(DatasetError::MissingGeoCenter(img.id))?;
        for &axis in &axes {
            match band_of(bands, axis, &center) {
                Some(b) => {
                    members.get_mut(b.name.as_str()).expect("band registered").insert(img.id);
                    assignments.push((img.id, axis, b.name.clone()));
                }
                None => out_of_band.push((img.id, axis)),
            }
        }
    }
    if !out_of_band.is_empty() {
        log::warn!("{} image/axis pairs fall outside every band", out_of_band.len());
    }
    let by_band = members.into_iter().map(|(name, ids)| (name.to_string(), ds.subset(&ids))).collect();
    Ok(Strata { by_band, assignments, out_of_band })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Selector {
    All,
    Band(String),
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::All => f.write_str("all"),
            Selector::Band(b) => f.write_str(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixCell {
    pub train: Selector,
    pub eval: String,
}

impl MatrixCell {
    pub fn in_sample(&self) -> bool {
        match &self.train {
            Selector::All => true,
            Selector::Band(b) => *b == self.eval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExperimentMatrix {
    pub cells: Vec<MatrixCell>,
}

/// Every (train, eval) band pair within each axis, then, if requested, one
/// ("all", eval) baseline row per band. Axes appear in first-seen order.
pub fn build_matrix(bands: &[RegionBand], include_baseline: bool) -> ExperimentMatrix {
    let mut axes: Vec<Axis> = Vec::new();
    for b in bands {
        if !axes.contains(&b.axis) {
            axes.push(b.axis);
        }
    }
    let mut cells = Vec::new();
    for axis in axes {
        let group: Vec<&RegionBand> = bands.iter().filter(|b| b.axis == axis).collect();
        for train in &group {
            for eval in &group {
                cells.push(MatrixCell { train: Selector::Band(train.name.clone()), eval: eval.name.clone() });
            }
        }
        if include_baseline {
            cells.extend(group.iter().map(|eval| MatrixCell { train: Selector::All, eval: eval.name.clone() }));
        }
    }
    ExperimentMatrix { cells }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingVariant {
    Rn50Hpt,
    Rn50Ri,
    Rn50Int,
    Rn101Int,
}

impl FromStr for TrainingVariant {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, DatasetError> {
        match s {
            "RN50-HPT" => Ok(Self::Rn50Hpt),
            "RN50-RI" => Ok(Self::Rn50Ri),
            "RN50-INT" => Ok(Self::Rn50Int),
            "RN101-INT" => Ok(Self::Rn101Int),
            other => Err(DatasetError::UnknownVariant(other.to_string())),
        }
    }
}

pub const TRAINING_BATCH_SIZE: u32 = 8;

/// Detectron2-style `KEY: value` lines for one backbone configuration.
pub fn emit_training_config(variant: TrainingVariant) -> String {
    use TrainingVariant::*;
    let (weights, depth, norm, roi, freeze, lr, steps, max_iter) = match variant {
        Rn50Hpt => ("HPT", 50, "SyncBN", "Res5ROIHeadsExtraNorm", 0, "0.15", "(9500,)", 12500),
        Rn50Ri => ("-", 50, "SyncBN", "Res5ROIHeads", 0, "0.02", "(60000, 80000)", 90000),
        Rn50Int => ("INT RN-50", 50, "FrozenBN", "Res5ROIHeads", 2, "0.02", "(9500,)", 12500),
        Rn101Int => ("INT RN-101", 101, "FrozenBN", "Res5ROIHeads", 2, "0.02", "(9500,)", 12500),
    };
    format!(
        "MODEL.WEIGHTS: {weights}\n\
         MODEL.RESNETS.DEPTH: {depth}\n\
         MODEL.RESNETS.NORM: {norm}\n\
         MODEL.ROI_HEADS.NAME: {roi}\n\
         MODEL.BACKBONE.FREEZE_AT: {freeze}\n\
         SOLVER.BASE_LR: {lr}\n\
         SOLVER.STEPS: {steps}\n\
         SOLVER.MAX_ITER: {max_iter}\n\
         SOLVER.IMS_PER_BATCH: {TRAINING_BATCH_SIZE}\n"
    )
}
