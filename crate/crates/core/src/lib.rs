//! Building blocks for turning OpenStreetMap tower points and georeferenced
//! imagery into an object-detection dataset, and for scoring detections on
//! it with COCO-style average precision.
//!
//! The usual flow is [`ingest`] (tag filter, study region, urban exclusion)
//! then [`pipeline::chip_scene`] per raster, [`raster::select_samples`],
//! [`dataset::to_coco`], and finally [`eval::evaluate`]. [`simkit`] stands in
//! for imagery and a trained detector when neither is available.

pub mod dataset;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod simkit;
