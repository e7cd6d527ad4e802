use std::fmt;
use std::path::Path;

use serde::Deserialize;
use towerforge::dataset::{default_bands, Axis, RegionBand, DEFAULT_TRAIN_FRACTION};
use towerforge::geo::GeoBox;
use towerforge::ingest::StudyRegion;
use towerforge::pipeline::{ChipParams, DEFAULT_BUFFER_RADIUS_M, DEFAULT_TARGET_GSD_M};
use towerforge::raster::{validate_buffer, DEFAULT_CHIP_PX};

/// Process exit status: 1 for runtime/I-O failures, 2 for invalid input or
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Runtime = 1,
    Validation = 2,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    pub fn runtime(stage: &'static str, message: impl fmt::Display) -> Self {
        Self { kind: ExitKind::Runtime, stage, message: message.to_string() }
    }

    pub fn invalid(stage: &'static str, message: impl fmt::Display) -> Self {
        Self { kind: ExitKind::Validation, stage, message: message.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Which band axes a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BandSet {
    Lat,
    Lon,
    All,
}

impl BandSet {
    pub fn bands(self) -> Vec<RegionBand> {
        let all = default_bands();
        match self {
            BandSet::Lat => all.into_iter().filter(|b| b.axis == Axis::Latitude).collect(),
            BandSet::Lon => all.into_iter().filter(|b| b.axis == Axis::Longitude).collect(),
            BandSet::All => all,
        }
    }
}

/// Optional settings from a TOML file; anything absent falls back to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub buffer_radius_m: Option<f64>,
    pub target_gsd_m: Option<f64>,
    pub chip_px: Option<u32>,
    pub train_fraction: Option<f64>,
    pub include_negatives: Option<bool>,
    pub seed: Option<u64>,
    pub bbox: Option<[f64; 4]>,
    pub bands: Option<BandSet>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::runtime("config", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::invalid("config", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub buffer_radius_m: f64,
    pub target_gsd_m: f64,
    pub chip_px: u32,
    pub train_fraction: f64,
    pub include_negatives: bool,
    pub seed: u64,
    pub region: StudyRegion,
    pub bands: BandSet,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            buffer_radius_m: DEFAULT_BUFFER_RADIUS_M,
            target_gsd_m: DEFAULT_TARGET_GSD_M,
            chip_px: DEFAULT_CHIP_PX,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            include_negatives: false,
            seed: 42,
            region: StudyRegion::default(),
            bands: BandSet::Lat,
        }
    }
}

/// Values given on the command line; they win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub buffer_radius_m: Option<f64>,
    pub target_gsd_m: Option<f64>,
    pub chip_px: Option<u32>,
    pub train_fraction: Option<f64>,
    pub include_negatives: bool,
    pub seed: Option<u64>,
    pub bbox: Option<[f64; 4]>,
    pub bands: Option<BandSet>,
}

pub fn parse_bbox(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<f64>| format!("expected minlon,minlat,maxlon,maxlat, got {} values", v.len()))
}

impl PipelineConfig {
    /// Flags > file > defaults, then validation.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> CmdResult<Self> {
        let file = match file {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let d = PipelineConfig::default();
        let bbox = flags.bbox.or(file.bbox);
        let region = match bbox {
            Some([a, b, c, e]) => StudyRegion(GeoBox::new(a, b, c, e).map_err(|err| Failure::invalid("config", format!("bbox: {err}")))?),
            None => d.region,
        };
        let cfg = PipelineConfig {
            buffer_radius_m: flags.buffer_radius_m.or(file.buffer_radius_m).unwrap_or(d.buffer_radius_m),
            target_gsd_m: flags.target_gsd_m.or(file.target_gsd_m).unwrap_or(d.target_gsd_m),
            chip_px: flags.chip_px.or(file.chip_px).unwrap_or(d.chip_px),
            train_fraction: flags.train_fraction.or(file.train_fraction).unwrap_or(d.train_fraction),
            include_negatives: flags.include_negatives || file.include_negatives.unwrap_or(d.include_negatives),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            region,
            bands: flags.bands.or(file.bands).unwrap_or(d.bands),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CmdResult {
        validate_buffer(self.buffer_radius_m, self.target_gsd_m, self.chip_px).map_err(|e| Failure::invalid("config", e))?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Failure::invalid("config", format!("train fraction {} must be in (0, 1)", self.train_fraction)));
        }
        Ok(())
    }

    pub fn chip_params(&self) -> ChipParams {
        ChipParams { buffer_radius_m: self.buffer_radius_m, target_gsd_m: self.target_gsd_m, chip_px: self.chip_px }
    }
}
