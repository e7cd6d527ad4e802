use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use towerforge::ingest::{TagFilter, DEFAULT_MIN_SEPARATION_M};

mod commands;
mod config;

use config::{parse_bbox, BandSet, CmdResult, Overrides, PipelineConfig};

/// Build and evaluate cell tower detection datasets from OSM points and
/// georeferenced imagery.
#[derive(Parser)]
#[command(name = "towerforge", version)]
struct Cli {
    /// TOML file with pipeline settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter OSM tower points: tags, study region, urban mask, dedupe.
    Ingest {
        #[arg(long)]
        osm: PathBuf,
        #[arg(long)]
        urban_mask: Option<PathBuf>,
        /// Study region as minlon,minlat,maxlon,maxlat.
        #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
        bbox: Option<[f64; 4]>,
        /// Extra tag predicate, e.g. `tower:type=communication`.
        #[arg(long, default_value = "")]
        tags: String,
        #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION_M)]
        min_sep_m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resample, buffer, chip and select samples; writes JPEG chips and COCO.
    Chip {
        #[arg(long = "raster", required = true, num_args = 1..)]
        rasters: Vec<PathBuf>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        radius_m: Option<f64>,
        #[arg(long)]
        gsd_m: Option<f64>,
        #[arg(long)]
        chip_px: Option<u32>,
        #[arg(long)]
        include_negatives: bool,
        /// Keep every chip instead of one positive and one negative per scene.
        #[arg(long)]
        keep_all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded image-level train/test split.
    Split {
        #[arg(long)]
        coco: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One COCO file per latitude/longitude band plus an assignment CSV.
    Stratify {
        #[arg(long)]
        coco: PathBuf,
        #[arg(long, value_enum)]
        bands: Option<BandSet>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mock detections from ground truth under a noise model.
    Simulate {
        #[arg(long)]
        coco: PathBuf,
        /// TOML noise model; identity noise when omitted.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// AP, AP@50 and AP@15 of predictions against a COCO dataset.
    Evaluate {
        #[arg(long)]
        coco: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// JSON report path; a CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train-band x eval-band matrix with mock detections, as CSV.
    Report {
        #[arg(long)]
        coco: PathBuf,
        #[arg(long, value_enum)]
        bands: Option<BandSet>,
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Noise multiplier for out-of-sample cells.
        #[arg(long, default_value_t = 1.0)]
        oos_factor: f64,
        /// Leave out the ("all", band) baseline rows.
        #[arg(long)]
        no_baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic scene (PNG + world file) and its tower GeoJSON.
    Synth {
        /// TOML scene spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        towers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a Detectron2 training configuration for a backbone variant.
    TrainConfig {
        /// RN50-HPT, RN50-RI, RN50-INT or RN101-INT.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CmdResult<String> {
    let mut flags = Overrides { seed: cli.seed, ..Default::default() };
    let config = cli.config.as_deref();
    match cli.command {
        Command::Ingest { osm, urban_mask, bbox, tags, min_sep_m, out } => {
            flags.bbox = bbox;
            let cfg = PipelineConfig::resolve(config, &flags)?;
            let tags = TagFilter::parse(&tags).map_err(|e| config::Failure::invalid("ingest/config", e))?;
            commands::ingest(
                commands::IngestArgs { osm: &osm, urban_mask: urban_mask.as_deref(), tags, min_sep_m, out: &out },
                &cfg,
            )
        }
        Command::Chip { rasters, features, radius_m, gsd_m, chip_px, include_negatives, keep_all, out } => {
            flags.buffer_radius_m = radius_m;
            flags.target_gsd_m = gsd_m;
            flags.chip_px = chip_px;
            flags.include_negatives = include_negatives;
            let cfg = PipelineConfig::resolve(config, &flags)?;
            commands::chip(commands::ChipArgs { rasters: &rasters, features: &features, keep_all, out: &out }, &cfg)
        }
        Command::Split { coco, train_fraction, out } => {
            flags.train_fraction = train_fraction;
            let cfg = PipelineConfig::resolve(config, &flags)?;
            commands::split(&coco, &out, &cfg)
        }
        Command::Stratify { coco, bands, out } => {
            flags.bands = bands;
            let cfg = PipelineConfig::resolve(config, &flags)?;
            commands::stratify_cmd(&coco, &out, cfg.bands)
        }
        Command::Simulate { coco, noise, out } => commands::simulate(&coco, noise.as_deref(), cli.seed, &out),
        Command::Evaluate { coco, predictions, out } => commands::evaluate_cmd(&coco, &predictions, &out),
        Command::Report { coco, bands, noise, oos_factor, no_baseline, out } => {
            flags.bands = bands;
            let cfg = PipelineConfig::resolve(config, &flags)?;
            commands::report(
                commands::ReportArgs {
                    coco: &coco,
                    noise: noise.as_deref(),
                    seed: cli.seed,
                    oos_factor,
                    baseline: !no_baseline,
                    out: &out,
                },
                &cfg,
            )
        }
        Command::Synth { spec, towers, out } => commands::synth(spec.as_deref(), cli.seed, towers, &out),
        Command::TrainConfig { variant, out } => commands::train_config(&variant, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOWERFORGE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.kind as u8)
        }
    }
}
