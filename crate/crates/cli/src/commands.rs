use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use towerforge::dataset::{
    build_matrix, emit_training_config, split_train_test, stratify, to_coco, CocoDataset, TrainingVariant,
};
use towerforge::eval::{detections_from_json, detections_to_json, evaluate, EvalError};
use towerforge::ingest::{
    dedupe, exclude_urban, features_to_geojson, filter_study_region, parse_features, IngestError, TagFilter,
    TowerFeature, UrbanMask,
};
use towerforge::pipeline::chip_scene;
use towerforge::raster::{load_raster, select_samples, write_chip, ChipPlan, RasterError};
use towerforge::simkit::{matrix_csv, mock_detect, run_matrix, synth_scene, NoiseModel, SceneSpec, SimError};

use crate::config::{BandSet, CmdResult, Failure, PipelineConfig};

fn read(stage: &'static str, path: &Path) -> CmdResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::runtime(stage, format!("{}: {e}", path.display())))
}

fn write(stage: &'static str, path: &Path, contents: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime(stage, format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::runtime(stage, format!("{}: {e}", path.display())))?;
    log::info!("[{stage}] wrote {}", path.display());
    Ok(())
}

fn make_dir(stage: &'static str, dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(stage, format!("{}: {e}", dir.display())))
}

fn ingest_failure(stage: &'static str, path: &Path, e: IngestError) -> Failure {
    Failure::invalid(stage, format!("{}: {e}", path.display()))
}

fn raster_failure(stage: &'static str, e: RasterError) -> Failure {
    match e {
        RasterError::Io { .. } | RasterError::Codec { .. } => Failure::runtime(stage, e),
        _ => Failure::invalid(stage, e),
    }
}

fn sim_failure(stage: &'static str, e: SimError) -> Failure {
    match e {
        SimError::Raster(r) => raster_failure(stage, r),
        other => Failure::invalid(stage, other),
    }
}

fn eval_failure(stage: &'static str, path: &Path, e: EvalError) -> Failure {
    Failure::invalid(stage, format!("{}: {e}", path.display()))
}

pub fn load_coco(stage: &'static str, path: &Path) -> CmdResult<CocoDataset> {
    let bytes = read(stage, path)?;
    CocoDataset::from_json(&bytes).map_err(|e| Failure::invalid(stage, format!("{}: {e}", path.display())))
}

fn load_features(stage: &'static str, path: &Path, filter: &TagFilter) -> CmdResult<Vec<TowerFeature>> {
    let bytes = read(stage, path)?;
    parse_features(&bytes, filter).map(|(fs, _)| fs).map_err(|e| ingest_failure(stage, path, e))
}

fn load_noise(path: Option<&Path>, seed: Option<u64>) -> CmdResult<NoiseModel> {
    let mut noise = match path {
        Some(p) => {
            let bytes = read("noise", p)?;
            let text = String::from_utf8_lossy(&bytes);
            NoiseModel::from_toml(&text).map_err(|e| Failure::invalid("noise", format!("{}: {e}", p.display())))?
        }
        None => NoiseModel::identity(),
    };
    if let Some(s) = seed {
        noise.seed = s;
    }
    Ok(noise)
}

pub struct IngestArgs<'a> {
    pub osm: &'a Path,
    pub urban_mask: Option<&'a Path>,
    pub tags: TagFilter,
    pub min_sep_m: f64,
    pub out: &'a Path,
}

pub fn ingest(args: IngestArgs<'_>, cfg: &PipelineConfig) -> CmdResult<String> {
    if !(args.min_sep_m.is_finite() && args.min_sep_m >= 0.0) {
        return Err(Failure::invalid("ingest/dedupe", format!("min separation {} must be >= 0", args.min_sep_m)));
    }
    let bytes = read("ingest/parse", args.osm)?;
    let (parsed, report) = parse_features(&bytes, &args.tags).map_err(|e| ingest_failure("ingest/parse", args.osm, e))?;
    let mut summary = format!("{:<8} {:>8} {:>8}\n", "stage", "kept", "dropped");
    summary.push_str(&format!("{:<8} {:>8} {:>8}\n", "parse", report.kept, report.dropped()));

    let regional = filter_study_region(&parsed, &cfg.region);
    summary.push_str(&format!("{:<8} {:>8} {:>8}\n", "region", regional.len(), parsed.len() - regional.len()));

    let rural = match args.urban_mask {
        Some(path) => {
            let mask_bytes = read("ingest/urban", path)?;
            let mask = UrbanMask::from_geojson(&mask_bytes).map_err(|e| ingest_failure("ingest/urban", path, e))?;
            let (kept, removed) = exclude_urban(&regional, &mask);
            summary.push_str(&format!("{:<8} {:>8} {:>8}\n", "urban", kept.len(), removed));
            kept
        }
        None => {
            summary.push_str(&format!("{:<8} {:>8} {:>8}  (skipped: no urban mask)\n", "urban", regional.len(), 0));
            regional
        }
    };

    let unique = dedupe(&rural, args.min_sep_m);
    summary.push_str(&format!("{:<8} {:>8} {:>8}\n", "dedupe", unique.len(), rural.len() - unique.len()));
    write("ingest/write", args.out, &features_to_geojson(&unique))?;
    Ok(summary)
}

pub struct ChipArgs<'a> {
    pub rasters: &'a [PathBuf],
    pub features: &'a Path,
    pub keep_all: bool,
    pub out: &'a Path,
}

pub fn chip(args: ChipArgs<'_>, cfg: &PipelineConfig) -> CmdResult<String> {
    // Configuration problems abort before anything is read or written.
    let params = cfg.chip_params();
    params.validate().map_err(|e| raster_failure("chip/config", e))?;
    if args.rasters.is_empty() {
        return Err(Failure::invalid("chip/config", "at least one --raster is required"));
    }

    let features = load_features("chip/features", args.features, &TagFilter::default())?;
    let mut plan = ChipPlan::default();
    let mut scenes = HashSet::new();
    let mut dropped = 0;
    for path in args.rasters {
        let raster = load_raster(path).map_err(|e| raster_failure("chip/raster", e))?;
        if !scenes.insert(raster.scene_id.clone()) {
            return Err(Failure::invalid("chip/raster", format!("duplicate scene id `{}` ({})", raster.scene_id, path.display())));
        }
        let scene = chip_scene(&raster, &features, &params).map_err(|e| raster_failure("chip/scene", e))?;
        dropped += scene.dropped;
        let picked = if args.keep_all { ChipPlan::partition(scene.chips) } else { select_samples(scene.chips, cfg.seed) };
        plan.merge(picked);
    }

    let coco = to_coco(&plan, cfg.include_negatives).map_err(|e| Failure::invalid("chip/coco", e))?;
    let image_dir = args.out.join("images");
    make_dir("chip/write", &image_dir)?;
    for c in plan.positives.iter().chain(&plan.negatives) {
        write_chip(c, &image_dir).map_err(|e| raster_failure("chip/write", e))?;
    }
    write("chip/write", &args.out.join("annotations.json"), &coco.to_json())?;

    let mut per_scene: BTreeMap<&str, (usize, usize, usize)> = scenes.iter().map(|s| (s.as_str(), (0, 0, 0))).collect();
    for c in &plan.positives {
        let e = per_scene.get_mut(c.scene_id.as_str()).expect("scene registered");
        e.0 += 1;
        e.2 += c.annotations.len();
    }
    for c in &plan.negatives {
        per_scene.get_mut(c.scene_id.as_str()).expect("scene registered").1 += 1;
    }
    let mut s = format!("{:<24} {:>9} {:>9} {:>11}\n", "scene", "positives", "negatives", "annotations");
    for (scene, (p, n, a)) in &per_scene {
        s.push_str(&format!("{scene:<24} {p:>9} {n:>9} {a:>11}\n"));
    }
    s.push_str(&format!(
        "{:<24} {:>9} {:>9} {:>11}\n",
        "total",
        plan.positives.len(),
        plan.negatives.len(),
        plan.annotation_count()
    ));
    if dropped > 0 {
        s.push_str(&format!("boxes outside full chips: {dropped}\n"));
    }
    Ok(s)
}

pub fn split(coco: &Path, out: &Path, cfg: &PipelineConfig) -> CmdResult<String> {
    let ds = load_coco("split/read", coco)?;
    let parts = split_train_test(&ds, cfg.train_fraction, cfg.seed).map_err(|e| Failure::invalid("split", format!("{}: {e}", coco.display())))?;
    write("split/write", &out.join("train.json"), &parts.train.to_json())?;
    write("split/write", &out.join("test.json"), &parts.test.to_json())?;
    Ok(format!(
        "{:<6} {:>7} {:>12}\n{:<6} {:>7} {:>12}\n{:<6} {:>7} {:>12}\n",
        "split",
        "images",
        "annotations",
        "train",
        parts.train.images.len(),
        parts.train.annotations.len(),
        "test",
        parts.test.images.len(),
        parts.test.annotations.len()
    ))
}

pub fn stratify_cmd(coco: &Path, out: &Path, bands: BandSet) -> CmdResult<String> {
    let ds = load_coco("stratify/read", coco)?;
    let strata = stratify(&ds, &bands.bands()).map_err(|e| Failure::invalid("stratify", format!("{}: {e}", coco.display())))?;
    let mut summary = format!("{:<12} {:>7} {:>12}\n", "band", "images", "annotations");
    for (name, sub) in &strata.by_band {
        write("stratify/write", &out.join(format!("{name}.json")), &sub.to_json())?;
        summary.push_str(&format!("{name:<12} {:>7} {:>12}\n", sub.images.len(), sub.annotations.len()));
    }
    let mut csv = String::from("image_id,axis,band\n");
    for (id, axis, band) in &strata.assignments {
        csv.push_str(&format!("{id},{axis},{band}\n"));
    }
    for (id, axis) in &strata.out_of_band {
        csv.push_str(&format!("{id},{axis},\n"));
    }
    write("stratify/write", &out.join("assignments.csv"), &csv)?;
    if !strata.out_of_band.is_empty() {
        summary.push_str(&format!("out of band: {} image/axis pairs\n", strata.out_of_band.len()));
    }
    Ok(summary)
}

pub fn simulate(coco: &Path, noise: Option<&Path>, seed: Option<u64>, out: &Path) -> CmdResult<String> {
    let ds = load_coco("simulate/read", coco)?;
    let noise = load_noise(noise, seed)?;
    let dets = mock_detect(&ds, &noise).map_err(|e| sim_failure("simulate", e))?;
    write("simulate/write", out, &detections_to_json(&dets))?;
    Ok(format!("{} detections for {} images\n", dets.len(), ds.images.len()))
}

pub fn evaluate_cmd(coco: &Path, predictions: &Path, out: &Path) -> CmdResult<String> {
    let ds = load_coco("evaluate/read", coco)?;
    let bytes = read("evaluate/read", predictions)?;
    let dets = detections_from_json(&bytes).map_err(|e| eval_failure("evaluate/read", predictions, e))?;
    let report = evaluate(&ds, &dets).map_err(|e| eval_failure("evaluate", predictions, e))?;
    write("evaluate/write", out, &report.to_json())?;
    write("evaluate/write", &out.with_extension("csv"), &report.to_csv())?;
    Ok(report.to_csv())
}

pub struct ReportArgs<'a> {
    pub coco: &'a Path,
    pub noise: Option<&'a Path>,
    /// Explicit `--seed`; otherwise the noise file's seed, then the config seed.
    pub seed: Option<u64>,
    pub oos_factor: f64,
    pub baseline: bool,
    pub out: &'a Path,
}

pub fn report(args: ReportArgs<'_>, cfg: &PipelineConfig) -> CmdResult<String> {
    let ds = load_coco("report/read", args.coco)?;
    let bands = cfg.bands.bands();
    let strata = stratify(&ds, &bands).map_err(|e| Failure::invalid("report/stratify", e))?;
    let seed = args.seed.or(args.noise.is_none().then_some(cfg.seed));
    let noise = load_noise(args.noise, seed)?;
    let matrix = build_matrix(&bands, args.baseline);
    let rows = run_matrix(&matrix, &strata.by_band, &noise, args.oos_factor).map_err(|e| sim_failure("report", e))?;
    let csv = matrix_csv(&rows);
    write("report/write", args.out, &csv)?;
    Ok(csv)
}

pub fn synth(spec_path: Option<&Path>, seed: Option<u64>, towers: Option<usize>, out: &Path) -> CmdResult<String> {
    let mut spec = match spec_path {
        Some(p) => {
            let bytes = read("synth", p)?;
            SceneSpec::from_toml(&String::from_utf8_lossy(&bytes)).map_err(|e| Failure::invalid("synth", format!("{}: {e}", p.display())))?
        }
        None => SceneSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(n) = towers {
        spec.n_towers = n;
    }
    let (raster, features) = synth_scene(&spec).map_err(|e| sim_failure("synth", e))?;
    make_dir("synth/write", out)?;
    let image = out.join(format!("{}.png", raster.scene_id));
    towerforge::raster::save_raster_png(&raster, &image).map_err(|e| raster_failure("synth/write", e))?;
    let features_path = out.join(format!("{}_towers.geojson", raster.scene_id));
    write("synth/write", &features_path, &features_to_geojson(&features))?;
    Ok(format!("{}\n{}\n", image.display(), features_path.display()))
}

pub fn train_config(variant: &str, out: Option<&Path>) -> CmdResult<String> {
    let v: TrainingVariant = variant.parse().map_err(|e| Failure::invalid("train-config", e))?;
    let text = emit_training_config(v);
    if let Some(path) = out {
        write("train-config", path, &text)?;
    }
    Ok(text)
}
