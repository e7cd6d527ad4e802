//! Synthetic scenes and a noise-model mock detector.
//!
//! The mock detector perturbs ground truth instead of looking at pixels, so
//! the evaluator and the experiment matrix can run end to end without a
//! trained model. Its random draws are coupled across noise levels: every
//! image gets two private streams (`derive_seed(seed, 2 * image_id)` for
//! ground-truth perturbations, `+ 1` for false positives) and the number of
//! draws per annotation never depends on the noise parameters. Raising
//! `loc_sigma_px`, `miss_rate` or `fp_per_image` therefore only scales
//! offsets, grows the missed set, or appends false positives to the same
//! realisation.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CocoDataset, ExperimentMatrix, Selector, TOWER_CATEGORY_ID};
use crate::eval::{evaluate, ApReport, Detection, EvalError};
use crate::geo::{GeoPoint, GeoTransform, PixelBox, METERS_PER_DEGREE};
use crate::ingest::TowerFeature;
use crate::raster::{RasterImage, RasterError};
use crate::rng::{derive_seed, key_of, SplitMix64};

pub const MIN_TOWER_SPACING_PX: f64 = 60.0;
pub const PLACEMENT_ATTEMPTS: usize = 1000;

/// Side range, in pixels, of false-positive boxes.
pub const FP_BOX_PX: (f64, f64) = (40.0, 160.0);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("could only place {placed} of {requested} towers {MIN_TOWER_SPACING_PX} px apart")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("unknown matrix selector `{0}`")]
    UnknownSelector(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    #[default]
    Flat,
    Speckle,
}

/// Synthetic scene parameters. Config files use flat keys, with the center
/// given as `center_lon` / `center_lat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub gsd_m: f64,
    pub center_lon: f64,
    pub center_lat: f64,
    pub n_towers: usize,
    pub background: Background,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 4096,
            height: 4096,
            gsd_m: 0.5,
            center_lon: 35.0,
            center_lat: -10.0,
            n_towers: 20,
            background: Background::Flat,
            seed: 42,
        }
    }
}

impl SceneSpec {
    pub fn center(&self) -> GeoPoint {
        GeoPoint { lon: self.center_lon, lat: self.center_lat }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.width < 512 || self.height < 512 {
            return Err(SimError::InvalidSpec(format!("{}x{} is below 512 px", self.width, self.height)));
        }
        if !(self.gsd_m.is_finite() && self.gsd_m > 0.0) {
            return Err(SimError::InvalidSpec(format!("gsd_m {} must be > 0", self.gsd_m)));
        }
        self.center().validate().map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        if self.center_lat.abs() >= 89.0 {
            return Err(SimError::InvalidSpec("center latitude too close to a pole".into()));
        }
        Ok(())
    }

    /// North-up transform with square `gsd_m` pixels at the center latitude,
    /// centered on `center()`.
    pub fn transform(&self) -> GeoTransform {
        let px_x = self.gsd_m / (METERS_PER_DEGREE * self.center_lat.to_radians().cos());
        let px_y = -self.gsd_m / METERS_PER_DEGREE;
        GeoTransform {
            origin_x: self.center_lon - (f64::from(self.width) / 2.0 - 0.5) * px_x,
            origin_y: self.center_lat - (f64::from(self.height) / 2.0 - 0.5) * px_y,
            px_size_x: px_x,
            px_size_y: px_y,
        }
    }

    pub fn scene_id(&self) -> String {
        format!("synth-{}", self.seed)
    }
}

const FLAT_RGB: [u8; 3] = [150, 132, 98];
const GLYPH_RGB: [u8; 3] = [38, 38, 42];

fn put(pixels: &mut [u8], w: usize, h: usize, x: i64, y: i64) {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        let i = (y as usize * w + x as usize) * 3;
        pixels[i..i + 3].copy_from_slice(&GLYPH_RGB);
    }
}

/// Plan view of a lattice mast: a square footprint with both diagonals and
/// three guy lines.
fn draw_glyph(pixels: &mut [u8], w: usize, h: usize, cx: f64, cy: f64) {
    let (cx, cy) = (cx.floor() as i64, cy.floor() as i64);
    let half = 6;
    for t in -half..=half {
        for (x, y) in [(cx + t, cy - half), (cx + t, cy + half), (cx - half, cy + t), (cx + half, cy + t), (cx + t, cy + t), (cx + t, cy - t)] {
            put(pixels, w, h, x, y);
        }
    }
    for step in 0..=22i64 {
        put(pixels, w, h, cx, cy - half - step);
        put(pixels, w, h, cx - half - step * 7 / 8, cy + half + step / 2);
        put(pixels, w, h, cx + half + step * 7 / 8, cy + half + step / 2);
    }
}

/// Renders a scene and returns matching tower features. Towers are placed
/// uniformly at least [`MIN_TOWER_SPACING_PX`] apart.
pub fn synth_scene(spec: &SceneSpec) -> Result<(RasterImage, Vec<TowerFeature>), SimError> {
    spec.validate()?;
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut place_rng = SplitMix64::new(derive_seed(spec.seed, 0));
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(spec.n_towers);
    for _ in 0..spec.n_towers {
        let site = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let p = (place_rng.next_f64() * w as f64, place_rng.next_f64() * h as f64);
            let clear = sites
                .iter()
                .all(|&(x, y)| (x - p.0).hypot(y - p.1) >= MIN_TOWER_SPACING_PX);
            clear.then_some(p)
        });
        match site {
            Some(p) => sites.push(p),
            None => return Err(SimError::PlacementFailure { placed: sites.len(), requested: spec.n_towers }),
        }
    }

    let mut pixels = FLAT_RGB.repeat(w * h);
    if spec.background == Background::Speckle {
        let mut noise_rng = SplitMix64::new(derive_seed(spec.seed, 1));
        for v in pixels.iter_mut() {
            let jitter = (noise_rng.next_u64() % 41) as i16 - 20;
            *v = (i16::from(*v) + jitter).clamp(0, 255) as u8;
        }
    }
    for &(x, y) in &sites {
        draw_glyph(&mut pixels, w, h, x, y);
    }

    let transform = spec.transform();
    let raster = RasterImage::new(spec.width, spec.height, pixels, transform, spec.scene_id())?;
    let features = sites
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| TowerFeature {
            id: format!("{}/{i}", spec.scene_id()),
            point: transform.image_to_geo(x, y),
            tags: vec![("man_made".into(), "tower".into()), ("tower:type".into(), "communication".into())],
        })
        .collect();
    Ok((raster, features))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub loc_sigma_px: f64,
    pub size_jitter: f64,
    pub miss_rate: f64,
    pub fp_per_image: f64,
    pub score_tp_alpha: f64,
    pub score_tp_beta: f64,
    pub score_fp_alpha: f64,
    pub score_fp_beta: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl NoiseModel {
    /// No jitter, no misses, no false positives.
    pub fn identity() -> Self {
        Self {
            loc_sigma_px: 0.0,
            size_jitter: 0.0,
            miss_rate: 0.0,
            fp_per_image: 0.0,
            score_tp_alpha: 8.0,
            score_tp_beta: 2.0,
            score_fp_alpha: 2.0,
            score_fp_beta: 8.0,
            seed: 42,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let n: NoiseModel = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidNoise(m));
        if !(self.loc_sigma_px.is_finite() && self.loc_sigma_px >= 0.0) {
            return bad(format!("loc_sigma_px {} must be >= 0", self.loc_sigma_px));
        }
        if !(0.0..1.0).contains(&self.size_jitter) {
            return bad(format!("size_jitter {} must be in [0, 1)", self.size_jitter));
        }
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return bad(format!("miss_rate {} must be in [0, 1]", self.miss_rate));
        }
        if !(self.fp_per_image.is_finite() && self.fp_per_image >= 0.0) {
            return bad(format!("fp_per_image {} must be >= 0", self.fp_per_image));
        }
        for (name, v) in [
            ("score_tp_alpha", self.score_tp_alpha),
            ("score_tp_beta", self.score_tp_beta),
            ("score_fp_alpha", self.score_fp_alpha),
            ("score_fp_beta", self.score_fp_beta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} {v} must be > 0"));
            }
        }
        Ok(())
    }

    /// Out-of-sample variant: sigma, miss rate (capped at 1) and false
    /// positive rate multiplied by `factor`.
    pub fn degraded(&self, factor: f64) -> NoiseModel {
        NoiseModel {
            loc_sigma_px: self.loc_sigma_px * factor,
            miss_rate: (self.miss_rate * factor).min(1.0),
            fp_per_image: self.fp_per_image * factor,
            ..self.clone()
        }
    }
}

/// Inverse-CDF Poisson draw, monotone in `lambda` for a fixed `u`. Large
/// rates fall back to the library sampler.
fn poisson_draw(rng: &mut SplitMix64, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 30.0 {
        let d = Poisson::new(lambda).expect("positive finite lambda");
        return d.sample(rng) as usize;
    }
    let u = rng.next_f64();
    let mut k = 0usize;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockStats {
    pub annotations: usize,
    pub missed: usize,
    pub false_positives: usize,
}

impl MockStats {
    pub fn tp_candidates(&self) -> usize {
        self.annotations - self.missed
    }
}

pub fn mock_detect(ds: &CocoDataset, noise: &NoiseModel) -> Result<Vec<Detection>, SimError> {
    mock_detect_with_stats(ds, noise).map(|(d, _)| d)
}

/// Perturbs each annotation (unless missed) and adds Poisson false positives
/// per image. Output order: images in dataset order, ground-truth-derived
/// detections first.
pub fn mock_detect_with_stats(ds: &CocoDataset, noise: &NoiseModel) -> Result<(Vec<Detection>, MockStats), SimError> {
    noise.validate()?;
    let tp_score = Beta::new(noise.score_tp_alpha, noise.score_tp_beta).map_err(|e| SimError::InvalidNoise(e.to_string()))?;
    let fp_score = Beta::new(noise.score_fp_alpha, noise.score_fp_beta).map_err(|e| SimError::InvalidNoise(e.to_string()))?;

    let mut by_image: HashMap<u64, Vec<&crate::dataset::CocoAnnotation>> = HashMap::new();
    for a in &ds.annotations {
        by_image.entry(a.image_id).or_default().push(a);
    }

    let mut dets = Vec::new();
    let mut stats = MockStats::default();
    for img in &ds.images {
        let mut rng = SplitMix64::new(derive_seed(noise.seed, img.id.wrapping_mul(2)));
        for a in by_image.get(&img.id).map(Vec::as_slice).unwrap_or_default() {
            stats.annotations += 1;
            let u = rng.next_f64();
            let gx: f64 = StandardNormal.sample(&mut rng);
            let gy: f64 = StandardNormal.sample(&mut rng);
            let sw = 2.0 * rng.next_f64() - 1.0;
            let sh = 2.0 * rng.next_f64() - 1.0;
            let score = tp_score.sample(&mut rng);
            if u < noise.miss_rate {
                stats.missed += 1;
                continue;
            }
            let [x, y, w, h] = a.bbox;
            let nw = w * (1.0 + noise.size_jitter * sw);
            let nh = h * (1.0 + noise.size_jitter * sh);
            // Written so that zero noise reproduces the box bit for bit.
            let nx = x + noise.loc_sigma_px * gx - 0.5 * (nw - w);
            let ny = y + noise.loc_sigma_px * gy - 0.5 * (nh - h);
            dets.push(Detection {
                image_id: img.id,
                category_id: TOWER_CATEGORY_ID,
                bbox: PixelBox { x: nx, y: ny, w: nw, h: nh },
                score,
            });
        }

        let mut fp_rng = SplitMix64::new(derive_seed(noise.seed, img.id.wrapping_mul(2).wrapping_add(1)));
        let k = poisson_draw(&mut fp_rng, noise.fp_per_image);
        stats.false_positives += k;
        let (lo, hi) = FP_BOX_PX;
        for _ in 0..k {
            let cx = fp_rng.next_f64() * f64::from(img.width);
            let cy = fp_rng.next_f64() * f64::from(img.height);
            let bw = lo + (hi - lo) * fp_rng.next_f64();
            let bh = lo + (hi - lo) * fp_rng.next_f64();
            let score = fp_score.sample(&mut fp_rng);
            dets.push(Detection {
                image_id: img.id,
                category_id: TOWER_CATEGORY_ID,
                bbox: PixelBox { x: cx - 0.5 * bw, y: cy - 0.5 * bh, w: bw, h: bh },
                score,
            });
        }
    }
    Ok((dets, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub train: String,
    pub eval: String,
    pub report: ApReport,
}

/// Runs the mock detector and evaluator for every cell. In-sample cells
/// (train band == eval band, or the "all" baseline) use `noise`; other cells
/// use `noise.degraded(oos_factor)`. All cells sharing an eval band draw from
/// the seed `derive_seed(noise.seed, fnv1a(eval band))`, so their detections
/// differ only through the noise level.
pub fn run_matrix(
    matrix: &ExperimentMatrix,
    strata: &BTreeMap<String, CocoDataset>,
    noise: &NoiseModel,
    oos_factor: f64,
) -> Result<Vec<MatrixRow>, SimError> {
    if !(oos_factor.is_finite() && oos_factor > 0.0) {
        return Err(SimError::InvalidNoise(format!("out-of-sample factor {oos_factor} must be > 0")));
    }
    let mut rows = Vec::with_capacity(matrix.cells.len());
    for cell in &matrix.cells {
        if let Selector::Band(b) = &cell.train {
            if !strata.contains_key(b) {
                return Err(SimError::UnknownSelector(b.clone()));
            }
        }
        let eval_ds = strata.get(&cell.eval).ok_or_else(|| SimError::UnknownSelector(cell.eval.clone()))?;
        let mut cell_noise = if cell.in_sample() { noise.clone() } else { noise.degraded(oos_factor) };
        cell_noise.seed = derive_seed(noise.seed, key_of(&cell.eval));
        let dets = mock_detect(eval_ds, &cell_noise)?;
        let report = evaluate(eval_ds, &dets)?;
        rows.push(MatrixRow { train: cell.train.to_string(), eval: cell.eval.clone(), report });
    }
    Ok(rows)
}

pub fn matrix_csv(rows: &[MatrixRow]) -> String {
    let mut s = String::from("train,eval,ap,ap50,ap15\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.1},{:.1},{:.1}\n", r.train, r.eval, r.report.ap, r.report.ap50, r.report.ap15));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_matrix, CocoAnnotation, CocoImage};

    fn small_spec(n: usize, seed: u64) -> SceneSpec {
        SceneSpec { width: 1024, height: 1024, n_towers: n, seed, ..SceneSpec::default() }
    }

    fn gt_dataset(images: u64, per_image: u64) -> CocoDataset {
        let mut ds = CocoDataset::default();
        let mut aid = 1;
        for id in 1..=images {
            ds.images.push(CocoImage { id, file_name: format!("{id}.jpg"), width: 512, height: 512, geo_center: None });
            for k in 0..per_image {
                let x = 20.0 + 150.0 * (k % 3) as f64;
                let y = 20.0 + 150.0 * (k / 3) as f64;
                ds.annotations.push(CocoAnnotation {
                    id: aid,
                    image_id: id,
                    category_id: 1,
                    bbox: [x, y, 100.0, 100.0],
                    area: 10000.0,
                    iscrowd: 0,
                });
                aid += 1;
            }
        }
        ds
    }

    #[test]
    fn empty_scene_and_determinism() {
        let (r, fs) = synth_scene(&small_spec(0, 1)).unwrap();
        assert!(fs.is_empty());
        assert!(r.pixels.chunks(3).all(|p| p == FLAT_RGB));
        let a = synth_scene(&small_spec(12, 5)).unwrap();
        let b = synth_scene(&small_spec(12, 5)).unwrap();
        assert_eq!(a, b);
        let speckle = SceneSpec { background: Background::Speckle, ..small_spec(3, 5) };
        assert_eq!(synth_scene(&speckle).unwrap(), synth_scene(&speckle).unwrap());
    }

    #[test]
    fn towers_are_spaced_and_georeferenced() {
        let spec = small_spec(25, 9);
        let (r, fs) = synth_scene(&spec).unwrap();
        let px: Vec<(f64, f64)> = fs.iter().map(|f| r.transform.geo_to_image(&f.point)).collect();
        for i in 0..px.len() {
            assert!(px[i].0 >= 0.0 && px[i].0 < 1024.0 && px[i].1 >= 0.0 && px[i].1 < 1024.0);
            for j in 0..i {
                assert!((px[i].0 - px[j].0).hypot(px[i].1 - px[j].1) >= MIN_TOWER_SPACING_PX - 1e-6);
            }
        }
        assert!((r.gsd_m() - 0.5).abs() < 1e-9);
        let c = r.center();
        assert!((c.lon - spec.center_lon).abs() < 1e-9 && (c.lat - spec.center_lat).abs() < 1e-9);
    }

    #[test]
    fn overcrowded_scene_fails() {
        let err = synth_scene(&SceneSpec { width: 512, height: 512, n_towers: 500, ..SceneSpec::default() });
        assert!(matches!(err, Err(SimError::PlacementFailure { .. })));
        assert!(matches!(synth_scene(&SceneSpec { width: 100, ..SceneSpec::default() }), Err(SimError::InvalidSpec(_))));
    }

    #[test]
    fn zero_noise_reproduces_ground_truth() {
        let ds = gt_dataset(4, 5);
        let dets = mock_detect(&ds, &NoiseModel::identity()).unwrap();
        assert_eq!(dets.len(), ds.annotations.len());
        for (d, a) in dets.iter().zip(&ds.annotations) {
            assert_eq!([d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h], a.bbox);
            assert!((0.0..=1.0).contains(&d.score));
        }
        assert_eq!(evaluate(&ds, &dets).unwrap().ap50, 100.0);
    }

    #[test]
    fn total_miss_gives_nothing() {
        let ds = gt_dataset(3, 4);
        let noise = NoiseModel { miss_rate: 1.0, ..NoiseModel::identity() };
        let dets = mock_detect(&ds, &noise).unwrap();
        assert!(dets.is_empty());
        assert_eq!(evaluate(&ds, &dets).unwrap().ap, 0.0);
    }

    #[test]
    fn heavy_jitter_separates_thresholds() {
        // Monte-Carlo check on the IoU distribution before asserting on AP.
        let ds = gt_dataset(40, 6);
        let noise = NoiseModel { loc_sigma_px: 30.0, ..NoiseModel::identity() };
        let dets = mock_detect(&ds, &noise).unwrap();
        let below = dets
            .iter()
            .zip(&ds.annotations)
            .filter(|(d, a)| {
                let [x, y, w, h] = a.bbox;
                crate::geo::iou(&d.bbox, &PixelBox { x, y, w, h }) < 0.5
            })
            .count();
        assert!(below * 5 > dets.len(), "only {below} of {} below 0.5", dets.len());
        let r = evaluate(&ds, &dets).unwrap();
        assert!(r.ap50 < r.ap15, "{r:?}");
    }

    #[test]
    fn conservation_and_poisson_counts() {
        let ds = gt_dataset(1000, 2);
        let noise = NoiseModel { miss_rate: 0.3, fp_per_image: 1.5, seed: 11, ..NoiseModel::identity() };
        let (dets, stats) = mock_detect_with_stats(&ds, &noise).unwrap();
        assert_eq!(dets.len(), stats.tp_candidates() + stats.false_positives);
        assert_eq!(stats.annotations, 2000);

        // Chi-square goodness of fit of per-image FP counts against Poisson(1.5).
        let mut per_image: HashMap<u64, usize> = ds.images.iter().map(|i| (i.id, 0)).collect();
        let (tp_only, _) = mock_detect_with_stats(&ds, &NoiseModel { fp_per_image: 0.0, ..noise.clone() }).unwrap();
        for d in &dets {
            *per_image.get_mut(&d.image_id).unwrap() += 1;
        }
        for d in &tp_only {
            *per_image.get_mut(&d.image_id).unwrap() -= 1;
        }
        let bins = 5; // 0, 1, 2, 3, >=4
        let mut observed = vec![0f64; bins];
        for &c in per_image.values() {
            observed[c.min(bins - 1)] += 1.0;
        }
        let lambda: f64 = 1.5;
        let mut pmf = Vec::new();
        let mut p = (-lambda).exp();
        for k in 0..bins - 1 {
            pmf.push(p);
            p *= lambda / (k + 1) as f64;
        }
        pmf.push(1.0 - pmf.iter().sum::<f64>());
        let chi2: f64 = observed.iter().zip(&pmf).map(|(o, p)| (o - 1000.0 * p).powi(2) / (1000.0 * p)).sum();
        // 4 degrees of freedom, 99.9th percentile.
        assert!(chi2 < 18.47, "chi2 = {chi2}, observed {observed:?}");
    }

    #[test]
    fn ap_monotone_in_noise() {
        let ds = gt_dataset(10, 5);
        let mean_ap = |make: &dyn Fn(u64) -> NoiseModel| -> [f64; 3] {
            let mut acc = [0.0; 3];
            for seed in 0..20 {
                let r = evaluate(&ds, &mock_detect(&ds, &make(seed)).unwrap()).unwrap();
                acc[0] += r.ap15;
                acc[1] += r.ap50;
                acc[2] += r.ap;
            }
            acc.map(|v| v / 20.0)
        };
        let mut prev = [f64::INFINITY; 3];
        for miss in [0.0, 0.1, 0.3, 0.6] {
            let cur = mean_ap(&|seed| NoiseModel { miss_rate: miss, fp_per_image: 0.5, loc_sigma_px: 3.0, seed, ..NoiseModel::identity() });
            assert!(cur.iter().zip(&prev).all(|(c, p)| c <= p), "miss {miss}: {cur:?} vs {prev:?}");
            prev = cur;
        }
        let mut prev = [f64::INFINITY; 3];
        for sigma in [0.0, 5.0, 15.0, 30.0] {
            let cur = mean_ap(&|seed| NoiseModel { loc_sigma_px: sigma, fp_per_image: 0.5, seed, ..NoiseModel::identity() });
            assert!(cur.iter().zip(&prev).all(|(c, p)| c <= p), "sigma {sigma}: {cur:?} vs {prev:?}");
            prev = cur;
        }
    }

    #[test]
    fn noise_validation_and_toml() {
        assert!(NoiseModel { miss_rate: 1.5, ..NoiseModel::identity() }.validate().is_err());
        assert!(NoiseModel { size_jitter: 1.0, ..NoiseModel::identity() }.validate().is_err());
        let n = NoiseModel::from_toml("loc_sigma_px = 4.0\nmiss_rate = 0.1\nseed = 7\n").unwrap();
        assert_eq!((n.loc_sigma_px, n.miss_rate, n.seed), (4.0, 0.1, 7));
        assert!(NoiseModel::from_toml("bogus = 1\n").is_err());
        let s = SceneSpec::from_toml("width = 2048\nheight = 1024\nbackground = \"speckle\"\n").unwrap();
        assert_eq!((s.width, s.height, s.background), (2048, 1024, Background::Speckle));
    }

    #[test]
    fn matrix_identity_and_unknown_selector() {
        let mut strata = BTreeMap::new();
        for name in ["lat_upper", "lat_middle", "lat_lower"] {
            strata.insert(name.to_string(), gt_dataset(3, 2));
        }
        let bands = crate::dataset::bands_for_axis(&crate::dataset::default_bands(), crate::dataset::Axis::Latitude);
        let m = build_matrix(&bands, false);
        let rows = run_matrix(&m, &strata, &NoiseModel::identity(), 2.0).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().all(|r| r.report.ap == 100.0));
        let csv = matrix_csv(&rows);
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("train,eval,ap,ap50,ap15\nlat_upper,lat_upper,100.0,100.0,100.0\n"));

        strata.remove("lat_lower");
        assert!(matches!(run_matrix(&m, &strata, &NoiseModel::identity(), 2.0), Err(SimError::UnknownSelector(_))));
    }
}
