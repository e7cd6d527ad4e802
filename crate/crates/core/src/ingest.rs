//! OSM-derived feature ingestion: GeoJSON parsing with the tower tag
//! predicate, study-region cropping, urban-centre exclusion and dedupe.

use std::collections::HashMap;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geo::{GeoBox, GeoPoint, METERS_PER_DEGREE};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed GeoJSON: {0}")]
    MalformedDocument(String),
    #[error("document is not a GeoJSON FeatureCollection")]
    NotAFeatureCollection,
    #[error("invalid urban mask: {0}")]
    InvalidMask(String),
}

/// `man_made` values accepted as towers.
pub const TOWER_VALUES: [&str; 2] = ["communications_tower", "tower"];

#[derive(Debug, Clone, PartialEq)]
pub struct TowerFeature {
    pub id: String,
    pub point: GeoPoint,
    pub tags: Vec<(String, String)>,
}

impl TowerFeature {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Tower predicate: `man_made` in [`TOWER_VALUES`] (exact, case-sensitive)
/// and every `extra` pair present with an identical value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagFilter {
    pub extra: Vec<(String, String)>,
}

impl TagFilter {
    /// Parses `key=value[,key=value...]`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let mut extra = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("tag predicate `{part}` is not key=value"))?;
            extra.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { extra })
    }

    pub fn matches(&self, tags: &[(String, String)]) -> bool {
        let lookup = |key: &str| tags.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let is_tower = lookup("man_made").is_some_and(|v| TOWER_VALUES.contains(&v));
        is_tower && self.extra.iter().all(|(k, v)| lookup(k) == Some(v.as_str()))
    }
}

/// Per-reason drop counters from [`parse_features`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub total: usize,
    pub kept: usize,
    pub non_point: usize,
    pub tag_mismatch: usize,
    pub missing_id: usize,
    pub invalid_coordinates: usize,
}

impl ParseReport {
    pub fn dropped(&self) -> usize {
        self.total - self.kept
    }
}

fn parse_collection(bytes: &[u8]) -> Result<Vec<Value>, IngestError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedDocument(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::NotAFeatureCollection);
    }
    match doc.get("features") {
        Some(Value::Array(fs)) => Ok(fs.clone()),
        _ => Err(IngestError::MalformedDocument("FeatureCollection without a `features` array".into())),
    }
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn feature_id(f: &Value) -> Option<String> {
    let props = f.get("properties");
    [f.get("id"), props.and_then(|p| p.get("@id")), props.and_then(|p| p.get("id"))]
        .into_iter()
        .flatten()
        .find_map(scalar_to_string)
        .filter(|s| !s.is_empty())
}

fn coord_pair(v: &Value) -> Option<(f64, f64)> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    Some((arr[0].as_f64()?, arr[1].as_f64()?))
}

/// Extracts tower points from a FeatureCollection. Non-point geometries,
/// tag mismatches, id-less features and out-of-range coordinates are dropped
/// and counted.
pub fn parse_features(bytes: &[u8], filter: &TagFilter) -> Result<(Vec<TowerFeature>, ParseReport), IngestError> {
    let features = parse_collection(bytes)?;
    let mut report = ParseReport { total: features.len(), ..Default::default() };
    let mut out = Vec::new();

    for f in &features {
        let geometry = f.get("geometry");
        if geometry.and_then(|g| g.get("type")).and_then(Value::as_str) != Some("Point") {
            report.non_point += 1;
            continue;
        }
        let tags: Vec<(String, String)> = f
            .get("properties")
            .and_then(Value::as_object)
            .map(|props| {
                props
                    .iter()
                    .filter_map(|(k, v)| scalar_to_string(v).map(|s| (k.clone(), s)))
                    .collect()
            })
            .unwrap_or_default();
        if !filter.matches(&tags) {
            report.tag_mismatch += 1;
            continue;
        }
        let Some(id) = feature_id(f) else {
            report.missing_id += 1;
            continue;
        };
        let point = geometry
            .and_then(|g| g.get("coordinates"))
            .and_then(coord_pair)
            .and_then(|(lon, lat)| GeoPoint::new(lon, lat).ok());
        let Some(point) = point else {
            report.invalid_coordinates += 1;
            continue;
        };
        out.push(TowerFeature { id, point, tags });
    }

    report.kept = out.len();
    if report.dropped() > 0 {
        log::warn!(
            "dropped {} of {} features (non-point {}, tag mismatch {}, missing id {}, bad coordinates {})",
            report.dropped(),
            report.total,
            report.non_point,
            report.tag_mismatch,
            report.missing_id,
            report.invalid_coordinates
        );
    }
    Ok((out, report))
}

fn round7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

/// Serializes features as a FeatureCollection. Keys are sorted and
/// coordinates rounded to 7 decimals, so identical input gives identical bytes.
pub fn features_to_geojson(fs: &[TowerFeature]) -> String {
    let features: Vec<Value> = fs
        .iter()
        .map(|f| {
            let props: Map<String, Value> = f
                .tags
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect();
            json!({
                "type": "Feature",
                "id": f.id,
                "geometry": { "type": "Point", "coordinates": [round7(f.point.lon), round7(f.point.lat)] },
                "properties": props,
            })
        })
        .collect();
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Study-area crop box; the default spans 12°N to 27°S and 20°E to 57°E.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRegion(pub GeoBox);

impl Default for StudyRegion {
    fn default() -> Self {
        StudyRegion(GeoBox { min_lon: 20.0, min_lat: -27.0, max_lon: 57.0, max_lat: 12.0 })
    }
}

/// Keeps features inside the region, boundaries inclusive, order preserved.
pub fn filter_study_region(fs: &[TowerFeature], region: &StudyRegion) -> Vec<TowerFeature> {
    fs.iter().filter(|f| region.0.contains(&f.point)).cloned().collect()
}

pub type Ring = Vec<GeoPoint>;

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(outer: Ring, holes: Vec<Ring>) -> Result<Self, IngestError> {
        validate_ring(&outer)?;
        for h in &holes {
            validate_ring(h)?;
        }
        Ok(Self { outer, holes })
    }

    fn bbox(&self) -> (f64, f64, f64, f64) {
        self.outer.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.lon), b.min(p.lat), c.max(p.lon), d.max(p.lat)),
        )
    }
}

fn orient(a: &GeoPoint, b: &GeoPoint, c: &GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn on_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> bool {
    orient(a, b, p) == 0.0
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(a: &GeoPoint, b: &GeoPoint, c: &GeoPoint, d: &GeoPoint) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d)
}

/// Closed (first == last), at least four positions, no crossings between
/// non-adjacent edges.
pub fn validate_ring(ring: &[GeoPoint]) -> Result<(), IngestError> {
    if ring.len() < 4 {
        return Err(IngestError::InvalidMask(format!("ring has {} positions, need >= 4", ring.len())));
    }
    if ring.first() != ring.last() {
        return Err(IngestError::InvalidMask("ring is not closed".into()));
    }
    let n = ring.len() - 1;
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(&ring[i], &ring[i + 1], &ring[j], &ring[j + 1]) {
                return Err(IngestError::InvalidMask(format!("ring self-intersects at edges {i} and {j}")));
            }
        }
    }
    Ok(())
}

fn ring_boundary(p: &GeoPoint, ring: &[GeoPoint]) -> bool {
    ring.windows(2).any(|w| on_segment(p, &w[0], &w[1]))
}

fn ring_crossings_odd(p: &GeoPoint, ring: &[GeoPoint]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd ray casting. Points on any ring edge, hole edges included, count as inside.
pub fn point_in_polygon(p: &GeoPoint, poly: &Polygon) -> bool {
    if ring_boundary(p, &poly.outer) || poly.holes.iter().any(|h| ring_boundary(p, h)) {
        return true;
    }
    ring_crossings_odd(p, &poly.outer) && !poly.holes.iter().any(|h| ring_crossings_odd(p, h))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UrbanMask {
    pub polygons: Vec<Polygon>,
}

impl UrbanMask {
    /// Reads Polygon and MultiPolygon features; other geometries are ignored.
    pub fn from_geojson(bytes: &[u8]) -> Result<Self, IngestError> {
        let features = parse_collection(bytes)?;
        let mut polygons = Vec::new();
        for (i, f) in features.iter().enumerate() {
            let Some(geom) = f.get("geometry") else { continue };
            let coords = geom.get("coordinates");
            match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => polygons.push(polygon_from_coords(coords, i)?),
                Some("MultiPolygon") => {
                    let parts = coords
                        .and_then(Value::as_array)
                        .ok_or_else(|| IngestError::InvalidMask(format!("feature {i}: bad MultiPolygon")))?;
                    for part in parts {
                        polygons.push(polygon_from_coords(Some(part), i)?);
                    }
                }
                _ => log::warn!("urban mask feature {i} is not a polygon; ignored"),
            }
        }
        Ok(Self { polygons })
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.polygons.iter().any(|poly| {
            let (x0, y0, x1, y1) = poly.bbox();
            p.lon >= x0 && p.lon <= x1 && p.lat >= y0 && p.lat <= y1 && point_in_polygon(p, poly)
        })
    }
}

fn polygon_from_coords(coords: Option<&Value>, idx: usize) -> Result<Polygon, IngestError> {
    let bad = |what: &str| IngestError::InvalidMask(format!("feature {idx}: {what}"));
    let rings = coords.and_then(Value::as_array).ok_or_else(|| bad("polygon coordinates missing"))?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let positions = ring.as_array().ok_or_else(|| bad("ring is not an array"))?;
        let pts = positions
            .iter()
            .map(|v| coord_pair(v).map(|(lon, lat)| GeoPoint { lon, lat }))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad position"))?;
        parsed.push(pts);
    }
    let mut it = parsed.into_iter();
    let outer = it.next().ok_or_else(|| bad("polygon has no rings"))?;
    Polygon::new(outer, it.collect()).map_err(|e| bad(&e.to_string()))
}

/// Drops features inside any mask polygon. Returns the survivors and the
/// number removed.
pub fn exclude_urban(fs: &[TowerFeature], mask: &UrbanMask) -> (Vec<TowerFeature>, usize) {
    let kept: Vec<TowerFeature> = fs.iter().filter(|f| !mask.contains(&f.point)).cloned().collect();
    let removed = fs.len() - kept.len();
    (kept, removed)
}

pub const DEFAULT_MIN_SEPARATION_M: f64 = 10.0;

/// Greedy dedupe in input order: a feature within `min_sep_m` (inclusive)
/// of an already-kept feature is dropped.
pub fn dedupe(fs: &[TowerFeature], min_sep_m: f64) -> Vec<TowerFeature> {
    // Latitude strips at least one separation tall; a match can only sit in
    // the same strip or a neighbouring one.
    let strip_deg = min_sep_m.max(1.0) / METERS_PER_DEGREE;
    let mut strips: HashMap<i64, Vec<usize>> = HashMap::new();
    let mut kept: Vec<TowerFeature> = Vec::new();
    for f in fs {
        let strip = (f.point.lat / strip_deg).floor() as i64;
        let close = (strip - 1..=strip + 1).any(|s| {
            strips
                .get(&s)
                .is_some_and(|ids| ids.iter().any(|&k| kept[k].point.distance_m(&f.point) <= min_sep_m))
        });
        if !close {
            strips.entry(strip).or_default().push(kept.len());
            kept.push(f.clone());
        }
    }
    kept
}
