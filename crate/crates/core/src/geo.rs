//! Geodetic and pixel-space geometry.
//!
//! Distances are converted to degrees with a local equirectangular
//! approximation: one degree of latitude is [`METERS_PER_DEGREE`] meters and
//! one degree of longitude shrinks by `cos(lat)`.
//!
//! Pixel coordinates come in two flavours. [`GeoTransform::geo_to_pixel`]
//! returns pixel-*center* coordinates, so the raster origin maps to `(0, 0)`.
//! [`PixelBox`] lives in image space, where the upper-left pixel covers
//! `[0, 1) x [0, 1)`; the two differ by half a pixel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Largest |latitude| accepted by [`buffer_point`].
pub const MAX_BUFFER_LAT: f64 = 89.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("non-finite or invalid input: {0}")]
    NonFiniteInput(&'static str),
    #[error("latitude {0} outside the buffering range (|lat| < {MAX_BUFFER_LAT})")]
    LatitudeOutOfRange(f64),
    #[error("coordinate out of range: lon={lon}, lat={lat}")]
    InvalidPoint { lon: f64, lat: f64 },
    #[error("invalid geotransform: {0}")]
    InvalidTransform(String),
    #[error("degenerate box: w={w}, h={h}")]
    DegenerateBox { w: f64, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        let p = Self { lon, lat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.lon.is_finite() && self.lat.is_finite())
            || !(-180.0..=180.0).contains(&self.lon)
            || !(-90.0..=90.0).contains(&self.lat)
        {
            return Err(GeoError::InvalidPoint { lon: self.lon, lat: self.lat });
        }
        Ok(())
    }

    /// Equirectangular distance in meters, evaluated at the mean latitude.
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        let mean_lat = 0.5 * (self.lat + other.lat);
        let dx = (other.lon - self.lon) * METERS_PER_DEGREE * mean_lat.to_radians().cos();
        let dy = (other.lat - self.lat) * METERS_PER_DEGREE;
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeoError> {
        let b = Self { min_lon, min_lat, max_lon, max_lat };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let all_finite = [self.min_lon, self.min_lat, self.max_lon, self.max_lat]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GeoError::NonFiniteInput("geo box"));
        }
        if self.min_lon >= self.max_lon || self.min_lat >= self.max_lat {
            return Err(GeoError::DegenerateBox {
                w: self.max_lon - self.min_lon,
                h: self.max_lat - self.min_lat,
            });
        }
        Ok(())
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon) && (self.min_lat..=self.max_lat).contains(&p.lat)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: 0.5 * (self.min_lon + self.max_lon),
            lat: 0.5 * (self.min_lat + self.max_lat),
        }
    }
}

/// North-up affine georeferencing. `origin_*` is the center of the upper-left
/// pixel, matching the world-file convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub px_size_x: f64,
    pub px_size_y: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, px_size_x: f64, px_size_y: f64) -> Result<Self, GeoError> {
        let gt = Self { origin_x, origin_y, px_size_x, px_size_y };
        gt.validate()?;
        Ok(gt)
    }

    /// Builds a transform from the six world-file terms
    /// `[px_size_x, rot_y, rot_x, px_size_y, origin_x, origin_y]`.
    /// Any non-zero rotation term is rejected.
    pub fn from_world_terms(terms: [f64; 6]) -> Result<Self, GeoError> {
        let [a, d, b, e, c, f] = terms;
        if d != 0.0 || b != 0.0 {
            return Err(GeoError::InvalidTransform(format!(
                "rotated rasters are not supported (rotation terms {d}, {b})"
            )));
        }
        Self::new(c, f, a, e)
    }

    pub fn world_terms(&self) -> [f64; 6] {
        [self.px_size_x, 0.0, 0.0, self.px_size_y, self.origin_x, self.origin_y]
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let all_finite = [self.origin_x, self.origin_y, self.px_size_x, self.px_size_y]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GeoError::InvalidTransform("non-finite term".into()));
        }
        if self.px_size_x <= 0.0 {
            return Err(GeoError::InvalidTransform(format!("px_size_x must be > 0, got {}", self.px_size_x)));
        }
        if self.px_size_y >= 0.0 {
            return Err(GeoError::InvalidTransform(format!("px_size_y must be < 0, got {}", self.px_size_y)));
        }
        Ok(())
    }

    /// Continuous (col, row) in pixel-center coordinates.
    pub fn geo_to_pixel(&self, p: &GeoPoint) -> (f64, f64) {
        ((p.lon - self.origin_x) / self.px_size_x, (p.lat - self.origin_y) / self.px_size_y)
    }

    pub fn pixel_to_geo(&self, col: f64, row: f64) -> GeoPoint {
        GeoPoint {
            lon: self.origin_x + col * self.px_size_x,
            lat: self.origin_y + row * self.px_size_y,
        }
    }

    /// Image-space (x, y) where pixel `k` spans `[k, k + 1)`.
    pub fn geo_to_image(&self, p: &GeoPoint) -> (f64, f64) {
        let (c, r) = self.geo_to_pixel(p);
        (c + 0.5, r + 0.5)
    }

    pub fn image_to_geo(&self, x: f64, y: f64) -> GeoPoint {
        self.pixel_to_geo(x - 0.5, y - 0.5)
    }

    /// Transform of a window whose upper-left pixel is `(x_off, y_off)`.
    pub fn shifted(&self, x_off: f64, y_off: f64) -> GeoTransform {
        GeoTransform {
            origin_x: self.origin_x + x_off * self.px_size_x,
            origin_y: self.origin_y + y_off * self.px_size_y,
            ..*self
        }
    }
}

/// Axis-aligned box in continuous image space; `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl PixelBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeoError> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_xyxy(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeoError> {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(GeoError::NonFiniteInput("pixel box"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeoError::DegenerateBox { w: self.w, h: self.h });
        }
        Ok(())
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> PixelBox {
        PixelBox { x: self.x + dx, y: self.y + dy, ..*self }
    }

    /// Intersection with `[x0, x1] x [y0, y1]`; `None` when the overlap has no area.
    pub fn clip(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<PixelBox> {
        let nx0 = self.x.max(x0);
        let ny0 = self.y.max(y0);
        let nx1 = self.x1().min(x1);
        let ny1 = self.y1().min(y1);
        (nx1 > nx0 && ny1 > ny0).then_some(PixelBox { x: nx0, y: ny0, w: nx1 - nx0, h: ny1 - ny0 })
    }
}

/// Axis-aligned box of a `radius_m` disc around `p`.
pub fn buffer_point(p: &GeoPoint, radius_m: f64) -> Result<GeoBox, GeoError> {
    if !(radius_m.is_finite() && radius_m > 0.0) {
        return Err(GeoError::NonFiniteInput("buffer radius must be finite and > 0"));
    }
    if !(p.lon.is_finite() && p.lat.is_finite()) {
        return Err(GeoError::NonFiniteInput("point"));
    }
    if p.lat.abs() >= MAX_BUFFER_LAT {
        return Err(GeoError::LatitudeOutOfRange(p.lat));
    }
    let dlat = radius_m / METERS_PER_DEGREE;
    let dlon = radius_m / (METERS_PER_DEGREE * p.lat.to_radians().cos());
    Ok(GeoBox {
        min_lon: p.lon - dlon,
        min_lat: p.lat - dlat,
        max_lon: p.lon + dlon,
        max_lat: p.lat + dlat,
    })
}

/// Axis-aligned hull of the four transformed corners, in image space. No rounding.
pub fn geobox_to_pixelbox(gt: &GeoTransform, gb: &GeoBox) -> Result<PixelBox, GeoError> {
    let corners = [
        GeoPoint { lon: gb.min_lon, lat: gb.min_lat },
        GeoPoint { lon: gb.min_lon, lat: gb.max_lat },
        GeoPoint { lon: gb.max_lon, lat: gb.min_lat },
        GeoPoint { lon: gb.max_lon, lat: gb.max_lat },
    ];
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &corners {
        let (x, y) = gt.geo_to_image(c);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    // An inverted input box flips the corner order but not the hull, so
    // check the source orientation explicitly.
    if gb.min_lon >= gb.max_lon || gb.min_lat >= gb.max_lat {
        return Err(GeoError::DegenerateBox { w: gb.max_lon - gb.min_lon, h: gb.max_lat - gb.min_lat });
    }
    PixelBox::from_xyxy(x0, y0, x1, y1)
}

pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let iw = a.x1().min(b.x1()) - a.x.max(b.x);
    let ih = a.y1().min(b.y1()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
