//! Scene datasets: image records, bounds, the reference altitude raster and
//! train/test splitting.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, LocalFrame, SceneBounds, SceneNormalizer};
use crate::date::{Month, UtcDateTime};
use crate::error::{Error, Result};
use crate::image::{Image, Raster};
use crate::math::{norm, Vec3};
use crate::solar::{enu_from_azimuth_elevation, Site};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub pixels: Image,
    pub acquisition: UtcDateTime,
    /// Unit vector toward the sun, east/north/up.
    pub sun_direction: Vec3,
    pub camera: CameraModel,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, pixels: Image, acquisition: UtcDateTime, sun_direction: Vec3, camera: CameraModel) -> Result<Self> {
        let r = ImageRecord {
            id: id.into(),
            pixels,
            acquisition,
            sun_direction,
            camera,
        };
        r.validate()?;
        Ok(r)
    }

    /// Build from metadata azimuth (clockwise from north) and elevation.
    pub fn from_sun_angles(
        id: impl Into<String>,
        pixels: Image,
        acquisition: UtcDateTime,
        azimuth_deg: f64,
        elevation_deg: f64,
        camera: CameraModel,
    ) -> Result<Self> {
        Self::new(id, pixels, acquisition, enu_from_azimuth_elevation(azimuth_deg, elevation_deg), camera)
    }

    pub fn month(&self) -> Month {
        self.acquisition.month()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("image id", "empty"));
        }
        if let Some(v) = self.pixels.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation("pixels", format!("image {}: value {v} outside [0, 1]", self.id)));
        }
        let n = norm(self.sun_direction);
        if !((n - 1.0).abs() <= 1e-9) {
            return Err(Error::validation("sun_direction", format!("image {}: norm {n}", self.id)));
        }
        Ok(())
    }
}

/// GDAL-style affine transform from (col, row) to local (east, north):
/// `e = g0 + col g1 + row g2`, `n = g3 + col g4 + row g5`, with
/// `(col, row)` measured from the raster's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform(pub [f64; 6]);

impl GeoTransform {
    pub fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        let g = &self.0;
        (g[0] + col * g[1] + row * g[2], g[3] + col * g[4] + row * g[5])
    }

    /// Inverse of [`GeoTransform::apply`].
    pub fn invert(&self, east: f64, north: f64) -> Result<(f64, f64)> {
        let g = &self.0;
        let det = g[1] * g[5] - g[2] * g[4];
        if det.abs() < 1e-15 {
            return Err(Error::validation("geotransform", "singular"));
        }
        let (de, dn) = (east - g[0], north - g[3]);
        Ok(((g[5] * de - g[2] * dn) / det, (-g[4] * de + g[1] * dn) / det))
    }
}

/// Reference surface altitudes in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct AltitudeRaster {
    pub raster: Raster,
    pub transform: GeoTransform,
    pub nodata: Option<f64>,
}

impl AltitudeRaster {
    /// Altitude at a local (east, north) position, or `None` outside the
    /// raster or on no-data cells.
    pub fn altitude_at(&self, east: f64, north: f64) -> Option<f64> {
        let (col, row) = self.transform.invert(east, north).ok()?;
        let (w, h) = (self.raster.width as f64, self.raster.height as f64);
        if !(col >= 0.0 && row >= 0.0 && col < w && row < h) {
            return None;
        }
        let v = self.raster.get(row as usize, col as usize);
        match self.nodata {
            Some(nd) if v == nd => None,
            _ if !v.is_finite() => None,
            _ => Some(v),
        }
    }
}

/// Geographic extent and altitude range, degrees and meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_alt: f64,
    pub max_alt: f64,
}

impl GeoBounds {
    pub fn center(&self) -> Site {
        Site {
            latitude: 0.5 * (self.min_lat + self.max_lat),
            longitude: 0.5 * (self.min_lon + self.max_lon),
        }
    }

    pub fn frame(&self) -> LocalFrame {
        let c = self.center();
        LocalFrame {
            origin_lat: c.latitude,
            origin_lon: c.longitude,
        }
    }

    /// The box in the frame centred on it.
    pub fn local(&self) -> SceneBounds {
        let f = self.frame();
        SceneBounds {
            min: f.to_enu(self.min_lat, self.min_lon, self.min_alt),
            max: f.to_enu(self.max_lat, self.max_lon, self.max_alt),
        }
    }

    pub fn altitude_range(&self) -> f64 {
        self.max_alt - self.min_alt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    pub images: Vec<ImageRecord>,
    pub bounds: GeoBounds,
    pub gt_altitude: Option<AltitudeRaster>,
    /// One label per image.
    pub split: Vec<Split>,
}

impl SceneDataset {
    /// Dataset with every image labelled train.
    pub fn new(images: Vec<ImageRecord>, bounds: GeoBounds, gt_altitude: Option<AltitudeRaster>) -> Result<Self> {
        let split = alloc::vec![Split::Train; images.len()];
        let d = SceneDataset {
            images,
            bounds,
            gt_altitude,
            split,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn frame(&self) -> LocalFrame {
        self.bounds.frame()
    }

    pub fn local_bounds(&self) -> SceneBounds {
        self.bounds.local()
    }

    pub fn normalizer(&self) -> Result<SceneNormalizer> {
        SceneNormalizer::new(&self.local_bounds())
    }

    pub fn altitude_bounds(&self) -> (f64, f64) {
        (self.bounds.min_alt, self.bounds.max_alt)
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.images.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.images.iter().position(|r| r.id == id)
    }

    /// Checks record validity, id uniqueness, positive extents and
    /// same-month coverage of the test images.
    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::validation("dataset", "no images"));
        }
        if self.split.len() != self.images.len() {
            return Err(Error::validation("split", format!("{} labels for {} images", self.split.len(), self.images.len())));
        }
        if !(self.bounds.altitude_range() > 0.0) {
            return Err(Error::validation("altitude range", format!("{} m must be positive", self.bounds.altitude_range())));
        }
        if !(self.bounds.max_lat > self.bounds.min_lat && self.bounds.max_lon > self.bounds.min_lon) {
            return Err(Error::validation("bounds", "empty geographic extent"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.images {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation("image id", format!("duplicate {}", r.id)));
            }
        }
        let uncovered = uncovered_months(&self.images, &self.split);
        if !uncovered.is_empty() {
            return Err(Error::Split(format!("test months without a train image: {}", month_list(&uncovered))));
        }
        Ok(())
    }
}

fn uncovered_months(images: &[ImageRecord], split: &[Split]) -> Vec<Month> {
    let train: BTreeSet<Month> = images.iter().zip(split).filter(|(_, s)| **s == Split::Train).map(|(r, _)| r.month()).collect();
    let test: BTreeSet<Month> = images.iter().zip(split).filter(|(_, s)| **s == Split::Test).map(|(r, _)| r.month()).collect();
    test.difference(&train).copied().collect()
}

fn month_list(months: &[Month]) -> String {
    months.iter().map(|m| format!("{m}")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// These ids are test, everything else train.
    Explicit(Vec<String>),
    /// One test image per meteorological season. Within each season the
    /// month with the most images is used (ties go to the earlier month in
    /// the season) and its latest acquisition becomes the test image, so that
    /// month keeps at least one training image.
    OnePerSeason,
}

pub fn split_train_test(dataset: &SceneDataset, policy: &SplitPolicy) -> Result<SceneDataset> {
    let n = dataset.images.len();
    let mut split = alloc::vec![Split::Train; n];
    match policy {
        SplitPolicy::Explicit(ids) => {
            let missing: Vec<&str> = ids.iter().filter(|id| dataset.index_of(id).is_none()).map(String::as_str).collect();
            if !missing.is_empty() {
                return Err(Error::Split(format!("unknown test ids: {}", missing.join(", "))));
            }
            for id in ids {
                split[dataset.index_of(id).expect("checked")] = Split::Test;
            }
        }
        SplitPolicy::OnePerSeason => {
            let mut problems = Vec::new();
            for season in 0..4usize {
                let months: Vec<Month> = Month::ALL.iter().copied().filter(|m| m.season() == season).collect();
                let count = |m: Month| dataset.images.iter().filter(|r| r.month() == m).count();
                let best = months.iter().copied().filter(|&m| count(m) >= 2).max_by(|a, b| {
                    // prefer more images, then the season's earlier month
                    count(*a).cmp(&count(*b)).then_with(|| {
                        let pos = |m: &Month| months.iter().position(|x| x == m).expect("member");
                        pos(b).cmp(&pos(a))
                    })
                });
                match best {
                    Some(m) => {
                        let pick = (0..n)
                            .filter(|&i| dataset.images[i].month() == m)
                            .max_by_key(|&i| (dataset.images[i].acquisition, i))
                            .expect("count >= 2");
                        split[pick] = Split::Test;
                    }
                    None => problems.push(format!("{}", SEASON_NAMES[season])),
                }
            }
            if !problems.is_empty() {
                return Err(Error::Split(format!(
                    "no month with two or more images in season(s): {}",
                    problems.join(", ")
                )));
            }
        }
    }
    let uncovered = uncovered_months(&dataset.images, &split);
    if !uncovered.is_empty() {
        return Err(Error::Split(format!("test months without a train image: {}", month_list(&uncovered))));
    }
    Ok(SceneDataset {
        split,
        ..dataset.clone()
    })
}

pub const SEASON_NAMES: [&str; 4] = ["DJF", "MAM", "JJA", "SON"];
