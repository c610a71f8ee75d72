//! Dataset bundles on disk.
//!
//! ```text
//! root/scene.json            geographic bounds and altitude range
//! root/images/<id>.png|.tif  8/16-bit PNG or float32 TIFF, RGB
//! root/metadata/<id>.json    one document per image
//! root/dsm.tif               optional float32 altitude raster
//! root/dsm_geo.json          its transform, required with dsm.tif
//! root/split.json            optional {"test": [ids]}
//! ```
//!
//! Image metadata keys: `id`, `acquisition_date` (ISO-8601 with time and UTC
//! offset), `sun_azimuth_deg`, `sun_elevation_deg`, `width`, `height` and
//! one of `rpc` or `pinhole`. The DSM transform maps (col, row) from the
//! raster's top-left corner to local east/north meters about the center of
//! the scene bounds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use satfield_core::camera::{CameraModel, PinholeCamera, RpcAxis, RpcModel};
use satfield_core::dataset::{split_train_test, AltitudeRaster, GeoBounds, GeoTransform, ImageRecord, SceneDataset, Split, SplitPolicy};
use satfield_core::solar::azimuth_elevation_from_enu;

use crate::error::IoError;
use crate::imageio::{read_image, read_raster, write_image, write_raster, PixelFormat};
use crate::time::{format_instant, parse_instant};

/// Per-image facts kept verbatim from disk so a rewrite reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub format: PixelFormat,
    pub sun_azimuth_deg: f64,
    pub sun_elevation_deg: f64,
}

impl ImageMeta {
    /// Metadata derived from a record's sun vector.
    pub fn derived(record: &ImageRecord, format: PixelFormat) -> Self {
        let (az, el) = azimuth_elevation_from_enu(record.sun_direction);
        ImageMeta {
            format,
            sun_azimuth_deg: az,
            sun_elevation_deg: el,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dataset: SceneDataset,
    /// Parallel to `dataset.images`.
    pub meta: Vec<ImageMeta>,
}

fn read_json(path: &Path) -> Result<Value, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::format(path, format!("invalid JSON: {e}")))
}

fn write_json(path: &Path, value: &Value) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| IoError::io(path, e))
}

/// Typed access to a JSON object that reports the file and field on error.
struct Fields<'a> {
    path: &'a Path,
    obj: &'a Map<String, Value>,
    prefix: String,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, value: &'a Value) -> Result<Self, IoError> {
        let obj = value.as_object().ok_or_else(|| IoError::format(path, "expected a JSON object"))?;
        Ok(Fields {
            path,
            obj,
            prefix: String::new(),
        })
    }

    fn name(&self, key: &str) -> String {
        format!("{}{key}", self.prefix)
    }

    fn get(&self, key: &str) -> Result<&'a Value, IoError> {
        self.obj.get(key).ok_or_else(|| IoError::field(self.path, self.name(key), "missing"))
    }

    fn opt(&self, key: &str) -> Option<&'a Value> {
        self.obj.get(key).filter(|v| !v.is_null())
    }

    fn f64(&self, key: &str) -> Result<f64, IoError> {
        self.get(key)?
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| IoError::field(self.path, self.name(key), "expected a finite number"))
    }

    fn usize(&self, key: &str) -> Result<usize, IoError> {
        self.get(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| IoError::field(self.path, self.name(key), "expected a nonnegative integer"))
    }

    fn str(&self, key: &str) -> Result<&'a str, IoError> {
        self.get(key)?.as_str().ok_or_else(|| IoError::field(self.path, self.name(key), "expected a string"))
    }

    fn numbers(&self, key: &str, len: usize) -> Result<Vec<f64>, IoError> {
        let err = || IoError::field(self.path, self.name(key), format!("expected {len} numbers"));
        let arr = self.get(key)?.as_array().ok_or_else(err)?;
        if arr.len() != len {
            return Err(err());
        }
        arr.iter().map(|v| v.as_f64().filter(|x| x.is_finite()).ok_or_else(err)).collect()
    }

    fn nested(&self, key: &str) -> Result<Fields<'a>, IoError> {
        let v = self.get(key)?;
        let obj = v.as_object().ok_or_else(|| IoError::field(self.path, self.name(key), "expected an object"))?;
        Ok(Fields {
            path: self.path,
            obj,
            prefix: format!("{}{key}.", self.prefix),
        })
    }
}

fn array20(v: Vec<f64>) -> [f64; 20] {
    v.try_into().expect("length checked")
}

fn parse_rpc(f: &Fields<'_>) -> Result<RpcModel, IoError> {
    let axis = |name: &str| -> Result<RpcAxis, IoError> {
        Ok(RpcAxis {
            offset: f.f64(&format!("{name}_off"))?,
            scale: f.f64(&format!("{name}_scale"))?,
        })
    };
    let rpc = RpcModel {
        row_num: array20(f.numbers("row_num", 20)?),
        row_den: array20(f.numbers("row_den", 20)?),
        col_num: array20(f.numbers("col_num", 20)?),
        col_den: array20(f.numbers("col_den", 20)?),
        lat: axis("lat")?,
        lon: axis("lon")?,
        alt: axis("alt")?,
        row: axis("row")?,
        col: axis("col")?,
    };
    rpc.validate().map_err(|e| IoError::field(f.path, f.prefix.trim_end_matches('.'), e.to_string()))?;
    Ok(rpc)
}

fn rpc_json(rpc: &RpcModel) -> Value {
    json!({
        "row_num": rpc.row_num.to_vec(),
        "row_den": rpc.row_den.to_vec(),
        "col_num": rpc.col_num.to_vec(),
        "col_den": rpc.col_den.to_vec(),
        "lat_off": rpc.lat.offset, "lat_scale": rpc.lat.scale,
        "lon_off": rpc.lon.offset, "lon_scale": rpc.lon.scale,
        "alt_off": rpc.alt.offset, "alt_scale": rpc.alt.scale,
        "row_off": rpc.row.offset, "row_scale": rpc.row.scale,
        "col_off": rpc.col.offset, "col_scale": rpc.col.scale,
    })
}

fn parse_pinhole(f: &Fields<'_>) -> Result<PinholeCamera, IoError> {
    let k = f.numbers("intrinsics", 9)?;
    let p = f.numbers("pose", 12)?;
    Ok(PinholeCamera {
        intrinsics: [[k[0], k[1], k[2]], [k[3], k[4], k[5]], [k[6], k[7], k[8]]],
        pose: [[p[0], p[1], p[2], p[3]], [p[4], p[5], p[6], p[7]], [p[8], p[9], p[10], p[11]]],
    })
}

fn pinhole_json(cam: &PinholeCamera) -> Value {
    json!({
        "intrinsics": cam.intrinsics.iter().flatten().copied().collect::<Vec<f64>>(),
        "pose": cam.pose.iter().flatten().copied().collect::<Vec<f64>>(),
    })
}

/// Rescale a camera so that pixel centers map to the centers of
/// `factor x factor` blocks.
pub fn downsample_camera(camera: &CameraModel, factor: usize) -> CameraModel {
    let f = factor as f64;
    let px = |v: f64| (v + 0.5) / f - 0.5;
    match camera {
        CameraModel::Rpc(rpc) => {
            let mut r = rpc.clone();
            r.row = RpcAxis {
                offset: px(rpc.row.offset),
                scale: rpc.row.scale / f,
            };
            r.col = RpcAxis {
                offset: px(rpc.col.offset),
                scale: rpc.col.scale / f,
            };
            CameraModel::Rpc(r)
        }
        CameraModel::Pinhole(cam) => {
            let mut c = cam.clone();
            for row in 0..2 {
                for j in 0..3 {
                    c.intrinsics[row][j] /= f;
                }
                c.intrinsics[row][2] += 0.5 / f - 0.5;
            }
            CameraModel::Pinhole(c)
        }
    }
}

fn parse_bounds(path: &Path) -> Result<GeoBounds, IoError> {
    let v = read_json(path)?;
    let f = Fields::new(path, &v)?;
    Ok(GeoBounds {
        min_lat: f.f64("min_lat")?,
        max_lat: f.f64("max_lat")?,
        min_lon: f.f64("min_lon")?,
        max_lon: f.f64("max_lon")?,
        min_alt: f.f64("min_alt")?,
        max_alt: f.f64("max_alt")?,
    })
}

fn image_path(root: &Path, id: &str) -> Option<PathBuf> {
    ["png", "tif", "tiff"]
        .iter()
        .map(|ext| root.join("images").join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, IoError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let p = entry.map_err(|e| IoError::io(dir, e))?.path();
        let ok = p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e.to_ascii_lowercase().as_str()));
        if ok && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn load_record(root: &Path, meta_path: &Path, downsample: usize) -> Result<(ImageRecord, ImageMeta), IoError> {
    let v = read_json(meta_path)?;
    let f = Fields::new(meta_path, &v)?;
    let id = f.str("id")?.to_string();
    let stem = meta_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    if stem != id {
        return Err(IoError::field(meta_path, "id", format!("`{id}` does not match the file name")));
    }
    let date_text = f.str("acquisition_date")?;
    let acquisition = parse_instant(date_text).map_err(|e| IoError::field(meta_path, "acquisition_date", e))?;
    let az = f.f64("sun_azimuth_deg")?;
    let el = f.f64("sun_elevation_deg")?;
    let (w, h) = (f.usize("width")?, f.usize("height")?);
    let camera = match (f.opt("rpc"), f.opt("pinhole")) {
        (Some(_), None) => CameraModel::Rpc(parse_rpc(&f.nested("rpc")?)?),
        (None, Some(_)) => CameraModel::Pinhole(parse_pinhole(&f.nested("pinhole")?)?),
        (Some(_), Some(_)) => return Err(IoError::field(meta_path, "rpc", "both `rpc` and `pinhole` given")),
        (None, None) => return Err(IoError::field(meta_path, "rpc", "missing (need `rpc` or `pinhole`)")),
    };
    let img_path = image_path(root, &id).ok_or_else(|| IoError::consistency(root, format!("no image file for metadata {id}")))?;
    let (mut pixels, format) = read_image(&img_path)?;
    if (pixels.width, pixels.height) != (w, h) {
        return Err(IoError::field(
            meta_path,
            "width",
            format!("metadata says {w}x{h}, image is {}x{}", pixels.width, pixels.height),
        ));
    }
    let mut camera = camera;
    if downsample > 1 {
        pixels = pixels.downsample(downsample)?;
        camera = downsample_camera(&camera, downsample);
    }
    if let Some(bad) = pixels.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(IoError::format(&img_path, format!("pixel value {bad} outside [0, 1]")));
    }
    let record = ImageRecord::from_sun_angles(id, pixels, acquisition, az, el, camera)?;
    Ok((
        record,
        ImageMeta {
            format,
            sun_azimuth_deg: az,
            sun_elevation_deg: el,
        },
    ))
}

fn load_dsm(root: &Path) -> Result<Option<AltitudeRaster>, IoError> {
    let tif = root.join("dsm.tif");
    if !tif.is_file() {
        return Ok(None);
    }
    let geo_path = root.join("dsm_geo.json");
    let v = read_json(&geo_path)?;
    let f = Fields::new(&geo_path, &v)?;
    let t = f.numbers("transform", 6)?;
    let nodata = match f.opt("nodata") {
        None => None,
        Some(_) => Some(f.f64("nodata")?),
    };
    Ok(Some(AltitudeRaster {
        raster: read_raster(&tif)?,
        transform: GeoTransform([t[0], t[1], t[2], t[3], t[4], t[5]]),
        nodata,
    }))
}

/// Read a bundle. Images are box-downsampled by `downsample` and cameras
/// rescaled to match. A `split.json` is applied when present; otherwise
/// every image is labelled train.
pub fn load_dataset(root: &Path, downsample: usize) -> Result<LoadedDataset, IoError> {
    if downsample == 0 {
        return Err(IoError::consistency(root, "downsample factor must be >= 1"));
    }
    if !root.is_dir() {
        return Err(IoError::consistency(root, "not a directory"));
    }
    let meta_dir = root.join("metadata");
    let img_dir = root.join("images");
    if !meta_dir.is_dir() || !img_dir.is_dir() {
        return Err(IoError::consistency(root, "expected `images/` and `metadata/` subdirectories"));
    }
    let meta_files = list_files(&meta_dir, &["json"])?;
    let img_files = list_files(&img_dir, &["png", "tif", "tiff"])?;
    if meta_files.is_empty() {
        return Err(IoError::consistency(root, "no metadata files"));
    }
    if meta_files.len() != img_files.len() {
        return Err(IoError::consistency(
            root,
            format!("{} metadata files but {} images", meta_files.len(), img_files.len()),
        ));
    }
    let bounds = parse_bounds(&root.join("scene.json"))?;
    let mut images = Vec::with_capacity(meta_files.len());
    let mut meta = Vec::with_capacity(meta_files.len());
    for p in &meta_files {
        let (r, m) = load_record(root, p, downsample)?;
        images.push(r);
        meta.push(m);
    }
    let mut dataset = SceneDataset::new(images, bounds, load_dsm(root)?)?;
    let split_path = root.join("split.json");
    if split_path.is_file() {
        let v = read_json(&split_path)?;
        let f = Fields::new(&split_path, &v)?;
        let ids = f
            .get("test")?
            .as_array()
            .ok_or_else(|| IoError::field(&split_path, "test", "expected an array of ids"))?
            .iter()
            .map(|x| x.as_str().map(str::to_string).ok_or_else(|| IoError::field(&split_path, "test", "expected strings")))
            .collect::<Result<Vec<_>, _>>()?;
        dataset = split_train_test(&dataset, &SplitPolicy::Explicit(ids))?;
    }
    Ok(LoadedDataset { dataset, meta })
}

/// Write a bundle. With `meta` the recorded formats and sun angles are
/// reused; otherwise images use `format` and angles come from the sun
/// vectors. The split is written when any image is labelled test.
pub fn write_dataset(root: &Path, dataset: &SceneDataset, meta: Option<&[ImageMeta]>, format: PixelFormat) -> Result<(), IoError> {
    let meta: Vec<ImageMeta> = match meta {
        Some(m) if m.len() == dataset.images.len() => m.to_vec(),
        Some(m) => {
            return Err(IoError::consistency(
                root,
                format!("{} metadata entries for {} images", m.len(), dataset.images.len()),
            ))
        }
        None => dataset.images.iter().map(|r| ImageMeta::derived(r, format)).collect(),
    };
    for sub in ["images", "metadata"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(|e| IoError::io(&d, e))?;
    }
    let b = &dataset.bounds;
    write_json(
        &root.join("scene.json"),
        &json!({
            "min_lat": b.min_lat, "max_lat": b.max_lat,
            "min_lon": b.min_lon, "max_lon": b.max_lon,
            "min_alt": b.min_alt, "max_alt": b.max_alt,
        }),
    )?;
    for (r, m) in dataset.images.iter().zip(&meta) {
        write_image(&root.join("images").join(format!("{}.{}", r.id, m.format.extension())), &r.pixels, m.format)?;
        let mut doc = json!({
            "id": r.id,
            "acquisition_date": format_instant(&r.acquisition),
            "sun_azimuth_deg": m.sun_azimuth_deg,
            "sun_elevation_deg": m.sun_elevation_deg,
            "width": r.pixels.width,
            "height": r.pixels.height,
        });
        let key = match &r.camera {
            CameraModel::Rpc(rpc) => ("rpc", rpc_json(rpc)),
            CameraModel::Pinhole(cam) => ("pinhole", pinhole_json(cam)),
        };
        doc.as_object_mut().expect("object").insert(key.0.into(), key.1);
        write_json(&root.join("metadata").join(format!("{}.json", r.id)), &doc)?;
    }
    if let Some(dsm) = &dataset.gt_altitude {
        write_raster(&root.join("dsm.tif"), &dsm.raster)?;
        write_json(
            &root.join("dsm_geo.json"),
            &json!({ "transform": dsm.transform.0.to_vec(), "nodata": dsm.nodata }),
        )?;
    }
    let test: Vec<&str> = dataset.indices(Split::Test).iter().map(|&i| dataset.images[i].id.as_str()).collect();
    if !test.is_empty() {
        write_json(&root.join("split.json"), &json!({ "test": test }))?;
    }
    Ok(())
}
