//! Camera models, the local tangent frame, scene normalization and rays.
//!
//! RPC cubic terms are ordered
//! `1, L, P, H, LP, LH, PH, L^2, P^2, H^2, LPH, L^3, LP^2, LH^2, L^2P, P^3, PH^2, L^2H, P^2H, H^3`
//! with `L` the normalized longitude, `P` the normalized latitude and `H` the
//! normalized height.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{norm, normalize, scale, sub, Vec3};

const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Equirectangular linearization about an origin; adequate over a few
/// hundred meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl LocalFrame {
    fn meters_per_deg(&self) -> (f64, f64) {
        let k = EARTH_RADIUS_M * core::f64::consts::PI / 180.0;
        (k * libm::cos(self.origin_lat.to_radians()), k)
    }

    /// (lat, lon, alt) -> (east, north, up) meters.
    pub fn to_enu(&self, lat: f64, lon: f64, alt: f64) -> Vec3 {
        let (ke, kn) = self.meters_per_deg();
        [(lon - self.origin_lon) * ke, (lat - self.origin_lat) * kn, alt]
    }

    /// (east, north, up) meters -> (lat, lon, alt).
    pub fn to_geodetic(&self, enu: Vec3) -> (f64, f64, f64) {
        let (ke, kn) = self.meters_per_deg();
        (self.origin_lat + enu[1] / kn, self.origin_lon + enu[0] / ke, enu[2])
    }
}

/// Axis-aligned scene box in local frame meters; `min[2]..max[2]` is the
/// altitude range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl SceneBounds {
    pub fn altitude_range(&self) -> f64 {
        self.max[2] - self.min[2]
    }
}

/// Affine map from scene bounds onto `[-1, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneNormalizer {
    pub center: Vec3,
    pub half_extent: Vec3,
}

impl SceneNormalizer {
    pub fn new(bounds: &SceneBounds) -> Result<Self> {
        let mut center = [0.0; 3];
        let mut half = [0.0; 3];
        for i in 0..3 {
            half[i] = 0.5 * (bounds.max[i] - bounds.min[i]);
            center[i] = 0.5 * (bounds.max[i] + bounds.min[i]);
            if !(half[i] > 0.0 && half[i].is_finite()) {
                return Err(Error::validation("scene bounds", format!("axis {i} has zero or negative extent")));
            }
        }
        Ok(SceneNormalizer {
            center,
            half_extent: half,
        })
    }

    pub fn normalize(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.center[0]) / self.half_extent[0],
            (p[1] - self.center[1]) / self.half_extent[1],
            (p[2] - self.center[2]) / self.half_extent[2],
        ]
    }

    pub fn denormalize(&self, q: Vec3) -> Vec3 {
        [
            q[0] * self.half_extent[0] + self.center[0],
            q[1] * self.half_extent[1] + self.center[1],
            q[2] * self.half_extent[2] + self.center[2],
        ]
    }

    /// Direction in normalized space corresponding to a metric direction,
    /// renormalized to unit length.
    pub fn normalize_direction(&self, d: Vec3) -> Vec3 {
        normalize([
            d[0] / self.half_extent[0],
            d[1] / self.half_extent[1],
            d[2] / self.half_extent[2],
        ])
    }

    pub fn normalize_ray(&self, ray: &MetricRay) -> Ray {
        let a = self.normalize(ray.start);
        let b = self.normalize(ray.end);
        let d = sub(b, a);
        let len = norm(d);
        Ray {
            origin: a,
            direction: scale(d, 1.0 / len),
            t_near: 0.0,
            t_far: len,
            pixel: ray.pixel,
        }
    }

    /// Altitude in meters at parameter `t` along a normalized ray.
    pub fn altitude_at(&self, ray: &Ray, t: f64) -> f64 {
        (ray.origin[2] + t * ray.direction[2]) * self.half_extent[2] + self.center[2]
    }
}

/// A ray in normalized scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
    /// (row, col) of the source pixel.
    pub pixel: (f64, f64),
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ]
    }
}

/// Ray segment in local frame meters, from the top of the altitude range down
/// to the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRay {
    pub start: Vec3,
    pub end: Vec3,
    pub pixel: (f64, f64),
}

/// Offset and scale of one RPC coordinate: `normalized = (value - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcAxis {
    pub offset: f64,
    pub scale: f64,
}

impl RpcAxis {
    fn to_normalized(self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }
    fn from_normalized(self, v: f64) -> f64 {
        v * self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcModel {
    pub row_num: [f64; 20],
    pub row_den: [f64; 20],
    pub col_num: [f64; 20],
    pub col_den: [f64; 20],
    pub lat: RpcAxis,
    pub lon: RpcAxis,
    pub alt: RpcAxis,
    pub row: RpcAxis,
    pub col: RpcAxis,
}

/// The twenty cubic monomials in the documented order.
pub fn rpc_terms(l: f64, p: f64, h: f64) -> [f64; 20] {
    [
        1.0,
        l,
        p,
        h,
        l * p,
        l * h,
        p * h,
        l * l,
        p * p,
        h * h,
        l * p * h,
        l * l * l,
        l * p * p,
        l * h * h,
        l * l * p,
        p * p * p,
        p * h * h,
        l * l * h,
        p * p * h,
        h * h * h,
    ]
}

fn poly(coef: &[f64; 20], terms: &[f64; 20]) -> f64 {
    coef.iter().zip(terms).map(|(c, t)| c * t).sum()
}

const VALIDITY: f64 = 1.5;
const LOCALIZE_MAX_ITER: usize = 50;
const LOCALIZE_TOL_PX: f64 = 1e-3;

impl RpcModel {
    /// An RPC whose numerators are the given affine maps of `(L, P, H)` and
    /// whose denominators are 1. Each map is `[c0, cL, cP, cH]` in
    /// normalized row/col units.
    pub fn affine(row: [f64; 4], col: [f64; 4], axes: [RpcAxis; 5]) -> Self {
        let lift = |a: [f64; 4]| {
            let mut c = [0.0; 20];
            c[..4].copy_from_slice(&a);
            c
        };
        let mut one = [0.0; 20];
        one[0] = 1.0;
        RpcModel {
            row_num: lift(row),
            row_den: one,
            col_num: lift(col),
            col_den: one,
            lat: axes[0],
            lon: axes[1],
            alt: axes[2],
            row: axes[3],
            col: axes[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("lat", self.lat),
            ("lon", self.lon),
            ("alt", self.alt),
            ("row", self.row),
            ("col", self.col),
        ] {
            if !(axis.scale > 0.0 && axis.scale.is_finite() && axis.offset.is_finite()) {
                return Err(Error::validation("rpc", format!("{name} scale must be positive and finite")));
            }
        }
        let all = self.row_num.iter().chain(&self.row_den).chain(&self.col_num).chain(&self.col_den);
        if all.clone().any(|c| !c.is_finite()) {
            return Err(Error::validation("rpc", "non-finite coefficient"));
        }
        Ok(())
    }

    /// Normalized (row, col) for normalized (L, P, H), without range checks.
    fn eval_normalized(&self, l: f64, p: f64, h: f64) -> Result<(f64, f64)> {
        let t = rpc_terms(l, p, h);
        let rd = poly(&self.row_den, &t);
        let cd = poly(&self.col_den, &t);
        for d in [rd, cd] {
            if d.abs() < 1e-12 {
                return Err(Error::RpcSingular { value: d });
            }
        }
        Ok((poly(&self.row_num, &t) / rd, poly(&self.col_num, &t) / cd))
    }

    fn pixel_from_normalized(&self, l: f64, p: f64, h: f64) -> Result<(f64, f64)> {
        let (r, c) = self.eval_normalized(l, p, h)?;
        Ok((self.row.from_normalized(r), self.col.from_normalized(c)))
    }

    /// Project a geographic point to (row, col) pixel coordinates.
    pub fn project(&self, lat: f64, lon: f64, alt: f64) -> Result<(f64, f64)> {
        let p = self.lat.to_normalized(lat);
        let l = self.lon.to_normalized(lon);
        let h = self.alt.to_normalized(alt);
        if [p, l, h].iter().any(|v| !(v.abs() <= VALIDITY)) {
            return Err(Error::validation(
                "rpc input",
                format!("({lat}, {lon}, {alt}) outside the validity box"),
            ));
        }
        self.pixel_from_normalized(l, p, h)
    }

    /// Invert the projection at a fixed altitude by damped Newton iterations
    /// on normalized (lat, lon) with a finite-difference Jacobian.
    pub fn localize(&self, row: f64, col: f64, alt: f64) -> Result<(f64, f64)> {
        let h = self.alt.to_normalized(alt);
        let fail = |iterations: usize, residual_px: f64| Error::Localization {
            row,
            col,
            iterations,
            residual_px,
        };
        let residual = |p: f64, l: f64| -> Result<(f64, f64)> {
            let (r, c) = self.pixel_from_normalized(l, p, h)?;
            Ok((r - row, c - col))
        };
        let (mut p, mut l) = (0.0_f64, 0.0_f64);
        let (mut fr, mut fc) = residual(p, l)?;
        let mut err = libm::hypot(fr, fc);
        let eps = 1e-6;
        for iter in 0..LOCALIZE_MAX_ITER {
            if err < 1e-9 {
                return Ok((self.lat.from_normalized(p), self.lon.from_normalized(l)));
            }
            let (rp1, cp1) = residual(p + eps, l)?;
            let (rp0, cp0) = residual(p - eps, l)?;
            let (rl1, cl1) = residual(p, l + eps)?;
            let (rl0, cl0) = residual(p, l - eps)?;
            let j = [
                [(rp1 - rp0) / (2.0 * eps), (rl1 - rl0) / (2.0 * eps)],
                [(cp1 - cp0) / (2.0 * eps), (cl1 - cl0) / (2.0 * eps)],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 || !det.is_finite() {
                return Err(fail(iter, err));
            }
            let mut dp = -(j[1][1] * fr - j[0][1] * fc) / det;
            let mut dl = -(-j[1][0] * fr + j[0][0] * fc) / det;
            let step = libm::hypot(dp, dl);
            if step > 0.5 {
                dp *= 0.5 / step;
                dl *= 0.5 / step;
            }
            // Backtrack until the residual drops.
            let mut damping = 1.0;
            loop {
                let (np, nl) = (p + damping * dp, l + damping * dl);
                if np.abs() > VALIDITY * 2.0 || nl.abs() > VALIDITY * 2.0 {
                    return Err(fail(iter + 1, err));
                }
                let (nr, nc) = residual(np, nl)?;
                let nerr = libm::hypot(nr, nc);
                if nerr < err || damping < 1e-4 {
                    p = np;
                    l = nl;
                    fr = nr;
                    fc = nc;
                    err = nerr;
                    break;
                }
                damping *= 0.5;
            }
        }
        if err <= LOCALIZE_TOL_PX && p.abs() <= VALIDITY && l.abs() <= VALIDITY {
            Ok((self.lat.from_normalized(p), self.lon.from_normalized(l)))
        } else {
            Err(fail(LOCALIZE_MAX_ITER, err))
        }
    }
}

pub fn rpc_project(model: &RpcModel, lat: f64, lon: f64, alt: f64) -> Result<(f64, f64)> {
    model.project(lat, lon, alt)
}

pub fn rpc_localize(model: &RpcModel, row: f64, col: f64, alt: f64) -> Result<(f64, f64)> {
    model.localize(row, col, alt)
}

/// Perspective camera in local frame meters. `pose` is `[R | t]` mapping
/// world points to camera coordinates (`x_cam = R x + t`, camera looks down
/// its +z axis); `intrinsics` maps camera coordinates to `(col, row, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub intrinsics: [[f64; 3]; 3],
    pub pose: [[f64; 4]; 3],
}

impl PinholeCamera {
    pub fn center(&self) -> Vec3 {
        let r = |i: usize, j: usize| self.pose[i][j];
        let t = [self.pose[0][3], self.pose[1][3], self.pose[2][3]];
        // -R^T t
        [
            -(r(0, 0) * t[0] + r(1, 0) * t[1] + r(2, 0) * t[2]),
            -(r(0, 1) * t[0] + r(1, 1) * t[1] + r(2, 1) * t[2]),
            -(r(0, 2) * t[0] + r(1, 2) * t[1] + r(2, 2) * t[2]),
        ]
    }

    /// Project a local-frame point to (row, col).
    pub fn project(&self, p: Vec3) -> Result<(f64, f64)> {
        let mut c = [0.0; 3];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.pose[i][0] * p[0] + self.pose[i][1] * p[1] + self.pose[i][2] * p[2] + self.pose[i][3];
        }
        if c[2] <= 0.0 {
            return Err(Error::validation("pinhole projection", "point behind the camera"));
        }
        let k = &self.intrinsics;
        let u = (k[0][0] * c[0] + k[0][1] * c[1] + k[0][2] * c[2]) / c[2];
        let v = (k[1][0] * c[0] + k[1][1] * c[1] + k[1][2] * c[2]) / c[2];
        Ok((v, u))
    }

    /// World-frame unit direction through pixel (row, col).
    pub fn direction(&self, row: f64, col: f64) -> Result<Vec3> {
        let k = &self.intrinsics;
        // Upper-triangular intrinsics: solve K x = (col, row, 1).
        if k[0][0] == 0.0 || k[1][1] == 0.0 || k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(Error::validation("pinhole intrinsics", "expected upper-triangular K with nonzero focal lengths"));
        }
        let y = (row - k[1][2]) / k[1][1];
        let x = (col - k[0][2] - k[0][1] * y) / k[0][0];
        let cam = [x, y, 1.0];
        let r = |i: usize, j: usize| self.pose[i][j];
        Ok(normalize([
            r(0, 0) * cam[0] + r(1, 0) * cam[1] + r(2, 0) * cam[2],
            r(0, 1) * cam[0] + r(1, 1) * cam[1] + r(2, 1) * cam[2],
            r(0, 2) * cam[0] + r(1, 2) * cam[1] + r(2, 2) * cam[2],
        ]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CameraModel {
    Rpc(RpcModel),
    Pinhole(PinholeCamera),
}

impl CameraModel {
    /// Project a local-frame point to (row, col).
    pub fn project_enu(&self, frame: &LocalFrame, p: Vec3) -> Result<(f64, f64)> {
        match self {
            CameraModel::Rpc(rpc) => {
                let (lat, lon, alt) = frame.to_geodetic(p);
                rpc.project(lat, lon, alt)
            }
            CameraModel::Pinhole(cam) => cam.project(p),
        }
    }
}

/// Metric ray segments between the `alt_max` and `alt_min` planes for each
/// pixel.
pub fn metric_rays(
    camera: &CameraModel,
    frame: &LocalFrame,
    pixels: &[(f64, f64)],
    (alt_min, alt_max): (f64, f64),
) -> Result<Vec<MetricRay>> {
    if !(alt_min < alt_max) {
        return Err(Error::validation("altitude bounds", format!("{alt_min} !< {alt_max}")));
    }
    pixels
        .iter()
        .map(|&(row, col)| match camera {
            CameraModel::Rpc(rpc) => {
                let (lat_t, lon_t) = rpc.localize(row, col, alt_max)?;
                let (lat_b, lon_b) = rpc.localize(row, col, alt_min)?;
                Ok(MetricRay {
                    start: frame.to_enu(lat_t, lon_t, alt_max),
                    end: frame.to_enu(lat_b, lon_b, alt_min),
                    pixel: (row, col),
                })
            }
            CameraModel::Pinhole(cam) => {
                let c = cam.center();
                let d = cam.direction(row, col)?;
                if d[2].abs() < 1e-12 {
                    return Err(Error::validation("pinhole ray", format!("pixel ({row}, {col}) is horizontal")));
                }
                let at = |alt: f64| {
                    let s = (alt - c[2]) / d[2];
                    [c[0] + s * d[0], c[1] + s * d[1], alt]
                };
                Ok(MetricRay {
                    start: at(alt_max),
                    end: at(alt_min),
                    pixel: (row, col),
                })
            }
        })
        .collect()
}

/// Normalized rays for each pixel; `t_near` is the `alt_max` crossing and
/// `t_far` the `alt_min` crossing.
pub fn rays_from_camera(
    camera: &CameraModel,
    frame: &LocalFrame,
    normalizer: &SceneNormalizer,
    pixels: &[(f64, f64)],
    altitude_bounds: (f64, f64),
) -> Result<Vec<Ray>> {
    Ok(metric_rays(camera, frame, pixels, altitude_bounds)?
        .iter()
        .map(|r| normalizer.normalize_ray(r))
        .collect())
}
