//! Reference implementations written separately from the library, used as
//! test oracles. They favor the most literal formulation over speed.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Explicit per-sample compositing loop: colors, weights, opacity.
pub fn brute_composite(sigma: &[f64], delta: &[f64], color: &[[f64; 3]]) -> ([f64; 3], Vec<f64>, f64) {
    let mut out = [0.0; 3];
    let mut weights = Vec::new();
    for i in 0..sigma.len() {
        let mut optical_depth = 0.0;
        for j in 0..i {
            optical_depth += sigma[j] * delta[j];
        }
        let transmittance = (-optical_depth).exp();
        let alpha = 1.0 - (-sigma[i] * delta[i]).exp();
        let w = transmittance * alpha;
        for k in 0..3 {
            out[k] += w * color[i][k];
        }
        weights.push(w);
    }
    let opacity = weights.iter().sum();
    (out, weights, opacity)
}

/// Per-sample color `c_m * c_a * (s + (1 - s) * a_sky)`, channel by channel.
pub fn color_law(c_m: [f64; 3], c_a: [f64; 3], s: f64, a_sky: [f64; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        let light = s + (1.0 - s) * a_sky[k];
        c[k] = c_m[k] * c_a[k] * light;
    }
    c
}

fn julian_day(year: i32, month: u32, day: u32, hours: f64) -> f64 {
    let (mut y, mut m) = (year as f64, month as f64);
    if month <= 2 {
        y -= 1.0;
        m += 12.0;
    }
    let a = (y / 100.0).floor();
    let b = 2.0 - a + (a / 4.0).floor();
    (365.25 * (y + 4716.0)).floor() + (30.6001 * (m + 1.0)).floor() + day as f64 + b - 1524.5 + hours / 24.0
}

/// Sun direction (east, north, up) from the NOAA solar calculator
/// formulation in Julian centuries, without refraction.
pub fn noaa_sun_enu(year: i32, month: u32, day: u32, hour: u32, minute: u32, lat_deg: f64, lon_deg: f64) -> [f64; 3] {
    let d2r = PI / 180.0;
    let hours = hour as f64 + minute as f64 / 60.0;
    let jd = julian_day(year, month, day, hours);
    let t = (jd - 2451545.0) / 36525.0;
    let l0 = (280.46646 + t * (36000.76983 + t * 0.0003032)).rem_euclid(360.0);
    let m = 357.52911 + t * (35999.05029 - 0.0001537 * t);
    let e = 0.016708634 - t * (0.000042037 + 0.0000001267 * t);
    let mr = m * d2r;
    let c = mr.sin() * (1.914602 - t * (0.004817 + 0.000014 * t))
        + (2.0 * mr).sin() * (0.019993 - 0.000101 * t)
        + (3.0 * mr).sin() * 0.000289;
    let true_long = l0 + c;
    let omega = 125.04 - 1934.136 * t;
    let app_long = true_long - 0.00569 - 0.00478 * (omega * d2r).sin();
    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0;
    let eps = eps0 + 0.00256 * (omega * d2r).cos();
    let decl = ((eps * d2r).sin() * (app_long * d2r).sin()).asin();
    let y = ((eps * d2r) / 2.0).tan().powi(2);
    let l0r = l0 * d2r;
    let eot_min = 4.0
        * (y * (2.0 * l0r).sin() - 2.0 * e * mr.sin() + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin())
        / d2r;
    let true_solar_min = (hours * 60.0 + eot_min + 4.0 * lon_deg).rem_euclid(1440.0);
    let hour_angle = true_solar_min / 4.0 - 180.0;
    let (lat, ha) = (lat_deg * d2r, hour_angle * d2r);
    let cos_zenith = lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos();
    let elevation = cos_zenith.clamp(-1.0, 1.0).asin();
    let azimuth = (ha.sin()).atan2(ha.cos() * lat.sin() - decl.tan() * lat.cos()) + PI;
    [
        azimuth.sin() * elevation.cos(),
        azimuth.cos() * elevation.cos(),
        elevation.sin(),
    ]
}

/// Declination in degrees from the same formulation.
pub fn noaa_declination_deg(year: i32, month: u32, day: u32, hour: u32) -> f64 {
    let d2r = PI / 180.0;
    let t = (julian_day(year, month, day, hour as f64) - 2451545.0) / 36525.0;
    let l0 = (280.46646 + t * (36000.76983 + t * 0.0003032)).rem_euclid(360.0);
    let m = (357.52911 + t * (35999.05029 - 0.0001537 * t)) * d2r;
    let c = m.sin() * (1.914602 - t * (0.004817 + 0.000014 * t)) + (2.0 * m).sin() * (0.019993 - 0.000101 * t) + (3.0 * m).sin() * 0.000289;
    let omega = 125.04 - 1934.136 * t;
    let app_long = l0 + c - 0.00569 - 0.00478 * (omega * d2r).sin();
    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0;
    let eps = eps0 + 0.00256 * (omega * d2r).cos();
    ((eps * d2r).sin() * (app_long * d2r).sin()).asin() / d2r
}

pub fn angle_between_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot: f64 = (0..3).map(|i| a[i] * b[i]).sum();
    let na = (0..3).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
    let nb = (0..3).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Exponents of (L, P, H) for each of the twenty cubic terms.
pub const RPC_EXPONENTS: [(i32, i32, i32); 20] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, 0, 1),
    (0, 1, 1),
    (2, 0, 0),
    (0, 2, 0),
    (0, 0, 2),
    (1, 1, 1),
    (3, 0, 0),
    (1, 2, 0),
    (1, 0, 2),
    (2, 1, 0),
    (0, 3, 0),
    (0, 1, 2),
    (2, 0, 1),
    (0, 2, 1),
    (0, 0, 3),
];

/// Term-by-term polynomial value.
pub fn rpc_poly_brute(coef: &[f64; 20], l: f64, p: f64, h: f64) -> f64 {
    let mut total = 0.0;
    for (c, &(el, ep, eh)) in coef.iter().zip(RPC_EXPONENTS.iter()) {
        total += c * l.powi(el) * p.powi(ep) * h.powi(eh);
    }
    total
}

pub fn psnr_reference(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mut sse = 0.0;
    for i in 0..a.len() {
        sse += (a[i] - b[i]) * (a[i] - b[i]);
    }
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return 99.0;
    }
    (10.0 * (peak * peak / mse).log10()).clamp(0.0, 99.0)
}

/// Mean SSIM over every position where the full 11 x 11 Gaussian window
/// (sigma 1.5) fits, evaluating each window directly in two dimensions.
pub fn ssim_reference(a: &[f64], b: &[f64], width: usize, height: usize) -> f64 {
    const R: usize = 5;
    let mut kernel = [[0.0; 2 * R + 1]; 2 * R + 1];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - R as f64, j as f64 - R as f64);
            *k = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *k;
        }
    }
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in R..height - R {
        for x in R..width - R {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..2 * R + 1 {
                for j in 0..2 * R + 1 {
                    let w = kernel[i][j] / total;
                    let idx = (y + i - R) * width + (x + j - R);
                    ma += w * a[idx];
                    mb += w * b[idx];
                    saa += w * a[idx] * a[idx];
                    sbb += w * b[idx] * b[idx];
                    sab += w * a[idx] * b[idx];
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

pub fn mae_reference(pred: &[f64], gt: &[f64], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for i in 0..pred.len() {
        if mask[i] {
            total += (pred[i] - gt[i]).abs();
            n += 1.0;
        }
    }
    total / n
}
