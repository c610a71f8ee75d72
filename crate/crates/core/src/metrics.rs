//! PSNR, SSIM and masked altitude MAE.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Raster};

/// Reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::validation("image shapes", format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

/// `10 log10(peak^2 / mse)`, clamped to `[0, PSNR_CAP_DB]`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_shape((a.width, a.height), (b.width, b.height))?;
    psnr_slices(&a.data, &b.data, peak)
}

pub fn psnr_slices(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::validation("psnr inputs", format!("lengths {} and {}", a.len(), b.len())));
    }
    if !(peak > 0.0) {
        return Err(Error::validation("peak", "must be positive"));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * libm::log10(peak * peak / mse)).clamp(0.0, PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut g: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - c;
            libm::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable 'valid' filtering of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        let line = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&line[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| taps[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM of one plane with dynamic range 1.
pub fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::validation("ssim planes", "length does not match dimensions"));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::validation(
            "ssim input",
            format!("{width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(a, width, height, &taps);
    let mu_b = filter_valid(b, width, height, &taps);
    let aa = filter_valid(&prod(a, a), width, height, &taps);
    let bb = filter_valid(&prod(b, b), width, height, &taps);
    let ab = filter_valid(&prod(a, b), width, height, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Channel-mean SSIM of two RGB images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shape((a.width, a.height), (b.width, b.height))?;
    let mut s = 0.0;
    for k in 0..3 {
        s += ssim_plane(&a.channel(k).data, &b.channel(k).data, a.width, a.height)?;
    }
    Ok(s / 3.0)
}

pub fn ssim_raster(a: &Raster, b: &Raster) -> Result<f64> {
    check_shape((a.width, a.height), (b.width, b.height))?;
    ssim_plane(&a.data, &b.data, a.width, a.height)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeError {
    pub mae: f64,
    /// Cells that entered the mean.
    pub cells: usize,
    /// Mean signed error subtracted before averaging (0 without bias removal).
    pub bias: f64,
}

/// Masked mean absolute altitude difference. Cells that are masked out or
/// non-finite in either raster are skipped.
pub fn altitude_mae(pred: &Raster, gt: &Raster, mask: &[bool], remove_bias: bool) -> Result<AltitudeError> {
    check_shape((pred.width, pred.height), (gt.width, gt.height))?;
    if mask.len() != pred.data.len() {
        return Err(Error::validation("altitude mask", format!("{} cells for {} pixels", mask.len(), pred.data.len())));
    }
    let diffs: Vec<f64> = pred
        .data
        .iter()
        .zip(&gt.data)
        .zip(mask)
        .filter(|((p, g), m)| **m && p.is_finite() && g.is_finite())
        .map(|((p, g), _)| p - g)
        .collect();
    if diffs.is_empty() {
        return Err(Error::Evaluation("altitude mask selects no valid cells".into()));
    }
    let n = diffs.len() as f64;
    let bias = if remove_bias { diffs.iter().sum::<f64>() / n } else { 0.0 };
    Ok(AltitudeError {
        mae: diffs.iter().map(|d| (d - bias).abs()).sum::<f64>() / n,
        cells: diffs.len(),
        bias,
    })
}
