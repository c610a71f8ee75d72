//! RGB images and single-band rasters held as `f64`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Row-major interleaved RGB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{}x{} RGB image needs {} values, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn get(&self, row: usize, col: usize) -> Vec3 {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Vec3) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&v);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean Rec. 709 luma.
    pub fn mean_luminance(&self) -> f64 {
        let n = (self.width * self.height).max(1) as f64;
        self.data
            .chunks_exact(3)
            .map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
            .sum::<f64>()
            / n
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// One color plane as a raster.
    pub fn channel(&self, c: usize) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    /// Box-filter downsampling by an integer factor; trailing rows/columns
    /// that do not fill a block are dropped.
    pub fn downsample(&self, factor: usize) -> Result<Image> {
        let planes: Vec<Raster> = (0..3).map(|c| self.channel(c).downsample(factor)).collect::<Result<_>>()?;
        let (w, h) = (planes[0].width, planes[0].height);
        let mut data = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            for p in &planes {
                data.push(p.data[i]);
            }
        }
        Ok(Image {
            width: w,
            height: h,
            data,
        })
    }
}

/// Row-major single band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Raster {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn downsample(&self, factor: usize) -> Result<Raster> {
        if factor == 0 {
            return Err(Error::validation("downsample factor", "must be >= 1"));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        if w == 0 || h == 0 {
            return Err(Error::validation(
                "downsample factor",
                format!("{factor} exceeds {}x{}", self.width, self.height),
            ));
        }
        let inv = 1.0 / (factor * factor) as f64;
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for dr in 0..factor {
                    let row = &self.data[(r * factor + dr) * self.width..];
                    acc += row[c * factor..(c + 1) * factor].iter().sum::<f64>();
                }
                data.push(acc * inv);
            }
        }
        Ok(Raster {
            width: w,
            height: h,
            data,
        })
    }

    /// Bilinear sample at fractional (row, col) with edge clamping.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        let r = row.clamp(0.0, (self.height - 1) as f64);
        let c = col.clamp(0.0, (self.width - 1) as f64);
        let (r0, c0) = (libm::floor(r) as usize, libm::floor(c) as usize);
        let (r1, c1) = ((r0 + 1).min(self.height - 1), (c0 + 1).min(self.width - 1));
        let (fr, fc) = (r - r0 as f64, c - c0 as f64);
        let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
        let bottom = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_downsample_averages_blocks() {
        let r = Raster {
            width: 4,
            height: 2,
            data: vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0],
        };
        let d = r.downsample(2).unwrap();
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.data, vec![2.0, 6.0]);
        assert!(r.downsample(0).is_err());
        assert!(r.downsample(3).is_err());
    }

    #[test]
    fn image_downsample_keeps_channels_apart() {
        let mut img = Image::new(2, 2);
        for r in 0..2 {
            for c in 0..2 {
                img.set(r, c, [1.0, 0.5, (r * 2 + c) as f64 / 4.0]);
            }
        }
        let d = img.downsample(2).unwrap();
        assert_eq!(d.get(0, 0), [1.0, 0.5, 0.375]);
    }
}
