//! PNG and float TIFF reading and writing for RGB images and single-band
//! rasters.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use satfield_core::image::{Image, Raster};

use crate::error::IoError;

/// On-disk pixel encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelFormat {
    Png8,
    Png16,
    TiffF32,
}

impl PixelFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PixelFormat::Png8 | PixelFormat::Png16 => "png",
            PixelFormat::TiffF32 => "tif",
        }
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|e| IoError::io(path, e))
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|e| IoError::io(path, e))
}

/// Read an 8- or 16-bit PNG as RGB in `[0, 1]`. Gray and alpha channels are
/// expanded or dropped.
pub fn read_png(path: &Path) -> Result<(Image, PixelFormat), IoError> {
    let bad = |m: String| IoError::format(path, m);
    let mut decoder = png::Decoder::new(BufReader::new(open(path)?));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(bad(format!("unsupported color type {other:?}"))),
    };
    let (depth, format) = match info.bit_depth {
        png::BitDepth::Eight => (1, PixelFormat::Png8),
        png::BitDepth::Sixteen => (2, PixelFormat::Png16),
        other => return Err(bad(format!("unsupported bit depth {other:?}"))),
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        for px in row.chunks_exact(channels * depth).take(w) {
            let sample = |c: usize| -> f64 {
                if depth == 1 {
                    px[c] as f64 / 255.0
                } else {
                    u16::from_be_bytes([px[2 * c], px[2 * c + 1]]) as f64 / 65535.0
                }
            };
            if channels < 3 {
                let g = sample(0);
                data.extend_from_slice(&[g, g, g]);
            } else {
                data.extend_from_slice(&[sample(0), sample(1), sample(2)]);
            }
        }
    }
    let image = Image::from_data(w, h, data).map_err(|e| bad(e.to_string()))?;
    Ok((image, format))
}

/// Write RGB as an 8- or 16-bit PNG, rounding and clamping to `[0, 1]`.
pub fn write_png(path: &Path, image: &Image, sixteen_bit: bool) -> Result<(), IoError> {
    let bad = |m: String| IoError::format(path, m);
    let mut encoder = png::Encoder::new(BufWriter::new(create(path)?), image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    let bytes: Vec<u8> = if sixteen_bit {
        encoder.set_depth(png::BitDepth::Sixteen);
        image
            .data
            .iter()
            .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
            .collect()
    } else {
        encoder.set_depth(png::BitDepth::Eight);
        image.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    };
    let mut writer = encoder.write_header().map_err(|e| bad(e.to_string()))?;
    writer.write_image_data(&bytes).map_err(|e| bad(e.to_string()))?;
    writer.finish().map_err(|e| bad(e.to_string()))
}

fn read_tiff_f32(path: &Path) -> Result<(usize, usize, usize, Vec<f32>), IoError> {
    let bad = |m: String| IoError::format(path, m);
    let mut decoder = tiff::decoder::Decoder::new(BufReader::new(open(path)?)).map_err(|e| bad(e.to_string()))?;
    let (w, h) = decoder.dimensions().map_err(|e| bad(e.to_string()))?;
    let channels = match decoder.colortype().map_err(|e| bad(e.to_string()))? {
        tiff::ColorType::Gray(32) => 1,
        tiff::ColorType::RGB(32) => 3,
        other => return Err(bad(format!("expected float32 gray or RGB, found {other:?}"))),
    };
    match decoder.read_image().map_err(|e| bad(e.to_string()))? {
        tiff::decoder::DecodingResult::F32(v) => Ok((w as usize, h as usize, channels, v)),
        _ => Err(bad("expected float32 samples".into())),
    }
}

pub fn read_tiff_image(path: &Path) -> Result<Image, IoError> {
    let (w, h, channels, v) = read_tiff_f32(path)?;
    if channels != 3 {
        return Err(IoError::format(path, "expected an RGB float32 TIFF"));
    }
    Image::from_data(w, h, v.into_iter().map(f64::from).collect()).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_tiff_image(path: &Path, image: &Image) -> Result<(), IoError> {
    let data: Vec<f32> = image.data.iter().map(|&v| v as f32).collect();
    let mut enc = tiff::encoder::TiffEncoder::new(BufWriter::new(create(path)?)).map_err(|e| IoError::format(path, e.to_string()))?;
    enc.write_image::<tiff::encoder::colortype::RGB32Float>(image.width as u32, image.height as u32, &data)
        .map_err(|e| IoError::format(path, e.to_string()))
}

pub fn read_raster(path: &Path) -> Result<Raster, IoError> {
    let (w, h, channels, v) = read_tiff_f32(path)?;
    if channels != 1 {
        return Err(IoError::format(path, "expected a single-band float32 TIFF"));
    }
    Ok(Raster {
        width: w,
        height: h,
        data: v.into_iter().map(f64::from).collect(),
    })
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<(), IoError> {
    let data: Vec<f32> = raster.data.iter().map(|&v| v as f32).collect();
    let mut enc = tiff::encoder::TiffEncoder::new(BufWriter::new(create(path)?)).map_err(|e| IoError::format(path, e.to_string()))?;
    enc.write_image::<tiff::encoder::colortype::Gray32Float>(raster.width as u32, raster.height as u32, &data)
        .map_err(|e| IoError::format(path, e.to_string()))
}

/// Read any supported image, choosing the decoder by extension.
pub fn read_image(path: &Path) -> Result<(Image, PixelFormat), IoError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => read_png(path),
        Some("tif") | Some("tiff") => Ok((read_tiff_image(path)?, PixelFormat::TiffF32)),
        _ => Err(IoError::format(path, "unknown image extension")),
    }
}

pub fn write_image(path: &Path, image: &Image, format: PixelFormat) -> Result<(), IoError> {
    match format {
        PixelFormat::Png8 => write_png(path, image, false),
        PixelFormat::Png16 => write_png(path, image, true),
        PixelFormat::TiffF32 => write_tiff_image(path, image),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        let data = (0..w * h * 3).map(|i| (i % 97) as f64 / 96.0).collect();
        Image::from_data(w, h, data).unwrap()
    }

    #[test]
    fn png16_round_trip_is_exact_after_first_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_png(&p, &ramp(5, 3), true).unwrap();
        let (a, f) = read_image(&p).unwrap();
        assert_eq!(f, PixelFormat::Png16);
        write_png(&p, &a, true).unwrap();
        assert_eq!(read_image(&p).unwrap().0, a);
        assert!(a.max_abs_diff(&ramp(5, 3)) <= 0.5 / 65535.0 + 1e-12);
    }

    #[test]
    fn png8_and_tiff_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_png(&p, &ramp(4, 4), false).unwrap();
        let (a, f) = read_png(&p).unwrap();
        assert_eq!(f, PixelFormat::Png8);
        assert!(a.max_abs_diff(&ramp(4, 4)) <= 0.5 / 255.0 + 1e-12);
        let t = dir.path().join("a.tif");
        write_tiff_image(&t, &a).unwrap();
        let b = read_tiff_image(&t).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-7);
        write_tiff_image(&t, &b).unwrap();
        assert_eq!(read_tiff_image(&t).unwrap(), b);
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tif");
        let r = Raster {
            width: 3,
            height: 2,
            data: vec![1.5, 2.0, -3.25, 300.125, 0.0, 7.0],
        };
        write_raster(&p, &r).unwrap();
        assert_eq!(read_raster(&p).unwrap(), r);
        assert!(read_tiff_image(&p).is_err());
    }
}
