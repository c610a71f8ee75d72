//! Rendering held-out views and scoring them.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use satfield_core::camera::{rays_from_camera, Ray, SceneNormalizer};
use satfield_core::dataset::{SceneDataset, Split};
use satfield_core::date::Month;
use satfield_core::field::{Conditioning, FieldParams, SeasonGate};
use satfield_core::image::Raster;
use satfield_core::math::Vec3;
use satfield_core::metrics::{altitude_mae, psnr, ssim, AltitudeError};
use satfield_core::render::{render_rays, view_pixels, AltitudeMap, RenderSettings, RenderedImage, RENDER_CHUNK};
use satfield_core::Result;

/// Render `rays` in parallel chunks. Chunk `k` uses seed `seed + k`, so
/// the output does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn render_rays_parallel(
    params: &FieldParams,
    rays: &[Ray],
    condition: Conditioning,
    normalizer: &SceneNormalizer,
    settings: &RenderSettings,
    gate: SeasonGate,
    seed: u64,
) -> Result<Vec<satfield_core::render::RenderedPixel>> {
    let parts = rays
        .par_chunks(RENDER_CHUNK)
        .enumerate()
        .map(|(k, chunk)| {
            let conds = vec![condition; chunk.len()];
            render_rays(params, chunk, &conds, normalizer, settings, gate, seed.wrapping_add(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Overrides applied when rendering a dataset view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewConditions {
    pub month: Month,
    /// ENU unit vector toward the sun.
    pub sun: Vec3,
    /// Transient embedding row.
    pub image_index: usize,
}

/// A rendered view together with its rays, for altitude lookups.
#[derive(Debug, Clone)]
pub struct ViewRender {
    pub image: RenderedImage,
    pub rays: Vec<Ray>,
}

/// Render dataset image `index` at its native size under `cond`.
pub fn render_dataset_view(
    params: &FieldParams,
    dataset: &SceneDataset,
    index: usize,
    cond: ViewConditions,
    settings: &RenderSettings,
) -> Result<ViewRender> {
    let im = &dataset.images[index];
    let (w, h) = (im.pixels.width, im.pixels.height);
    let normalizer = dataset.normalizer()?;
    let rays = rays_from_camera(&im.camera, &dataset.frame(), &normalizer, &view_pixels(w, h, 1.0), dataset.altitude_bounds())?;
    let condition = Conditioning {
        sun: cond.sun,
        image: cond.image_index,
        month: cond.month,
    };
    let pixels = render_rays_parallel(params, &rays, condition, &normalizer, settings, SeasonGate::OPEN, 0)?;
    Ok(ViewRender {
        image: RenderedImage::from_pixels(w, h, &pixels),
        rays,
    })
}

/// Conditions a test image is scored under: its own month and sun, and the
/// first transient row, since held-out images have no trained row.
pub fn test_conditions(dataset: &SceneDataset, index: usize) -> ViewConditions {
    let im = &dataset.images[index];
    ViewConditions {
        month: im.month(),
        sun: im.sun_direction,
        image_index: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub settings: RenderSettings,
    /// Pixels with lower opacity count as empty rays for the altitude metric.
    pub opacity_threshold: f64,
    pub remove_bias: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            settings: RenderSettings::default(),
            opacity_threshold: 0.5,
            remove_bias: false,
        }
    }
}

/// Altitude error of a rendered view against the reference DSM. Each
/// non-empty pixel's expected surface point is located along its ray and the
/// reference altitude read at that (east, north). `None` without a DSM.
pub fn view_altitude_error(
    dataset: &SceneDataset,
    view: &ViewRender,
    opacity_threshold: f64,
    remove_bias: bool,
) -> Result<Option<AltitudeError>> {
    let Some(dsm) = &dataset.gt_altitude else {
        return Ok(None);
    };
    let normalizer = dataset.normalizer()?;
    let (w, h) = (view.image.altitude.width, view.image.altitude.height);
    let mut gt = Raster::new(w, h, f64::NAN);
    let mut mask = vec![false; w * h];
    for (i, ray) in view.rays.iter().enumerate() {
        if view.image.opacity.data[i] < opacity_threshold {
            continue;
        }
        let map = AltitudeMap::for_ray(&normalizer, ray);
        let t = (view.image.altitude.data[i] - map.offset) / map.slope;
        let p = normalizer.denormalize(ray.at(t));
        if let Some(a) = dsm.altitude_at(p[0], p[1]) {
            gt.data[i] = a;
            mask[i] = true;
        }
    }
    altitude_mae(&view.image.altitude, &gt, &mask, remove_bias).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    pub month: u8,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Absent without a reference DSM.
    pub alt_mae_m: Option<f64>,
    pub alt_cells: usize,
    pub alt_bias_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub area: String,
    pub options: EvalOptions,
    pub images: Vec<ImageScore>,
    pub mean: MeanScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScore {
    pub psnr_db: f64,
    pub ssim: f64,
    pub alt_mae_m: Option<f64>,
    pub alt_cells: usize,
}

/// Score every test image under its own month and sun direction.
pub fn assemble_report(
    variant: &str,
    area: &str,
    dataset: &SceneDataset,
    params: &FieldParams,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let test = dataset.indices(Split::Test);
    if test.is_empty() {
        return Err(satfield_core::Error::Evaluation("dataset has no test images".into()));
    }
    let mut images = Vec::with_capacity(test.len());
    for &i in &test {
        let im = &dataset.images[i];
        let view = render_dataset_view(params, dataset, i, test_conditions(dataset, i), &options.settings)?;
        let alt = view_altitude_error(dataset, &view, options.opacity_threshold, options.remove_bias)?;
        images.push(ImageScore {
            id: im.id.clone(),
            month: im.month().number(),
            psnr_db: psnr(&view.image.color, &im.pixels, 1.0)?,
            ssim: ssim(&view.image.color, &im.pixels)?,
            alt_mae_m: alt.map(|a| a.mae),
            alt_cells: alt.map_or(0, |a| a.cells),
            alt_bias_m: alt.map(|a| a.bias),
        });
    }
    let n = images.len() as f64;
    let alt: Vec<_> = images.iter().filter_map(|s| s.alt_mae_m.map(|m| (m, s.alt_cells))).collect();
    let mean = MeanScore {
        psnr_db: images.iter().map(|s| s.psnr_db).sum::<f64>() / n,
        ssim: images.iter().map(|s| s.ssim).sum::<f64>() / n,
        alt_mae_m: (alt.len() == images.len()).then(|| alt.iter().map(|a| a.0).sum::<f64>() / n),
        alt_cells: alt.iter().map(|a| a.1).sum(),
    };
    Ok(EvalReport {
        variant: variant.to_string(),
        area: area.to_string(),
        options: *options,
        images,
        mean,
    })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Aligned text table with one row per image plus a mean row, and a
/// PSNR | SSIM | Alt. MAE column group per report.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    const W: usize = 9;
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    let rows: Vec<&str> = first.images.iter().map(|s| s.id.as_str()).collect();
    let label_w = rows.iter().map(|r| r.len()).max().unwrap_or(0).max(6);
    let group_w = 3 * W + 2;
    let _ = write!(out, "{:label_w$}", "");
    for r in reports {
        let _ = write!(out, " | {:^group_w$}", r.variant);
    }
    out.push('\n');
    let _ = write!(out, "{:label_w$}", "image");
    for _ in reports {
        let _ = write!(out, " | {:>W$} {:>W$} {:>W$}", "PSNR", "SSIM", "Alt.MAE");
    }
    out.push('\n');
    let rule = label_w + reports.len() * (group_w + 3);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    let line = |out: &mut String, label: &str, get: &dyn Fn(&EvalReport) -> (Option<f64>, Option<f64>, Option<f64>)| {
        let _ = write!(out, "{label:label_w$}");
        for r in reports {
            let (p, s, a) = get(r);
            let _ = write!(out, " | {:>W$} {:>W$} {:>W$}", cell(p, 2), cell(s, 3), cell(a, 2));
        }
        out.push('\n');
    };
    for id in &rows {
        line(&mut out, id, &|r| {
            r.images
                .iter()
                .find(|s| s.id == *id)
                .map_or((None, None, None), |s| (Some(s.psnr_db), Some(s.ssim), s.alt_mae_m))
        });
    }
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    line(&mut out, "mean", &|r| (Some(r.mean.psnr_db), Some(r.mean.ssim), r.mean.alt_mae_m));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(variant: &str, psnr: f64, alt: Option<f64>) -> EvalReport {
        let images = vec![
            ImageScore {
                id: "a".into(),
                month: 1,
                psnr_db: psnr,
                ssim: 0.5,
                alt_mae_m: alt,
                alt_cells: 3,
                alt_bias_m: alt.map(|_| 0.0),
            };
            1
        ];
        EvalReport {
            variant: variant.into(),
            area: "x".into(),
            options: EvalOptions::default(),
            mean: MeanScore {
                psnr_db: psnr,
                ssim: 0.5,
                alt_mae_m: alt,
                alt_cells: 3,
            },
            images,
        }
    }

    #[test]
    fn table_has_a_group_per_variant() {
        let t = comparison_table(&[report("SN", 17.9, Some(1.5)), report("PN", 20.7, None)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("SN") && lines[0].contains("PN"));
        assert_eq!(lines[1].matches("PSNR").count(), 2);
        assert!(lines.last().unwrap().starts_with("mean"));
        assert!(t.contains("20.70") && t.contains("1.50"));
        // Missing altitude prints as a dash, never as zero.
        assert!(lines.last().unwrap().trim_end().ends_with('-'));
        let widths: Vec<usize> = lines.iter().map(|l| l.len()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }
}
