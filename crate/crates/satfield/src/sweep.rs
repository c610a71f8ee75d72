//! Renders of one view under a grid of (month, day) sun directions.

use serde::{Deserialize, Serialize};

use satfield_core::dataset::SceneDataset;
use satfield_core::date::Month;
use satfield_core::field::FieldParams;
use satfield_core::image::Image;
use satfield_core::metrics::psnr;
use satfield_core::render::{RenderSettings, RenderedImage};
use satfield_core::solar::{sun_sweep, Site, SweepEntry};
use satfield_core::Result;

use crate::eval::{render_dataset_view, ViewConditions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub year: i32,
    pub months: Vec<u8>,
    pub days: Vec<u8>,
    pub hour: u8,
    pub minute: u8,
    pub site: Site,
    /// Dataset image whose camera is rendered.
    pub view: usize,
    pub settings: RenderSettings,
}

#[derive(Debug, Clone)]
pub struct SweepRender {
    pub month: Month,
    pub entry: SweepEntry,
    pub image: RenderedImage,
}

/// The ephemeris entries of a sweep, months outermost.
pub fn sweep_directions(req: &SweepRequest) -> Result<Vec<(Month, SweepEntry)>> {
    let mut out = Vec::with_capacity(req.months.len() * req.days.len());
    for &m in &req.months {
        let month = Month::new(m)?;
        for entry in sun_sweep(req.year, m, &req.days, req.hour, req.minute, req.site)? {
            out.push((month, entry));
        }
    }
    Ok(out)
}

/// Render the view once per sweep entry, using the entry's month for the
/// season head and its ephemeris direction for the sun.
pub fn run_sweep(params: &FieldParams, dataset: &SceneDataset, req: &SweepRequest) -> Result<Vec<SweepRender>> {
    if req.view >= dataset.images.len() {
        return Err(satfield_core::Error::validation("sweep view", format!("index {} of {} images", req.view, dataset.images.len())));
    }
    sweep_directions(req)?
        .into_iter()
        .map(|(month, entry)| {
            let cond = ViewConditions {
                month,
                sun: entry.direction,
                image_index: 0,
            };
            let view = render_dataset_view(params, dataset, req.view, cond, &req.settings)?;
            Ok(SweepRender {
                month,
                entry,
                image: view.image,
            })
        })
        .collect()
}

/// Symmetric matrix of pairwise PSNR (peak 1) with the capped value on the
/// diagonal.
pub fn psnr_matrix(images: &[&Image]) -> Result<Vec<Vec<f64>>> {
    let n = images.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = psnr(images[i], images[j], 1.0)?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}
