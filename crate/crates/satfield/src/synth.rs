//! Synthetic seasonal scenes as ready-made datasets.

use serde::{Deserialize, Serialize};

use satfield_core::dataset::{split_train_test, SceneDataset, SplitPolicy};
use satfield_core::date::UtcDateTime;
use satfield_core::synthetic::{
    generate_synthetic_scene, monthly_views, seeded_views, CameraKind, SyntheticOracle, SyntheticSceneSpec, ViewSpec,
};
use satfield_core::Result;

/// Days cycled through when more than twelve views are requested.
const CYCLE_DAYS: [u8; 4] = [15, 8, 22, 1];

/// Training days of the benchmark scene: the 15th, except the March and
/// September equinoxes.
pub const BENCHMARK_DAYS: [u8; 12] = [15, 15, 21, 15, 15, 15, 15, 15, 23, 15, 15, 15];

/// Held-out (month, day) acquisitions of the benchmark scene.
pub const BENCHMARK_TEST_DATES: [(u8, u8); 4] = [(1, 28), (3, 8), (9, 8), (10, 25)];

/// Texture amplitude used by the benchmark scene.
pub const BENCHMARK_TEXTURE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub views: usize,
    pub grid: usize,
    pub seed: u64,
    pub camera: CameraKind,
    /// One extra held-out view per listed month.
    pub test_months: Vec<u8>,
    pub year: i32,
    pub max_zenith_deg: f64,
    pub texture_amplitude: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            views: 12,
            grid: 64,
            seed: 7,
            camera: CameraKind::Rpc,
            test_months: Vec::new(),
            year: 2019,
            max_zenith_deg: 20.0,
            texture_amplitude: BENCHMARK_TEXTURE,
        }
    }
}

/// Train views `view_000 ..` cycling through the months at 17:00 UTC, then
/// test views `test_MM` on the 25th of each test month.
pub fn views_for(opts: &SynthOptions) -> Result<(Vec<ViewSpec>, Vec<String>)> {
    let mut train = Vec::with_capacity(opts.views);
    for k in 0..opts.views {
        let month = (k % 12) as u8 + 1;
        let day = CYCLE_DAYS[(k / 12) % CYCLE_DAYS.len()];
        train.push((format!("view_{k:03}"), UtcDateTime::ymd_hm(opts.year, month, day, 17, 0)?));
    }
    let test: Vec<(String, UtcDateTime)> = opts
        .test_months
        .iter()
        .map(|&m| Ok((format!("test_{m:02}"), UtcDateTime::ymd_hm(opts.year, m, 25, 17, 0)?)))
        .collect::<Result<_>>()?;
    let mut views = seeded_views(&train, opts.max_zenith_deg, opts.seed);
    views.extend(seeded_views(&test, opts.max_zenith_deg, opts.seed.wrapping_add(1)));
    Ok((views, test.into_iter().map(|t| t.0).collect()))
}

fn finish(spec: SyntheticSceneSpec, seed: u64, test: Vec<String>) -> Result<(SceneDataset, SyntheticOracle)> {
    let (ds, oracle) = generate_synthetic_scene(&spec, seed)?;
    let ds = if test.is_empty() {
        ds
    } else {
        split_train_test(&ds, &SplitPolicy::Explicit(test))?
    };
    Ok((ds, oracle))
}

pub fn synth_scene(opts: &SynthOptions) -> Result<(SceneDataset, SyntheticOracle)> {
    if opts.views == 0 {
        return Err(satfield_core::Error::validation("views", "must be >= 1"));
    }
    let (views, test) = views_for(opts)?;
    let spec = SyntheticSceneSpec {
        grid: opts.grid,
        views,
        camera: opts.camera,
        texture_amplitude: opts.texture_amplitude,
        ..SyntheticSceneSpec::default()
    };
    finish(spec, opts.seed, test)
}

/// The seasonal benchmark: twelve monthly train views (snowy December to
/// February, green March, brown September) and four held-out views.
pub fn benchmark_scene(grid: usize) -> Result<(SceneDataset, SyntheticOracle)> {
    let mut views = monthly_views(2019, BENCHMARK_DAYS, 17, 0, 20.0, 7)?;
    let test: Vec<(String, UtcDateTime)> = BENCHMARK_TEST_DATES
        .iter()
        .map(|&(m, d)| Ok((format!("test_{m:02}"), UtcDateTime::ymd_hm(2019, m, d, 17, 0)?)))
        .collect::<Result<_>>()?;
    views.extend(seeded_views(&test, 20.0, 99));
    let spec = SyntheticSceneSpec {
        grid,
        views,
        texture_amplitude: BENCHMARK_TEXTURE,
        ..SyntheticSceneSpec::default()
    };
    finish(spec, 1, test.into_iter().map(|t| t.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use satfield_core::dataset::Split;

    #[test]
    fn view_counts_and_split() {
        let opts = SynthOptions {
            grid: 16,
            views: 14,
            test_months: vec![3, 9],
            ..Default::default()
        };
        let (views, test) = views_for(&opts).unwrap();
        assert_eq!(views.len(), 16);
        assert_eq!(test, ["test_03", "test_09"]);
        assert_eq!(views[13].acquisition.month().number(), 2);
        assert_eq!(views[13].acquisition.day, 8);
        let (ds, _) = synth_scene(&opts).unwrap();
        assert_eq!(ds.indices(Split::Train).len(), 14);
        assert_eq!(ds.indices(Split::Test).len(), 2);
    }

    #[test]
    fn benchmark_layout() {
        let (ds, _) = benchmark_scene(16).unwrap();
        assert_eq!(ds.indices(Split::Train).len(), 12);
        assert_eq!(ds.indices(Split::Test).len(), 4);
        assert!(synth_scene(&SynthOptions { views: 0, ..Default::default() }).is_err());
        assert!(synth_scene(&SynthOptions { grid: 0, ..Default::default() }).is_err());
    }
}
