//! Ray sampling and transmittance compositing.
//!
//! Per sample `i` with density `sigma_i` over interval `delta_i`:
//!
//! ```text
//! alpha_i = 1 - exp(-sigma_i delta_i)
//! T_i     = exp(-sum_{j<i} sigma_j delta_j)
//! w_i     = T_i alpha_i
//! c_i     = c_m * c_a * (s + (1 - s) a_sky)
//! C       = sum_i w_i c_i
//! ```
//!
//! The expected depth `sum w_i t_i / sum w_i` gives the altitude; empty rays
//! (total weight below [`EMPTY_RAY_EPS`]) report the mid-ray altitude.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{rays_from_camera, CameraModel, LocalFrame, Ray, SceneNormalizer};
use crate::date::Month;
use crate::error::{Error, Result};
use crate::field::{Conditioning, FieldBatch, FieldGradients, FieldOutput, FieldOutputs, FieldParams, ForwardCache, OutputGrads, SeasonGate};
use crate::image::{Image, Raster};
use crate::math::Vec3;

pub const EMPTY_RAY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// Bin midpoints.
    Uniform,
    /// One uniform draw inside each bin.
    Stratified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub deltas: Vec<f64>,
}

pub fn sample_along_ray<R: Rng + ?Sized>(ray: &Ray, count: usize, mode: SamplingMode, rng: &mut R) -> Result<RaySamples> {
    if count == 0 {
        return Err(Error::validation("sample count", "must be >= 1"));
    }
    if !(ray.t_near < ray.t_far) {
        return Err(Error::validation("ray interval", format!("t_near {} !< t_far {}", ray.t_near, ray.t_far)));
    }
    let bin = (ray.t_far - ray.t_near) / count as f64;
    let t: Vec<f64> = (0..count)
        .map(|i| {
            let u = match mode {
                SamplingMode::Uniform => 0.5,
                SamplingMode::Stratified => rng.gen::<f64>(),
            };
            ray.t_near + (i as f64 + u) * bin
        })
        .collect();
    let mut deltas: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.push(bin);
    // Stratified neighbours can coincide only with a zero draw followed by a
    // one; keep deltas strictly positive regardless.
    for d in deltas.iter_mut() {
        if *d <= 0.0 {
            *d = f64::MIN_POSITIVE;
        }
    }
    Ok(RaySamples { t, deltas })
}

pub fn sample_along_ray_seeded(ray: &Ray, count: usize, mode: SamplingMode, seed: u64) -> Result<RaySamples> {
    sample_along_ray(ray, count, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Per-sample color `c_m * c_a * (s + (1 - s) a_sky)`.
#[inline]
pub fn sample_color(season: Vec3, albedo: Vec3, shading: f64, sky: Vec3) -> Vec3 {
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = season[k] * albedo[k] * (shading + (1.0 - shading) * sky[k]);
    }
    c
}

/// `altitude = offset + slope * t` along one normalized ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeMap {
    pub offset: f64,
    pub slope: f64,
    pub mid_t: f64,
}

impl AltitudeMap {
    pub fn for_ray(normalizer: &SceneNormalizer, ray: &Ray) -> Self {
        let a0 = normalizer.altitude_at(ray, 0.0);
        let a1 = normalizer.altitude_at(ray, 1.0);
        AltitudeMap {
            offset: a0,
            slope: a1 - a0,
            mid_t: 0.5 * (ray.t_near + ray.t_far),
        }
    }

    /// Parameter is already an altitude.
    pub const IDENTITY: AltitudeMap = AltitudeMap {
        offset: 0.0,
        slope: 1.0,
        mid_t: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderedPixel {
    pub color: Vec3,
    pub altitude: f64,
    pub opacity: f64,
    pub beta: f64,
}

/// Compositing record for one ray, kept for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub pixel: RenderedPixel,
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
    pub expected_t: f64,
}

/// Upstream gradient for one rendered pixel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PixelGrad {
    pub color: Vec3,
    pub altitude: f64,
    pub beta: f64,
    pub opacity: f64,
}

fn composite_range(
    out: &FieldOutputs,
    start: usize,
    samples: &RaySamples,
    map: &AltitudeMap,
    beta_min: f64,
) -> Composite {
    let n = samples.t.len();
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n);
    let mut optical = 0.0;
    let mut color = [0.0; 3];
    let (mut opacity, mut wt, mut wb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let o = out.get(start + i);
        let tau = o.sigma * samples.deltas[i];
        let t_i = libm::exp(-optical);
        let w = t_i * -libm::expm1(-tau);
        optical += tau;
        let c = sample_color(o.season, o.albedo, o.shading, o.sky);
        for k in 0..3 {
            color[k] += w * c[k];
        }
        opacity += w;
        wt += w * samples.t[i];
        wb += w * o.beta;
        weights.push(w);
        transmittance.push(t_i);
    }
    let expected_t = if opacity < EMPTY_RAY_EPS { map.mid_t } else { wt / opacity };
    Composite {
        pixel: RenderedPixel {
            color,
            altitude: map.offset + map.slope * expected_t,
            opacity,
            beta: wb + beta_min,
        },
        weights,
        transmittance,
        expected_t,
    }
}

fn outputs_from_slice(outputs: &[FieldOutput]) -> FieldOutputs {
    let mut o = FieldOutputs::zeros(outputs.len());
    for (i, s) in outputs.iter().enumerate() {
        o.sigma[i] = s.sigma;
        o.shading[i] = s.shading;
        o.beta[i] = s.beta;
        o.albedo[3 * i..3 * i + 3].copy_from_slice(&s.albedo);
        o.sky[3 * i..3 * i + 3].copy_from_slice(&s.sky);
        o.season[3 * i..3 * i + 3].copy_from_slice(&s.season);
    }
    o
}

/// Composite one ray's samples.
pub fn compose(outputs: &[FieldOutput], samples: &RaySamples, map: &AltitudeMap, beta_min: f64) -> Result<Composite> {
    if outputs.len() != samples.t.len() || samples.deltas.len() != samples.t.len() {
        return Err(Error::Shape(format!(
            "{} outputs for {} samples / {} deltas",
            outputs.len(),
            samples.t.len(),
            samples.deltas.len()
        )));
    }
    if samples.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::validation("deltas", "must be positive"));
    }
    Ok(composite_range(&outputs_from_slice(outputs), 0, samples, map, beta_min))
}

pub fn compose_color(outputs: &[FieldOutput], samples: &RaySamples, map: &AltitudeMap, beta_min: f64) -> Result<RenderedPixel> {
    Ok(compose(outputs, samples, map, beta_min)?.pixel)
}

/// Per-sample gradients applied in addition to the pixel-level ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleGrads {
    pub shading: Vec<f64>,
    pub weights: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn composite_backward_range(
    out: &FieldOutputs,
    start: usize,
    samples: &RaySamples,
    map: &AltitudeMap,
    comp: &Composite,
    up: &PixelGrad,
    extra: Option<&SampleGrads>,
    grads: &mut OutputGrads,
) {
    let n = samples.t.len();
    let opacity = comp.pixel.opacity;
    let d_tbar = up.altitude * map.slope;
    let mut dw = vec![0.0; n];
    for i in 0..n {
        let g = start + i;
        let o = out.get(g);
        let c = sample_color(o.season, o.albedo, o.shading, o.sky);
        let mut d = up.color[0] * c[0] + up.color[1] * c[1] + up.color[2] * c[2] + up.beta * o.beta + up.opacity;
        if opacity >= EMPTY_RAY_EPS {
            d += d_tbar * (samples.t[i] - comp.expected_t) / opacity;
        }
        if let Some(e) = extra {
            d += e.weights[g];
        }
        dw[i] = d;

        let w = comp.weights[i];
        grads.beta[g] += w * up.beta;
        let mut d_shade = extra.map_or(0.0, |e| e.shading[g]);
        for k in 0..3 {
            let dc = w * up.color[k];
            let shade = o.shading + (1.0 - o.shading) * o.sky[k];
            grads.season[3 * g + k] += dc * o.albedo[k] * shade;
            grads.albedo[3 * g + k] += dc * o.season[k] * shade;
            d_shade += dc * o.season[k] * o.albedo[k] * (1.0 - o.sky[k]);
            grads.sky[3 * g + k] += dc * o.season[k] * o.albedo[k] * (1.0 - o.shading);
        }
        grads.shading[g] += d_shade;
    }
    // d w_i / d tau_k = T_k e^{-tau_k} (i = k), -w_i (i > k), 0 (i < k)
    let mut suffix = 0.0;
    for k in (0..n).rev() {
        let o_sigma = out.sigma[start + k];
        let tau = o_sigma * samples.deltas[k];
        let d_tau = dw[k] * comp.transmittance[k] * libm::exp(-tau) - suffix;
        suffix += dw[k] * comp.weights[k];
        grads.sigma[start + k] += d_tau * samples.deltas[k];
    }
}

/// Gradients of `up . pixel` with respect to each sample's outputs.
pub fn compose_backward(
    outputs: &[FieldOutput],
    samples: &RaySamples,
    map: &AltitudeMap,
    comp: &Composite,
    up: &PixelGrad,
) -> OutputGrads {
    let out = outputs_from_slice(outputs);
    let mut grads = FieldOutputs::zeros(outputs.len());
    composite_backward_range(&out, 0, samples, map, comp, up, None, &mut grads);
    grads
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub samples_per_ray: usize,
    pub mode: SamplingMode,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            samples_per_ray: 64,
            mode: SamplingMode::Uniform,
        }
    }
}

/// Forward record of a ray batch.
#[derive(Debug, Clone)]
pub struct RayBatchForward {
    pub samples: Vec<RaySamples>,
    pub maps: Vec<AltitudeMap>,
    pub inputs: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub cache: ForwardCache,
    pub composites: Vec<Composite>,
    pub per_ray: usize,
}

impl RayBatchForward {
    pub fn pixels(&self) -> Vec<RenderedPixel> {
        self.composites.iter().map(|c| c.pixel).collect()
    }

    pub fn outputs(&self) -> &FieldOutputs {
        &self.cache.outputs
    }
}

#[allow(clippy::too_many_arguments)]
pub fn forward_rays<R: Rng + ?Sized>(
    params: &FieldParams,
    rays: &[Ray],
    conditions: &[Conditioning],
    normalizer: &SceneNormalizer,
    settings: &RenderSettings,
    gate: SeasonGate,
    rng: &mut R,
) -> Result<RayBatchForward> {
    if rays.len() != conditions.len() {
        return Err(Error::Shape(format!("{} rays, {} conditions", rays.len(), conditions.len())));
    }
    let per_ray = settings.samples_per_ray;
    let n = rays.len() * per_ray;
    let mut inputs = Vec::with_capacity(n * params.input_dims());
    let mut positions = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(rays.len());
    let mut maps = Vec::with_capacity(rays.len());
    for ray in rays {
        let s = sample_along_ray(ray, per_ray, settings.mode, rng)?;
        for &t in &s.t {
            let p = ray.at(t);
            positions.push(p);
            params.config.input.encode_into(p, &mut inputs);
        }
        samples.push(s);
        maps.push(AltitudeMap::for_ray(normalizer, ray));
    }
    let batch = FieldBatch {
        inputs: &inputs,
        n,
        conditions,
        group: per_ray,
    };
    let cache = params.forward(&batch, gate)?;
    let beta_min = params.config.beta_min;
    let composites = samples
        .iter()
        .zip(&maps)
        .enumerate()
        .map(|(r, (s, m))| composite_range(&cache.outputs, r * per_ray, s, m, beta_min))
        .collect();
    Ok(RayBatchForward {
        samples,
        maps,
        inputs,
        positions,
        cache,
        composites,
        per_ray,
    })
}

pub fn backward_rays(
    params: &FieldParams,
    forward: &RayBatchForward,
    conditions: &[Conditioning],
    pixel_grads: &[PixelGrad],
    extra: Option<&SampleGrads>,
    grads: &mut FieldGradients,
) {
    let n = forward.positions.len();
    let mut up = FieldOutputs::zeros(n);
    for (r, comp) in forward.composites.iter().enumerate() {
        composite_backward_range(
            &forward.cache.outputs,
            r * forward.per_ray,
            &forward.samples[r],
            &forward.maps[r],
            comp,
            &pixel_grads[r],
            extra,
            &mut up,
        );
    }
    let batch = FieldBatch {
        inputs: &forward.inputs,
        n,
        conditions,
        group: forward.per_ray,
    };
    params.backward(&batch, &forward.cache, &up, grads, false);
}

/// Rays rendered in chunks of this many to bound memory.
pub const RENDER_CHUNK: usize = 1024;

#[allow(clippy::too_many_arguments)]
pub fn render_rays(
    params: &FieldParams,
    rays: &[Ray],
    conditions: &[Conditioning],
    normalizer: &SceneNormalizer,
    settings: &RenderSettings,
    gate: SeasonGate,
    seed: u64,
) -> Result<Vec<RenderedPixel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rays.len());
    for (r, c) in rays.chunks(RENDER_CHUNK).zip(conditions.chunks(RENDER_CHUNK)) {
        out.extend(forward_rays(params, r, c, normalizer, settings, gate, &mut rng)?.pixels());
    }
    Ok(out)
}

/// Color, altitude and opacity rasters for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub color: Image,
    pub altitude: Raster,
    pub opacity: Raster,
}

impl RenderedImage {
    pub fn from_pixels(width: usize, height: usize, pixels: &[RenderedPixel]) -> Self {
        let mut color = Image::new(width, height);
        let mut altitude = Raster::new(width, height, 0.0);
        let mut opacity = Raster::new(width, height, 0.0);
        for (i, p) in pixels.iter().enumerate() {
            color.data[3 * i..3 * i + 3].copy_from_slice(&p.color);
            altitude.data[i] = p.altitude;
            opacity.data[i] = p.opacity;
        }
        RenderedImage { color, altitude, opacity }
    }
}

/// What to render and under which conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRequest<'a> {
    pub camera: &'a CameraModel,
    pub frame: &'a LocalFrame,
    pub normalizer: &'a SceneNormalizer,
    pub altitude_bounds: (f64, f64),
    pub width: usize,
    pub height: usize,
    /// Camera pixels per rendered pixel.
    pub pixel_scale: f64,
    pub month: Month,
    pub sun: Vec3,
    pub image_index: usize,
}

/// Pixel-center coordinates of the view grid, row-major.
pub fn view_pixels(width: usize, height: usize, pixel_scale: f64) -> Vec<(f64, f64)> {
    let mut px = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            px.push((
                (r as f64 + 0.5) * pixel_scale - 0.5,
                (c as f64 + 0.5) * pixel_scale - 0.5,
            ));
        }
    }
    px
}

pub fn view_rays(view: &ViewRequest<'_>) -> Result<Vec<Ray>> {
    let pixels = view_pixels(view.width, view.height, view.pixel_scale);
    rays_from_camera(view.camera, view.frame, view.normalizer, &pixels, view.altitude_bounds)
}

pub fn render_image(
    params: &FieldParams,
    view: &ViewRequest<'_>,
    settings: &RenderSettings,
    gate: SeasonGate,
    seed: u64,
) -> Result<RenderedImage> {
    let rays = view_rays(view)?;
    let cond = Conditioning {
        sun: view.sun,
        image: view.image_index,
        month: view.month,
    };
    let conditions = vec![cond; rays.len()];
    let pixels = render_rays(params, &rays, &conditions, view.normalizer, settings, gate, seed)?;
    Ok(RenderedImage::from_pixels(view.width, view.height, &pixels))
}

/// Transmittance from each normalized position toward the sun, up to the
/// top plane `z = 1`, using `count` midpoint samples of density only.
/// Directions are normalized-frame unit vectors; a sun at or below the
/// horizon yields zero.
pub fn sun_transmittance(params: &FieldParams, positions: &[Vec3], sun: &[Vec3], count: usize) -> Result<Vec<f64>> {
    if positions.len() != sun.len() {
        return Err(Error::Shape(format!("{} positions, {} sun directions", positions.len(), sun.len())));
    }
    if count == 0 {
        return Err(Error::validation("sun sample count", "must be >= 1"));
    }
    let mut inputs = Vec::with_capacity(positions.len() * count * params.input_dims());
    let mut step = Vec::with_capacity(positions.len());
    for (p, d) in positions.iter().zip(sun) {
        let length = if d[2] > 1e-9 { ((1.0 - p[2]).max(0.0) / d[2]).min(4.0) } else { 0.0 };
        let delta = length / count as f64;
        for i in 0..count {
            let t = (i as f64 + 0.5) * delta;
            params
                .config
                .input
                .encode_into([p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2]], &mut inputs);
        }
        step.push((delta, d[2] > 1e-9));
    }
    let sigma = params.density(&inputs, positions.len() * count);
    Ok(step
        .iter()
        .enumerate()
        .map(|(r, &(delta, lit))| {
            if !lit {
                return 0.0;
            }
            let tau: f64 = sigma[r * count..(r + 1) * count].iter().sum::<f64>() * delta;
            libm::exp(-tau)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(sigma: f64, albedo: Vec3) -> FieldOutput {
        FieldOutput {
            sigma,
            albedo,
            shading: 1.0,
            sky: [0.0; 3],
            beta: 0.1,
            season: [1.0; 3],
        }
    }

    fn ray() -> Ray {
        Ray {
            origin: [0.0, 0.0, 1.0],
            direction: [0.0, 0.0, -1.0],
            t_near: 0.0,
            t_far: 2.0,
            pixel: (0.0, 0.0),
        }
    }

    #[test]
    fn single_uniform_sample_is_midpoint() {
        let s = sample_along_ray_seeded(&ray(), 1, SamplingMode::Uniform, 0).unwrap();
        assert_eq!(s.t, vec![1.0]);
        assert_eq!(s.deltas, vec![2.0]);
    }

    #[test]
    fn sixty_four_uniform_samples() {
        let s = sample_along_ray_seeded(&ray(), 64, SamplingMode::Uniform, 0).unwrap();
        assert_eq!(s.t.len(), 64);
        assert!(s.t.windows(2).all(|w| w[1] > w[0]));
        assert!(s.deltas.iter().all(|d| (d - 2.0 / 64.0).abs() < 1e-12));
    }

    #[test]
    fn stratified_is_seed_deterministic() {
        let a = sample_along_ray_seeded(&ray(), 16, SamplingMode::Stratified, 5).unwrap();
        let b = sample_along_ray_seeded(&ray(), 16, SamplingMode::Stratified, 5).unwrap();
        let c = sample_along_ray_seeded(&ray(), 16, SamplingMode::Stratified, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn inverted_interval_rejected() {
        let mut r = ray();
        r.t_far = r.t_near;
        assert!(sample_along_ray_seeded(&r, 4, SamplingMode::Uniform, 0).is_err());
        assert!(sample_along_ray_seeded(&ray(), 0, SamplingMode::Uniform, 0).is_err());
    }

    #[test]
    fn opaque_single_sample() {
        let s = RaySamples {
            t: vec![0.5],
            deltas: vec![1.0],
        };
        let p = compose_color(&[out(20.0, [0.3, 0.6, 0.9])], &s, &AltitudeMap::IDENTITY, 0.05).unwrap();
        for k in 0..3 {
            assert!((p.color[k] - [0.3, 0.6, 0.9][k]).abs() < 1e-8);
        }
        assert!((p.opacity - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_ray_reports_mid_altitude() {
        let s = RaySamples {
            t: vec![0.25, 0.75],
            deltas: vec![0.5, 0.5],
        };
        let map = AltitudeMap {
            offset: 30.0,
            slope: -15.0,
            mid_t: 1.0,
        };
        let p = compose_color(&[out(0.0, [1.0; 3]), out(0.0, [1.0; 3])], &s, &map, 0.05).unwrap();
        assert_eq!(p.color, [0.0; 3]);
        assert_eq!(p.opacity, 0.0);
        assert_eq!(p.altitude, 15.0);
        assert_eq!(p.beta, 0.05);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let s = RaySamples {
            t: vec![0.5, 1.0],
            deltas: vec![0.5, 0.5],
        };
        assert!(compose_color(&[out(1.0, [1.0; 3])], &s, &AltitudeMap::IDENTITY, 0.05).is_err());
    }
}
