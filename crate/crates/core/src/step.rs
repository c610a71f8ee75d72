//! Loss and parameter gradients for one batch of rays.

use alloc::vec::Vec;

use rand::Rng;

use crate::camera::{Ray, SceneNormalizer};
use crate::error::{Error, Result};
use crate::field::{Conditioning, FieldGradients, FieldParams, SeasonGate};
use crate::loss::{compute_loss, solar_correction, LossConfig};
use crate::math::Vec3;
use crate::render::{backward_rays, forward_rays, sun_transmittance, RenderSettings};

/// Samples per sun ray in the solar-correction term.
pub const SUN_RAY_SAMPLES: usize = 8;

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Total loss including the solar-correction term.
    pub loss: f64,
    pub mse: f64,
    pub solar_loss: f64,
    pub grads: FieldGradients,
}

/// Render `rays`, score them against `targets` and backpropagate.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients<R: Rng + ?Sized>(
    params: &FieldParams,
    normalizer: &SceneNormalizer,
    rays: &[Ray],
    conditions: &[Conditioning],
    targets: &[Vec3],
    settings: &RenderSettings,
    loss: &LossConfig,
    gate: SeasonGate,
    rng: &mut R,
) -> Result<BatchOutcome> {
    if rays.len() != targets.len() {
        return Err(Error::Shape(alloc::format!("{} rays, {} targets", rays.len(), targets.len())));
    }
    let forward = forward_rays(params, rays, conditions, normalizer, settings, gate, rng)?;
    let eval = compute_loss(&forward.pixels(), targets, loss)?;
    let mut total = eval.loss;
    let mut solar_loss = 0.0;
    let extra = if loss.solar_weight > 0.0 {
        let per_ray = forward.per_ray;
        let sun: Vec<Vec3> = (0..forward.positions.len())
            .map(|i| normalizer.normalize_direction(conditions[i / per_ray].sun))
            .collect();
        let t_sun = sun_transmittance(params, &forward.positions, &sun, SUN_RAY_SAMPLES)?;
        let (value, grads) = solar_correction(&forward.composites, &forward.outputs().shading, &t_sun, loss.solar_weight)?;
        solar_loss = value;
        total += value;
        Some(grads)
    } else {
        None
    };
    let mut grads = FieldGradients::zeros_for(params);
    backward_rays(params, &forward, conditions, &eval.grads, extra.as_ref(), &mut grads);
    if !total.is_finite() {
        return Err(Error::NonFinite(alloc::format!("batch loss {total}")));
    }
    Ok(BatchOutcome {
        loss: total,
        mse: eval.mse,
        solar_loss,
        grads,
    })
}
