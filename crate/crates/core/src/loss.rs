//! Photometric losses and their gradient seeds.
//!
//! With `r2` the channel-mean squared residual of a ray and `b` its composite
//! uncertainty (always `>= beta_min`), the uncertainty-weighted term is
//!
//! ```text
//! L_ray = r2 / (2 b^2) + ln b - ln beta_min
//! ```
//!
//! which is nonnegative, is zero for a perfect prediction at `b = beta_min`
//! and, for fixed `r2`, is minimized at `b^2 = r2`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::render::{Composite, PixelGrad, RenderedPixel, SampleGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Residuals weighted by the composite uncertainty.
    Uncertainty,
    /// Mean squared error; the uncertainty head receives no gradient.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    pub beta_min: f64,
    pub photometric_weight: f64,
    /// Weight of `ln b - ln beta_min`.
    pub uncertainty_weight: f64,
    /// Weight of the solar-correction term; 0 disables it.
    pub solar_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mode: LossMode::Uncertainty,
            beta_min: 0.05,
            photometric_weight: 1.0,
            uncertainty_weight: 1.0,
            solar_weight: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0) {
            return Err(Error::validation("beta_min", "must be positive"));
        }
        for (what, v) in [
            ("photometric_weight", self.photometric_weight),
            ("uncertainty_weight", self.uncertainty_weight),
            ("solar_weight", self.solar_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(what, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    /// Plain color MSE over the batch, for logging.
    pub mse: f64,
    pub grads: Vec<PixelGrad>,
}

fn check_targets(pixels: &[RenderedPixel], targets: &[Vec3]) -> Result<()> {
    if pixels.is_empty() {
        return Err(Error::validation("loss batch", "empty"));
    }
    if pixels.len() != targets.len() {
        return Err(Error::Shape(format!("{} pixels, {} targets", pixels.len(), targets.len())));
    }
    if let Some(i) = targets.iter().position(|t| t.iter().any(|v| !(0.0..=1.0).contains(v))) {
        return Err(Error::validation("ground truth", format!("target {i} outside [0, 1]: {:?}", targets[i])));
    }
    Ok(())
}

/// Batch-mean loss. A non-finite value is an error naming the offending ray.
pub fn compute_loss(pixels: &[RenderedPixel], targets: &[Vec3], config: &LossConfig) -> Result<LossEval> {
    check_targets(pixels, targets)?;
    let b = pixels.len() as f64;
    let mut loss = 0.0;
    let mut sse = 0.0;
    let mut grads = Vec::with_capacity(pixels.len());
    for (i, (p, t)) in pixels.iter().zip(targets).enumerate() {
        let res = [p.color[0] - t[0], p.color[1] - t[1], p.color[2] - t[2]];
        let r2 = (res[0] * res[0] + res[1] * res[1] + res[2] * res[2]) / 3.0;
        sse += r2;
        let mut g = PixelGrad::default();
        let term = match config.mode {
            LossMode::Mse => {
                for k in 0..3 {
                    g.color[k] = config.photometric_weight * 2.0 * res[k] / (3.0 * b);
                }
                config.photometric_weight * r2
            }
            LossMode::Uncertainty => {
                let beta = p.beta;
                if !(beta > 0.0) {
                    return Err(Error::NonFinite(format!("ray {i}: composite uncertainty {beta}")));
                }
                let inv2 = 1.0 / (beta * beta);
                for k in 0..3 {
                    g.color[k] = config.photometric_weight * res[k] * inv2 / (3.0 * b);
                }
                g.beta = (-config.photometric_weight * r2 * inv2 / beta + config.uncertainty_weight / beta) / b;
                config.photometric_weight * 0.5 * r2 * inv2
                    + config.uncertainty_weight * (libm::log(beta) - libm::log(config.beta_min))
            }
        };
        if !term.is_finite() {
            return Err(Error::NonFinite(format!(
                "ray {i}: loss term {term} (color {:?}, target {:?}, beta {})",
                p.color, t, p.beta
            )));
        }
        loss += term;
        grads.push(g);
    }
    Ok(LossEval {
        loss: loss / b,
        mse: sse / b,
        grads,
    })
}

/// Solar-correction term for a batch of rays.
///
/// Per ray, `sum_i (T_sun_i - s_i)^2 + 1 - sum_i w_i s_i`, averaged over rays
/// and scaled by `weight`. `T_sun` is treated as a constant. Returned
/// gradients are indexed by global sample.
pub fn solar_correction(
    composites: &[Composite],
    shading: &[f64],
    sun_transmittance: &[f64],
    weight: f64,
) -> Result<(f64, SampleGrads)> {
    let n: usize = composites.iter().map(|c| c.weights.len()).sum();
    if shading.len() != n || sun_transmittance.len() != n {
        return Err(Error::Shape(format!(
            "{n} samples, {} shading values, {} transmittances",
            shading.len(),
            sun_transmittance.len()
        )));
    }
    let b = composites.len().max(1) as f64;
    let mut grads = SampleGrads {
        shading: alloc::vec![0.0; n],
        weights: alloc::vec![0.0; n],
    };
    let mut total = 0.0;
    let mut g = 0;
    for comp in composites {
        let mut term = 1.0;
        for &w in &comp.weights {
            let s = shading[g];
            let e = sun_transmittance[g] - s;
            term += e * e - w * s;
            grads.shading[g] = weight * (-2.0 * e - w) / b;
            grads.weights[g] = -weight * s / b;
            g += 1;
        }
        total += term;
    }
    Ok((weight * total / b, grads))
}
