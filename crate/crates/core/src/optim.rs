//! Adam with row-lazy embedding tables and gate-aware freezing.
//!
//! Dense tensors step every call. Table tensors only step the rows flagged as
//! touched in the gradient, each with its own bias-correction counter, so a
//! batch drawn from one month leaves every other month row bit-identical.
//! While the season gate is closed the season head and month table do not
//! step at all (their moments are not advanced either).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldGradients, FieldParams, ParamGroup, SeasonGate, TensorKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("adam betas", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::validation("adam eps", "must be positive"));
        }
        Ok(())
    }
}

/// `lr(epoch) = initial * decay^(epoch - 1)` for 1-based epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialDecay {
    pub initial: f64,
    pub decay: f64,
}

impl ExponentialDecay {
    pub fn rate(&self, epoch: usize) -> f64 {
        self.initial * libm::pow(self.decay, epoch.saturating_sub(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
    /// One counter for dense tensors, one per row for tables.
    steps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &FieldParams) -> Self {
        let slots = params
            .tensors()
            .iter()
            .map(|t| Slot {
                m: vec![0.0; t.data.len()],
                v: vec![0.0; t.data.len()],
                steps: vec![
                    0;
                    match t.kind {
                        TensorKind::Dense => 1,
                        TensorKind::Table { .. } => t.shape.0,
                    }
                ],
            })
            .collect();
        Adam { config, slots }
    }

    /// Apply one update with learning rate `lr`.
    pub fn step(&mut self, params: &mut FieldParams, grads: &FieldGradients, gate: SeasonGate, lr: f64) -> Result<()> {
        let g_tensors = grads.params.tensors();
        let mut p_tensors = params.tensors_mut();
        if g_tensors.len() != p_tensors.len() || p_tensors.len() != self.slots.len() {
            return Err(Error::Shape("gradient/parameter/optimizer layouts differ".into()));
        }
        let c = self.config;
        for ((p, g), slot) in p_tensors.iter_mut().zip(&g_tensors).zip(&mut self.slots) {
            if p.data.len() != g.data.len() || p.data.len() != slot.m.len() {
                return Err(Error::Shape(alloc::format!("tensor {} size mismatch", p.name)));
            }
            let frozen = !gate.enabled && matches!(p.group, ParamGroup::Season | ParamGroup::MonthEmbedding);
            if frozen {
                continue;
            }
            match p.kind {
                TensorKind::Dense => {
                    slot.steps[0] += 1;
                    adam_update(&c, lr, slot.steps[0], p.data, g.data, &mut slot.m, &mut slot.v);
                }
                TensorKind::Table { dim } => {
                    let touched: &[bool] = match p.group {
                        ParamGroup::Transient => &grads.touched_images,
                        ParamGroup::MonthEmbedding => &grads.touched_months,
                        _ => return Err(Error::Shape(alloc::format!("table {} in a dense group", p.name))),
                    };
                    for (row, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
                        let span = row * dim..(row + 1) * dim;
                        slot.steps[row] += 1;
                        adam_update(
                            &c,
                            lr,
                            slot.steps[row],
                            &mut p.data[span.clone()],
                            &g.data[span.clone()],
                            &mut slot.m[span.clone()],
                            &mut slot.v[span],
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

fn adam_update(c: &AdamConfig, lr: f64, t: u64, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
    let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
    let step = lr * libm::sqrt(bc2) / bc1;
    for i in 0..p.len() {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        p[i] -= step * m[i] / (libm::sqrt(v[i]) + c.eps * libm::sqrt(bc2));
    }
}
