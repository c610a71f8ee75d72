//! The seasonal radiance field network.
//!
//! ```text
//!   x ──encode──► trunk (width W, depth D, skip) ──► h
//!   h ──► sigma = softplus
//!   h ──► c_a   = sigmoid
//!   [h, d_sun] ──► sun MLP ──► s = sigmoid
//!   d_sun ──► sky MLP ──► a_sky = sigmoid
//!   [h, t_j] ──► uncertainty MLP ──► beta = softplus + beta_min
//!   [h, e_m] ──► season MLP ──► c_m = 2 * sigmoid      (only when gated on)
//! ```
//!
//! The month embedding `e_m` enters only the season head, so month choice
//! never changes density, albedo, shading, sky color or uncertainty.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::date::Month;
use crate::encoding::{positional_encode_into, EncodingConfig};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, Vec3};
use crate::nn::{concat_cols, mlp_backward, mlp_forward, split_cols_accumulate, Activation, Linear, MlpCache};

/// How spatial positions are presented to the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InputMode {
    /// Normalized coordinates fed as-is.
    Raw,
    Encoded(EncodingConfig),
}

impl InputMode {
    pub fn dims(&self) -> usize {
        match self {
            InputMode::Raw => 3,
            InputMode::Encoded(cfg) => cfg.output_len(3),
        }
    }

    pub fn encode_into(&self, p: Vec3, out: &mut Vec<f64>) {
        match self {
            InputMode::Raw => out.extend_from_slice(&p),
            InputMode::Encoded(cfg) => positional_encode_into(&p, cfg, out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeasonConditioning {
    /// Season head sees `[h, e_m]`: the tint can vary across the scene.
    Feature,
    /// Season head sees `e_m` only: one global tint per month.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonConfig {
    pub embedding_dim: usize,
    pub width: usize,
    pub conditioning: SeasonConditioning,
}

impl Default for SeasonConfig {
    fn default() -> Self {
        SeasonConfig {
            embedding_dim: 4,
            width: 64,
            conditioning: SeasonConditioning::Feature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub input: InputMode,
    pub trunk_width: usize,
    pub trunk_depth: usize,
    /// Trunk layer whose input is `[h, x]` instead of `h`.
    pub skip_layer: Option<usize>,
    pub activation: Activation,
    pub head_width: usize,
    pub transient_dim: usize,
    pub num_images: usize,
    /// `None` removes the season head and month table entirely.
    pub season: Option<SeasonConfig>,
    pub beta_min: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            input: InputMode::Encoded(EncodingConfig::default()),
            trunk_width: 512,
            trunk_depth: 8,
            skip_layer: Some(4),
            activation: Activation::Relu,
            head_width: 256,
            transient_dim: 4,
            num_images: 1,
            season: Some(SeasonConfig::default()),
            beta_min: 0.05,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::validation("field config", reason));
        if let InputMode::Encoded(cfg) = &self.input {
            cfg.validate()?;
        }
        if self.trunk_width == 0 || self.head_width == 0 {
            return bad("layer widths must be positive");
        }
        if self.trunk_depth == 0 {
            return bad("trunk depth must be positive");
        }
        if let Some(s) = self.skip_layer {
            if s == 0 || s >= self.trunk_depth {
                return bad("skip layer must lie strictly inside the trunk");
            }
        }
        if self.transient_dim == 0 || self.num_images == 0 {
            return bad("transient table needs at least one row and column");
        }
        if let Some(season) = &self.season {
            if season.embedding_dim == 0 || season.width == 0 {
                return bad("season head dimensions must be positive");
            }
        }
        if !(self.beta_min > 0.0 && self.beta_min.is_finite()) {
            return bad("beta_min must be positive");
        }
        Ok(())
    }
}

/// Learnable lookup table, `rows x dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Embedding {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Embedding {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonHead {
    pub layers: Vec<Linear>,
    /// Twelve month embeddings, January first.
    pub months: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub config: FieldConfig,
    pub trunk: Vec<Linear>,
    pub sigma: Linear,
    pub albedo: Linear,
    pub sun: Vec<Linear>,
    pub sky: Vec<Linear>,
    pub uncertainty: Vec<Linear>,
    pub transient: Embedding,
    pub season: Option<SeasonHead>,
}

/// Which optimizer group a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Shared,
    Season,
    MonthEmbedding,
    Transient,
}

/// Embedding tables are updated row-wise; everything else densely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Dense,
    Table { dim: usize },
}

#[derive(Debug)]
pub struct Tensor<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub kind: TensorKind,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub kind: TensorKind,
    pub shape: (usize, usize),
    pub data: &'a mut [f64],
}

/// Whether the season head contributes to the color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonGate {
    pub enabled: bool,
    pub activation_epoch: usize,
}

impl SeasonGate {
    pub const OPEN: SeasonGate = SeasonGate {
        enabled: true,
        activation_epoch: 1,
    };

    pub const CLOSED: SeasonGate = SeasonGate {
        enabled: false,
        activation_epoch: usize::MAX,
    };

    /// Gate state for a 1-based epoch: closed before `activation_epoch`.
    pub fn for_epoch(epoch: usize, activation_epoch: usize) -> Self {
        SeasonGate {
            enabled: epoch >= activation_epoch,
            activation_epoch,
        }
    }
}

/// Per-ray auxiliary inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub sun: Vec3,
    pub image: usize,
    pub month: Month,
}

/// A batch of `n` encoded positions; sample `s` uses `conditions[s / group]`.
#[derive(Debug, Clone, Copy)]
pub struct FieldBatch<'a> {
    pub inputs: &'a [f64],
    pub n: usize,
    pub conditions: &'a [Conditioning],
    pub group: usize,
}

impl<'a> FieldBatch<'a> {
    pub fn condition(&self, sample: usize) -> &'a Conditioning {
        &self.conditions[sample / self.group]
    }
}

/// Predictions for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOutput {
    pub sigma: f64,
    pub albedo: Vec3,
    pub shading: f64,
    pub sky: Vec3,
    pub beta: f64,
    pub season: Vec3,
}

/// Structure-of-arrays predictions for a batch. RGB quantities are `n x 3`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldOutputs {
    pub sigma: Vec<f64>,
    pub albedo: Vec<f64>,
    pub shading: Vec<f64>,
    pub sky: Vec<f64>,
    pub beta: Vec<f64>,
    pub season: Vec<f64>,
}

fn rgb(v: &[f64], i: usize) -> Vec3 {
    [v[3 * i], v[3 * i + 1], v[3 * i + 2]]
}

impl FieldOutputs {
    pub fn zeros(n: usize) -> Self {
        FieldOutputs {
            sigma: vec![0.0; n],
            albedo: vec![0.0; 3 * n],
            shading: vec![0.0; n],
            sky: vec![0.0; 3 * n],
            beta: vec![0.0; n],
            season: vec![0.0; 3 * n],
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn get(&self, i: usize) -> FieldOutput {
        FieldOutput {
            sigma: self.sigma[i],
            albedo: rgb(&self.albedo, i),
            shading: self.shading[i],
            sky: rgb(&self.sky, i),
            beta: self.beta[i],
            season: rgb(&self.season, i),
        }
    }
}

/// Everything the reverse pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    trunk_inputs: Vec<Vec<f64>>,
    trunk_pre: Vec<Vec<f64>>,
    h: Vec<f64>,
    sigma_z: Vec<f64>,
    sun: MlpCache,
    sky: MlpCache,
    uncertainty: MlpCache,
    season: Option<MlpCache>,
    pub outputs: FieldOutputs,
}

/// Gradients with the same layout as [`FieldParams`], plus which embedding
/// rows were touched.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradients {
    pub params: FieldParams,
    pub touched_images: Vec<bool>,
    pub touched_months: [bool; 12],
    /// d/d(encoded input), `n x input_dims`, when requested.
    pub inputs: Option<Vec<f64>>,
    /// d/d(sun direction) per sample, `n x 3`, when requested.
    pub sun: Option<Vec<f64>>,
}

impl FieldGradients {
    pub fn zeros_for(params: &FieldParams) -> Self {
        FieldGradients {
            params: params.zeros_like(),
            touched_images: vec![false; params.transient.rows],
            touched_months: [false; 12],
            inputs: None,
            sun: None,
        }
    }

    /// `self += other`, merging touched-row flags.
    pub fn accumulate(&mut self, other: &FieldGradients) {
        let src = other.params.tensors();
        for (dst, src) in self.params.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
        for (a, b) in self.touched_images.iter_mut().zip(&other.touched_images) {
            *a |= b;
        }
        for (a, b) in self.touched_months.iter_mut().zip(&other.touched_months) {
            *a |= b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.params.tensors_mut() {
            for v in t.data.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Gradient of some scalar with respect to each output in a batch.
pub type OutputGrads = FieldOutputs;

fn trunk_in_dims(config: &FieldConfig, layer: usize) -> usize {
    let in_dim = config.input.dims();
    if layer == 0 {
        in_dim
    } else if config.skip_layer == Some(layer) {
        config.trunk_width + in_dim
    } else {
        config.trunk_width
    }
}

fn season_in_dims(config: &FieldConfig, season: &SeasonConfig) -> usize {
    match season.conditioning {
        SeasonConditioning::Feature => config.trunk_width + season.embedding_dim,
        SeasonConditioning::Global => season.embedding_dim,
    }
}

/// Deterministic initialization. Month embeddings start at zero.
pub fn init_field(config: &FieldConfig, seed: u64) -> Result<FieldParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = config.trunk_width;
    let hw = config.head_width;

    let hidden_bound = |fan_in: usize| match config.activation {
        Activation::Relu => libm::sqrt(6.0 / fan_in as f64),
        Activation::Sine { omega } => libm::sqrt(6.0 / fan_in as f64) / omega,
    };
    let head_bound = |fan_in: usize| libm::sqrt(1.0 / fan_in as f64);
    let relu_bound = |fan_in: usize| libm::sqrt(6.0 / fan_in as f64);

    let trunk = (0..config.trunk_depth)
        .map(|i| {
            let fan_in = trunk_in_dims(config, i);
            let bound = match (i, config.activation) {
                (0, Activation::Sine { .. }) => 1.0 / fan_in as f64,
                _ => hidden_bound(fan_in),
            };
            Linear::uniform(fan_in, w, bound, &mut rng)
        })
        .collect();
    let sigma = Linear::uniform(w, 1, head_bound(w), &mut rng);
    let albedo = Linear::uniform(w, 3, head_bound(w), &mut rng);
    let sun = vec![
        Linear::uniform(w + 3, hw, relu_bound(w + 3), &mut rng),
        Linear::uniform(hw, hw, relu_bound(hw), &mut rng),
        Linear::uniform(hw, 1, head_bound(hw), &mut rng),
    ];
    let sky = vec![
        Linear::uniform(3, hw, relu_bound(3), &mut rng),
        Linear::uniform(hw, 3, head_bound(hw), &mut rng),
    ];
    let t = config.transient_dim;
    let uncertainty = vec![
        Linear::uniform(w + t, hw, relu_bound(w + t), &mut rng),
        Linear::uniform(hw, 1, head_bound(hw), &mut rng),
    ];
    let mut transient = Embedding::zeros(config.num_images, t);
    for v in transient.data.iter_mut() {
        *v = rand::Rng::gen_range(&mut rng, -0.1..=0.1);
    }
    let season = config.season.as_ref().map(|sc| {
        let fan_in = season_in_dims(config, sc);
        SeasonHead {
            layers: vec![
                Linear::uniform(fan_in, sc.width, relu_bound(fan_in), &mut rng),
                Linear::uniform(sc.width, sc.width, relu_bound(sc.width), &mut rng),
                Linear::uniform(sc.width, 3, head_bound(sc.width), &mut rng),
            ],
            months: Embedding::zeros(12, sc.embedding_dim),
        }
    });
    Ok(FieldParams {
        config: config.clone(),
        trunk,
        sigma,
        albedo,
        sun,
        sky,
        uncertainty,
        transient,
        season,
    })
}

fn zeros_like_layers(layers: &[Linear]) -> Vec<Linear> {
    layers.iter().map(|l| Linear::zeros(l.inputs, l.outputs)).collect()
}

fn push_layer<'a>(out: &mut Vec<Tensor<'a>>, name: String, group: ParamGroup, l: &'a Linear) {
    out.push(Tensor {
        name: format!("{name}.weight"),
        group,
        kind: TensorKind::Dense,
        shape: (l.outputs, l.inputs),
        data: &l.weight,
    });
    out.push(Tensor {
        name: format!("{name}.bias"),
        group,
        kind: TensorKind::Dense,
        shape: (l.outputs, 1),
        data: &l.bias,
    });
}

fn push_layer_mut<'a>(out: &mut Vec<TensorMut<'a>>, name: String, group: ParamGroup, l: &'a mut Linear) {
    let Linear {
        inputs,
        outputs,
        weight,
        bias,
    } = l;
    out.push(TensorMut {
        name: format!("{name}.weight"),
        group,
        kind: TensorKind::Dense,
        shape: (*outputs, *inputs),
        data: weight,
    });
    out.push(TensorMut {
        name: format!("{name}.bias"),
        group,
        kind: TensorKind::Dense,
        shape: (*outputs, 1),
        data: bias,
    });
}

impl FieldParams {
    pub fn zeros_like(&self) -> FieldParams {
        FieldParams {
            config: self.config.clone(),
            trunk: zeros_like_layers(&self.trunk),
            sigma: Linear::zeros(self.sigma.inputs, self.sigma.outputs),
            albedo: Linear::zeros(self.albedo.inputs, self.albedo.outputs),
            sun: zeros_like_layers(&self.sun),
            sky: zeros_like_layers(&self.sky),
            uncertainty: zeros_like_layers(&self.uncertainty),
            transient: Embedding::zeros(self.transient.rows, self.transient.dim),
            season: self.season.as_ref().map(|s| SeasonHead {
                layers: zeros_like_layers(&s.layers),
                months: Embedding::zeros(s.months.rows, s.months.dim),
            }),
        }
    }

    /// All tensors in a fixed order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            push_layer(&mut out, format!("trunk.{i}"), ParamGroup::Shared, l);
        }
        push_layer(&mut out, "sigma".into(), ParamGroup::Shared, &self.sigma);
        push_layer(&mut out, "albedo".into(), ParamGroup::Shared, &self.albedo);
        for (i, l) in self.sun.iter().enumerate() {
            push_layer(&mut out, format!("sun.{i}"), ParamGroup::Shared, l);
        }
        for (i, l) in self.sky.iter().enumerate() {
            push_layer(&mut out, format!("sky.{i}"), ParamGroup::Shared, l);
        }
        for (i, l) in self.uncertainty.iter().enumerate() {
            push_layer(&mut out, format!("uncertainty.{i}"), ParamGroup::Shared, l);
        }
        out.push(Tensor {
            name: "transient.table".into(),
            group: ParamGroup::Transient,
            kind: TensorKind::Table {
                dim: self.transient.dim,
            },
            shape: (self.transient.rows, self.transient.dim),
            data: &self.transient.data,
        });
        if let Some(season) = &self.season {
            for (i, l) in season.layers.iter().enumerate() {
                push_layer(&mut out, format!("season.{i}"), ParamGroup::Season, l);
            }
            out.push(Tensor {
                name: "season.months".into(),
                group: ParamGroup::MonthEmbedding,
                kind: TensorKind::Table {
                    dim: season.months.dim,
                },
                shape: (season.months.rows, season.months.dim),
                data: &season.months.data,
            });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter_mut().enumerate() {
            push_layer_mut(&mut out, format!("trunk.{i}"), ParamGroup::Shared, l);
        }
        push_layer_mut(&mut out, "sigma".into(), ParamGroup::Shared, &mut self.sigma);
        push_layer_mut(&mut out, "albedo".into(), ParamGroup::Shared, &mut self.albedo);
        for (i, l) in self.sun.iter_mut().enumerate() {
            push_layer_mut(&mut out, format!("sun.{i}"), ParamGroup::Shared, l);
        }
        for (i, l) in self.sky.iter_mut().enumerate() {
            push_layer_mut(&mut out, format!("sky.{i}"), ParamGroup::Shared, l);
        }
        for (i, l) in self.uncertainty.iter_mut().enumerate() {
            push_layer_mut(&mut out, format!("uncertainty.{i}"), ParamGroup::Shared, l);
        }
        let Embedding { rows, dim, data } = &mut self.transient;
        out.push(TensorMut {
            name: "transient.table".into(),
            group: ParamGroup::Transient,
            kind: TensorKind::Table { dim: *dim },
            shape: (*rows, *dim),
            data,
        });
        if let Some(season) = &mut self.season {
            for (i, l) in season.layers.iter_mut().enumerate() {
                push_layer_mut(&mut out, format!("season.{i}"), ParamGroup::Season, l);
            }
            let Embedding { rows, dim, data } = &mut season.months;
            out.push(TensorMut {
                name: "season.months".into(),
                group: ParamGroup::MonthEmbedding,
                kind: TensorKind::Table { dim: *dim },
                shape: (*rows, *dim),
                data,
            });
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Parameters belonging to the season head and the month table.
    pub fn num_season_params(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|t| matches!(t.group, ParamGroup::Season | ParamGroup::MonthEmbedding))
            .map(|t| t.data.len())
            .sum()
    }

    pub fn input_dims(&self) -> usize {
        self.config.input.dims()
    }

    fn check_batch(&self, batch: &FieldBatch<'_>) -> Result<()> {
        let d = self.input_dims();
        if batch.inputs.len() != batch.n * d {
            return Err(Error::Shape(format!(
                "expected {} x {d} inputs, got {} values",
                batch.n,
                batch.inputs.len()
            )));
        }
        if batch.group == 0 || batch.conditions.len() * batch.group < batch.n {
            return Err(Error::Shape(format!(
                "{} conditions with group {} cannot cover {} samples",
                batch.conditions.len(),
                batch.group,
                batch.n
            )));
        }
        for c in batch.conditions {
            if c.image >= self.transient.rows {
                return Err(Error::Index {
                    what: "image",
                    index: c.image,
                    valid: format!("0..{}", self.transient.rows),
                });
            }
        }
        Ok(())
    }

    fn trunk_forward(&self, x0: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let w = self.config.trunk_width;
        let in_dim = self.input_dims();
        let act = self.config.activation;
        let mut inputs = Vec::with_capacity(self.trunk.len());
        let mut pre = Vec::with_capacity(self.trunk.len());
        let mut current = x0.to_vec();
        for (i, layer) in self.trunk.iter().enumerate() {
            let input = if self.config.skip_layer == Some(i) {
                concat_cols(&current, w, x0, in_dim, n)
            } else {
                current
            };
            let z = layer.forward(&input, n);
            current = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(input);
            pre.push(z);
        }
        (inputs, pre, current)
    }

    /// Density only, for transmittance queries that need no color.
    pub fn density(&self, encoded: &[f64], n: usize) -> Vec<f64> {
        let (_, _, h) = self.trunk_forward(encoded, n);
        self.sigma.forward(&h, n).into_iter().map(softplus).collect()
    }

    /// Batched forward pass with a cache for [`FieldParams::backward`].
    pub fn forward(&self, batch: &FieldBatch<'_>, gate: SeasonGate) -> Result<ForwardCache> {
        self.check_batch(batch)?;
        let n = batch.n;
        let w = self.config.trunk_width;
        let (trunk_inputs, trunk_pre, h) = self.trunk_forward(batch.inputs, n);

        let sigma_z = self.sigma.forward(&h, n);
        let albedo_z = self.albedo.forward(&h, n);

        let mut suns = Vec::with_capacity(3 * n);
        for s in 0..n {
            suns.extend_from_slice(&batch.condition(s).sun);
        }
        let sun = mlp_forward(&self.sun, Activation::Relu, concat_cols(&h, w, &suns, 3, n), n);
        let sky = mlp_forward(&self.sky, Activation::Relu, suns, n);

        let t = self.transient.dim;
        let mut codes = Vec::with_capacity(t * n);
        for s in 0..n {
            codes.extend_from_slice(self.transient.row(batch.condition(s).image));
        }
        let uncertainty = mlp_forward(&self.uncertainty, Activation::Relu, concat_cols(&h, w, &codes, t, n), n);

        let season = match (&self.season, gate.enabled) {
            (Some(head), true) => {
                let k = head.months.dim;
                let mut emb = Vec::with_capacity(k * n);
                for s in 0..n {
                    emb.extend_from_slice(head.months.row(batch.condition(s).month.index()));
                }
                let input = match self.config.season.map(|c| c.conditioning) {
                    Some(SeasonConditioning::Global) => emb,
                    _ => concat_cols(&h, w, &emb, k, n),
                };
                Some(mlp_forward(&head.layers, Activation::Relu, input, n))
            }
            _ => None,
        };

        let beta_min = self.config.beta_min;
        let outputs = FieldOutputs {
            sigma: sigma_z.iter().map(|&z| softplus(z)).collect(),
            albedo: albedo_z.into_iter().map(sigmoid).collect(),
            shading: sun.output.iter().map(|&z| sigmoid(z)).collect(),
            sky: sky.output.iter().map(|&z| sigmoid(z)).collect(),
            beta: uncertainty.output.iter().map(|&z| softplus(z) + beta_min).collect(),
            season: match &season {
                Some(c) => c.output.iter().map(|&z| 2.0 * sigmoid(z)).collect(),
                None => vec![1.0; 3 * n],
            },
        };
        Ok(ForwardCache {
            trunk_inputs,
            trunk_pre,
            h,
            sigma_z,
            sun,
            sky,
            uncertainty,
            season,
            outputs,
        })
    }

    /// Reverse pass. Accumulates into `grads`; with `want_inputs` also fills
    /// `grads.inputs` and `grads.sun` for this batch.
    pub fn backward(
        &self,
        batch: &FieldBatch<'_>,
        cache: &ForwardCache,
        upstream: &OutputGrads,
        grads: &mut FieldGradients,
        want_inputs: bool,
    ) {
        let n = batch.n;
        let w = self.config.trunk_width;
        let out = &cache.outputs;
        let g = &mut grads.params;
        let mut dh = vec![0.0; n * w];

        // sigma = softplus(z)
        let d_sigma: Vec<f64> = upstream
            .sigma
            .iter()
            .zip(&cache.sigma_z)
            .map(|(d, &z)| d * sigmoid(z))
            .collect();
        add_into(&mut dh, &self.sigma.backward(&cache.h, &d_sigma, n, &mut g.sigma, true).expect("dx"));

        // c_a = sigmoid(z)
        let d_albedo: Vec<f64> = upstream
            .albedo
            .iter()
            .zip(&out.albedo)
            .map(|(d, y)| d * y * (1.0 - y))
            .collect();
        add_into(&mut dh, &self.albedo.backward(&cache.h, &d_albedo, n, &mut g.albedo, true).expect("dx"));

        // s = sigmoid(z), input [h, d_sun]
        let d_shade: Vec<f64> = upstream
            .shading
            .iter()
            .zip(&out.shading)
            .map(|(d, y)| d * y * (1.0 - y))
            .collect();
        let dx = mlp_backward(&self.sun, Activation::Relu, &cache.sun, d_shade, n, &mut g.sun, true).expect("dx");
        let mut d_sun = split_cols_accumulate(&dx, w, 3, n, &mut dh);

        // a_sky = sigmoid(z), input d_sun
        let d_sky: Vec<f64> = upstream.sky.iter().zip(&out.sky).map(|(d, y)| d * y * (1.0 - y)).collect();
        if let Some(dx) = mlp_backward(&self.sky, Activation::Relu, &cache.sky, d_sky, n, &mut g.sky, want_inputs) {
            add_into(&mut d_sun, &dx);
        }

        // beta = softplus(z) + beta_min, input [h, t_j]
        let d_beta: Vec<f64> = upstream
            .beta
            .iter()
            .zip(&cache.uncertainty.output)
            .map(|(d, &z)| d * sigmoid(z))
            .collect();
        let t = self.transient.dim;
        let dx = mlp_backward(
            &self.uncertainty,
            Activation::Relu,
            &cache.uncertainty,
            d_beta,
            n,
            &mut g.uncertainty,
            true,
        )
        .expect("dx");
        let d_codes = split_cols_accumulate(&dx, w, t, n, &mut dh);
        for s in 0..n {
            let j = batch.condition(s).image;
            grads.touched_images[j] = true;
            for (gv, d) in g.transient.row_mut(j).iter_mut().zip(&d_codes[s * t..(s + 1) * t]) {
                *gv += d;
            }
        }

        // c_m = 2 sigmoid(z), input [h, e_m] or e_m
        if let (Some(head), Some(season_cache), Some(g_head)) = (&self.season, &cache.season, g.season.as_mut()) {
            let d_z: Vec<f64> = upstream
                .season
                .iter()
                .zip(&out.season)
                .map(|(d, y)| d * y * (1.0 - 0.5 * y))
                .collect();
            let dx = mlp_backward(&head.layers, Activation::Relu, season_cache, d_z, n, &mut g_head.layers, true)
                .expect("dx");
            let k = head.months.dim;
            let d_emb = match self.config.season.map(|c| c.conditioning) {
                Some(SeasonConditioning::Global) => dx,
                _ => split_cols_accumulate(&dx, w, k, n, &mut dh),
            };
            for s in 0..n {
                let m = batch.condition(s).month.index();
                grads.touched_months[m] = true;
                for (gv, d) in g_head.months.row_mut(m).iter_mut().zip(&d_emb[s * k..(s + 1) * k]) {
                    *gv += d;
                }
            }
        }

        // trunk
        let in_dim = self.input_dims();
        let act = self.config.activation;
        let mut d_x0 = if want_inputs { Some(vec![0.0; n * in_dim]) } else { None };
        let mut d = dh;
        for i in (0..self.trunk.len()).rev() {
            for (v, &z) in d.iter_mut().zip(&cache.trunk_pre[i]) {
                *v *= act.derivative(z);
            }
            let need = i > 0 || want_inputs;
            let dx = self.trunk[i].backward(&cache.trunk_inputs[i], &d, n, &mut g.trunk[i], need);
            let Some(dx) = dx else { break };
            if i == 0 {
                if let Some(acc) = d_x0.as_mut() {
                    add_into(acc, &dx);
                }
                break;
            }
            if self.config.skip_layer == Some(i) {
                let mut prev = vec![0.0; n * w];
                let tail = split_cols_accumulate(&dx, w, in_dim, n, &mut prev);
                if let Some(acc) = d_x0.as_mut() {
                    add_into(acc, &tail);
                }
                d = prev;
            } else {
                d = dx;
            }
        }
        if want_inputs {
            grads.inputs = d_x0;
            grads.sun = Some(d_sun);
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Single-sample forward on an already encoded position.
pub fn field_forward(
    params: &FieldParams,
    encoded_x: &[f64],
    sun: Vec3,
    image: usize,
    month: Month,
    gate: SeasonGate,
) -> Result<FieldOutput> {
    let cond = [Conditioning { sun, image, month }];
    let batch = FieldBatch {
        inputs: encoded_x,
        n: 1,
        conditions: &cond,
        group: 1,
    };
    Ok(params.forward(&batch, gate)?.outputs.get(0))
}

/// Gradients of `sum(upstream . outputs)` for a batch.
pub fn field_gradients(
    params: &FieldParams,
    batch: &FieldBatch<'_>,
    gate: SeasonGate,
    upstream: &OutputGrads,
) -> Result<FieldGradients> {
    let cache = params.forward(batch, gate)?;
    let mut grads = FieldGradients::zeros_for(params);
    params.backward(batch, &cache, upstream, &mut grads, true);
    Ok(grads)
}
