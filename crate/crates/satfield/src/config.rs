//! Trainer configuration and its flat `key = value` text form.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! unparsable values are errors naming the line. [`TrainConfig::to_text`]
//! writes every key with a comment, so a written file documents the format.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use satfield_core::encoding::EncodingConfig;
use satfield_core::field::{FieldConfig, InputMode, SeasonConditioning, SeasonConfig};
use satfield_core::loss::{LossConfig, LossMode};
use satfield_core::nn::Activation;
use satfield_core::optim::{AdamConfig, ExponentialDecay};
use satfield_core::render::{RenderSettings, SamplingMode};

/// How each batch's rays are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Batching {
    /// Uniformly over all train pixels of all images.
    Uniform,
    /// All rays of a batch from one uniformly chosen image.
    PerImage,
}

/// The four ablation assemblies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Baseline: raw coordinates, no season head.
    Sn,
    /// Baseline plus month embeddings.
    Me,
    /// Baseline plus positional encoding.
    Pe,
    /// Both.
    Pn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sn, Variant::Me, Variant::Pe, Variant::Pn];

    /// Assembly for `(use_month_embedding, use_positional_encoding)`.
    pub fn from_flags(month_embedding: bool, positional_encoding: bool) -> Self {
        match (month_embedding, positional_encoding) {
            (false, false) => Variant::Sn,
            (true, false) => Variant::Me,
            (false, true) => Variant::Pe,
            (true, true) => Variant::Pn,
        }
    }

    pub fn flags(self) -> (bool, bool) {
        match self {
            Variant::Sn => (false, false),
            Variant::Me => (true, false),
            Variant::Pe => (false, true),
            Variant::Pn => (true, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Sn => "SN",
            Variant::Me => "ME",
            Variant::Pe => "PE",
            Variant::Pn => "PN",
        }
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sn" => Ok(Variant::Sn),
            "me" => Ok(Variant::Me),
            "pe" => Ok(Variant::Pe),
            "pn" => Ok(Variant::Pn),
            _ => Err(format!("unknown variant `{s}` (expected sn, me, pe or pn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rays_per_batch: usize,
    /// Batches per epoch; `None` means one pass over the train pixels.
    pub steps_per_epoch: Option<usize>,
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub activation_epoch: usize,
    pub beta_min: f64,
    pub loss: LossMode,
    pub photometric_weight: f64,
    pub solar_weight: f64,
    pub uncertainty_weight: f64,
    pub seed: u64,
    pub use_month_embedding: bool,
    pub use_positional_encoding: bool,
    pub batching: Batching,
    pub samples_per_ray: usize,
    pub num_frequencies: usize,
    pub encoding_identity: bool,
    pub trunk_width: usize,
    pub trunk_depth: usize,
    pub skip_layer: Option<usize>,
    pub head_width: usize,
    pub activation: Activation,
    pub season_width: usize,
    pub season_embedding_dim: usize,
    pub season_conditioning: SeasonConditioning,
    pub transient_dim: usize,
    /// Rays per parallel work item; fixed so results do not depend on the
    /// thread count.
    pub chunk_rays: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            rays_per_batch: 1024,
            steps_per_epoch: None,
            learning_rate: 5e-4,
            lr_decay: 0.9,
            activation_epoch: 3,
            beta_min: 0.05,
            loss: LossMode::Uncertainty,
            photometric_weight: 1.0,
            solar_weight: 0.0,
            uncertainty_weight: 1.0,
            seed: 0,
            use_month_embedding: true,
            use_positional_encoding: true,
            batching: Batching::Uniform,
            samples_per_ray: 64,
            num_frequencies: 10,
            encoding_identity: false,
            trunk_width: 512,
            trunk_depth: 8,
            skip_layer: Some(4),
            head_width: 256,
            activation: Activation::Relu,
            season_width: 64,
            season_embedding_dim: 4,
            season_conditioning: SeasonConditioning::Feature,
            transient_dim: 4,
            chunk_rays: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        message: message.into(),
    }
}

impl TrainConfig {
    /// A small network and sampling budget that trains a 64 x 64 scene in
    /// well under a minute on one core.
    pub fn desk() -> Self {
        TrainConfig {
            rays_per_batch: 512,
            steps_per_epoch: Some(32),
            learning_rate: 5e-3,
            samples_per_ray: 16,
            num_frequencies: 4,
            encoding_identity: true,
            trunk_width: 64,
            trunk_depth: 4,
            skip_layer: Some(2),
            head_width: 32,
            season_width: 32,
            loss: LossMode::Mse,
            ..TrainConfig::default()
        }
    }

    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.use_month_embedding, self.use_positional_encoding)
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        (self.use_month_embedding, self.use_positional_encoding) = v.flags();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.activation_epoch == 0 {
            return Err(invalid("activation_epoch must be >= 1"));
        }
        if self.rays_per_batch == 0 || self.chunk_rays == 0 || self.samples_per_ray == 0 {
            return Err(invalid("rays_per_batch, chunk_rays and samples_per_ray must be >= 1"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(invalid("steps_per_epoch must be >= 1 (or `full`)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(invalid("lr_decay must be positive"));
        }
        self.loss_config().validate().map_err(|e| invalid(e.to_string()))?;
        self.field_config(1).validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    pub fn field_config(&self, num_images: usize) -> FieldConfig {
        FieldConfig {
            input: if self.use_positional_encoding {
                InputMode::Encoded(EncodingConfig {
                    num_frequencies: self.num_frequencies,
                    include_identity: self.encoding_identity,
                })
            } else {
                InputMode::Raw
            },
            trunk_width: self.trunk_width,
            trunk_depth: self.trunk_depth,
            skip_layer: self.skip_layer,
            activation: self.activation,
            head_width: self.head_width,
            transient_dim: self.transient_dim,
            num_images: num_images.max(1),
            season: self.use_month_embedding.then_some(SeasonConfig {
                embedding_dim: self.season_embedding_dim,
                width: self.season_width,
                conditioning: self.season_conditioning,
            }),
            beta_min: self.beta_min,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            mode: self.loss,
            beta_min: self.beta_min,
            photometric_weight: self.photometric_weight,
            uncertainty_weight: self.uncertainty_weight,
            solar_weight: self.solar_weight,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn schedule(&self) -> ExponentialDecay {
        ExponentialDecay {
            initial: self.learning_rate,
            decay: self.lr_decay,
        }
    }

    pub fn train_render(&self) -> RenderSettings {
        RenderSettings {
            samples_per_ray: self.samples_per_ray,
            mode: SamplingMode::Stratified,
        }
    }

    pub fn eval_render(&self) -> RenderSettings {
        RenderSettings {
            samples_per_ray: self.samples_per_ray,
            mode: SamplingMode::Uniform,
        }
    }

    /// Every key with its current value and a one-line description.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{key} = {}\n", self.get(key).expect("known key")));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_onto(TrainConfig::default(), text)
    }

    /// Apply the assignments in `text` on top of `base`.
    pub fn parse_onto(base: TrainConfig, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = base;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |message: String| ConfigError {
                line: Some(i + 1),
                message,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(at)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "epochs" => self.epochs.to_string(),
            "rays_per_batch" => self.rays_per_batch.to_string(),
            "steps_per_epoch" => self.steps_per_epoch.map_or("full".into(), |s| s.to_string()),
            "learning_rate" => self.learning_rate.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "activation_epoch" => self.activation_epoch.to_string(),
            "beta_min" => self.beta_min.to_string(),
            "loss" => match self.loss {
                LossMode::Uncertainty => "uncertainty".into(),
                LossMode::Mse => "mse".into(),
            },
            "photometric_weight" => self.photometric_weight.to_string(),
            "solar_weight" => self.solar_weight.to_string(),
            "uncertainty_weight" => self.uncertainty_weight.to_string(),
            "seed" => self.seed.to_string(),
            "use_month_embedding" => self.use_month_embedding.to_string(),
            "use_positional_encoding" => self.use_positional_encoding.to_string(),
            "batching" => match self.batching {
                Batching::Uniform => "uniform".into(),
                Batching::PerImage => "per-image".into(),
            },
            "samples_per_ray" => self.samples_per_ray.to_string(),
            "num_frequencies" => self.num_frequencies.to_string(),
            "encoding_identity" => self.encoding_identity.to_string(),
            "trunk_width" => self.trunk_width.to_string(),
            "trunk_depth" => self.trunk_depth.to_string(),
            "skip_layer" => self.skip_layer.map_or("none".into(), |s| s.to_string()),
            "head_width" => self.head_width.to_string(),
            "activation" => match self.activation {
                Activation::Relu => "relu".into(),
                Activation::Sine { omega } => format!("sine:{omega}"),
            },
            "season_width" => self.season_width.to_string(),
            "season_embedding_dim" => self.season_embedding_dim.to_string(),
            "season_conditioning" => match self.season_conditioning {
                SeasonConditioning::Feature => "feature".into(),
                SeasonConditioning::Global => "global".into(),
            },
            "transient_dim" => self.transient_dim.to_string(),
            "chunk_rays" => self.chunk_rays.to_string(),
            _ => return None,
        })
    }

    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
        }
        fn flag(key: &str, v: &str) -> Result<bool, String> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(format!("`{key}`: expected true or false, got `{v}`")),
            }
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "rays_per_batch" => self.rays_per_batch = num(key, value)?,
            "steps_per_epoch" => {
                self.steps_per_epoch = if value == "full" { None } else { Some(num(key, value)?) };
            }
            "learning_rate" => self.learning_rate = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "activation_epoch" => self.activation_epoch = num(key, value)?,
            "beta_min" => self.beta_min = num(key, value)?,
            "loss" => {
                self.loss = match value {
                    "uncertainty" => LossMode::Uncertainty,
                    "mse" => LossMode::Mse,
                    _ => return Err(format!("`loss`: expected uncertainty or mse, got `{value}`")),
                }
            }
            "photometric_weight" => self.photometric_weight = num(key, value)?,
            "solar_weight" => self.solar_weight = num(key, value)?,
            "uncertainty_weight" => self.uncertainty_weight = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "use_month_embedding" => self.use_month_embedding = flag(key, value)?,
            "use_positional_encoding" => self.use_positional_encoding = flag(key, value)?,
            "batching" => {
                self.batching = match value {
                    "uniform" => Batching::Uniform,
                    "per-image" => Batching::PerImage,
                    _ => return Err(format!("`batching`: expected uniform or per-image, got `{value}`")),
                }
            }
            "samples_per_ray" => self.samples_per_ray = num(key, value)?,
            "num_frequencies" => self.num_frequencies = num(key, value)?,
            "encoding_identity" => self.encoding_identity = flag(key, value)?,
            "trunk_width" => self.trunk_width = num(key, value)?,
            "trunk_depth" => self.trunk_depth = num(key, value)?,
            "skip_layer" => self.skip_layer = if value == "none" { None } else { Some(num(key, value)?) },
            "head_width" => self.head_width = num(key, value)?,
            "activation" => {
                self.activation = match value.split_once(':') {
                    None if value == "relu" => Activation::Relu,
                    Some(("sine", w)) => Activation::Sine { omega: num(key, w)? },
                    _ => return Err(format!("`activation`: expected relu or sine:<omega>, got `{value}`")),
                }
            }
            "season_width" => self.season_width = num(key, value)?,
            "season_embedding_dim" => self.season_embedding_dim = num(key, value)?,
            "season_conditioning" => {
                self.season_conditioning = match value {
                    "feature" => SeasonConditioning::Feature,
                    "global" => SeasonConditioning::Global,
                    _ => return Err(format!("`season_conditioning`: expected feature or global, got `{value}`")),
                }
            }
            "transient_dim" => self.transient_dim = num(key, value)?,
            "chunk_rays" => self.chunk_rays = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

/// Every configuration key with its description.
pub const KEYS: [(&str, &str); 28] = [
    ("epochs", "number of training epochs (>= 1)"),
    ("rays_per_batch", "rays per optimizer step"),
    ("steps_per_epoch", "optimizer steps per epoch, or `full` for one pass over all train pixels"),
    ("learning_rate", "initial Adam learning rate"),
    ("lr_decay", "learning rate multiplier applied after each epoch"),
    ("activation_epoch", "first epoch (1-based) in which the season head is used"),
    ("beta_min", "lower bound added to the composite uncertainty"),
    ("loss", "photometric loss: uncertainty or mse"),
    ("photometric_weight", "weight of the photometric term"),
    ("solar_weight", "weight of the solar-correction term (0 disables it)"),
    ("uncertainty_weight", "weight of the log-uncertainty regularizer"),
    ("seed", "seed for initialization and ray sampling"),
    ("use_month_embedding", "enable the month embeddings and season head"),
    ("use_positional_encoding", "feed sinusoidally encoded coordinates to the trunk"),
    ("batching", "ray batching: uniform or per-image"),
    ("samples_per_ray", "samples along each ray"),
    ("num_frequencies", "positional encoding frequencies"),
    ("encoding_identity", "prepend the raw coordinates to the encoding"),
    ("trunk_width", "trunk hidden width"),
    ("trunk_depth", "trunk layer count"),
    ("skip_layer", "trunk layer that re-receives the input, or `none`"),
    ("head_width", "hidden width of the sun, sky and uncertainty heads"),
    ("activation", "trunk activation: relu or sine:<omega>"),
    ("season_width", "hidden width of the season head"),
    ("season_embedding_dim", "month embedding length"),
    ("season_conditioning", "season head input: feature ([h, e_m]) or global (e_m only)"),
    ("transient_dim", "per-image transient embedding length"),
    ("chunk_rays", "rays per parallel work item"),
];
