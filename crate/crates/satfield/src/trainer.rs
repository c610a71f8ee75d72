//! Training loop: batching, parallel gradients, schedules and checkpoints.

use std::fs::{self, File};
use std::io::Write;
use std::ops::Range;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use satfield_core::camera::{rays_from_camera, Ray, SceneNormalizer};
use satfield_core::dataset::{SceneDataset, Split};
use satfield_core::field::{init_field, Conditioning, FieldGradients, FieldParams, SeasonGate};
use satfield_core::math::Vec3;
use satfield_core::metrics::PSNR_CAP_DB;
use satfield_core::optim::Adam;
use satfield_core::render::view_pixels;
use satfield_core::step::batch_gradients;

use crate::checkpoint::Checkpoint;
use crate::config::{Batching, TrainConfig, Variant};
use crate::error::{IoError, TrainError};

/// One ray per train pixel with its conditioning and target color.
#[derive(Debug, Clone, Default)]
pub struct TrainRays {
    pub rays: Vec<Ray>,
    pub conditions: Vec<Conditioning>,
    pub targets: Vec<Vec3>,
    /// Ray range of each contributing image, in `images` order.
    pub image_ranges: Vec<Range<usize>>,
    pub images: Vec<usize>,
}

impl TrainRays {
    pub fn build(dataset: &SceneDataset, images: &[usize]) -> satfield_core::Result<Self> {
        let frame = dataset.frame();
        let normalizer = dataset.normalizer()?;
        let bounds = dataset.altitude_bounds();
        let per_image: Vec<_> = images
            .par_iter()
            .map(|&i| {
                let im = &dataset.images[i];
                let px = view_pixels(im.pixels.width, im.pixels.height, 1.0);
                rays_from_camera(&im.camera, &frame, &normalizer, &px, bounds)
            })
            .collect::<satfield_core::Result<_>>()?;
        let mut out = TrainRays {
            images: images.to_vec(),
            ..Default::default()
        };
        for (&i, rays) in images.iter().zip(per_image) {
            let im = &dataset.images[i];
            let start = out.rays.len();
            let cond = Conditioning {
                sun: im.sun_direction,
                image: i,
                month: im.month(),
            };
            out.conditions.extend(std::iter::repeat_n(cond, rays.len()));
            out.targets.extend(im.pixels.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]));
            out.rays.extend(rays);
            out.image_ranges.push(start..out.rays.len());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub psnr_train: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub mse: f64,
    pub solar_loss: f64,
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn chunk_seed(seed: u64, step: u64, chunk: u64) -> u64 {
    mix(mix(mix(seed) ^ step) ^ chunk)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (-10.0 * mse.log10()).clamp(0.0, PSNR_CAP_DB)
    }
}

/// Model, optimizer state and the train rays of one run.
pub struct Trainer {
    pub config: TrainConfig,
    pub params: FieldParams,
    adam: Adam,
    normalizer: SceneNormalizer,
    rays: TrainRays,
    sampler: ChaCha8Rng,
    steps_taken: u64,
}

impl Trainer {
    pub fn new(dataset: &SceneDataset, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let params = init_field(&config.field_config(dataset.images.len()), config.seed)?;
        Self::with_params(dataset, config, params)
    }

    /// Continue from existing parameters with a fresh optimizer state.
    pub fn with_params(dataset: &SceneDataset, config: TrainConfig, params: FieldParams) -> Result<Self, TrainError> {
        config.validate()?;
        let train = dataset.indices(Split::Train);
        let rays = TrainRays::build(dataset, &train)?;
        if rays.is_empty() {
            return Err(satfield_core::Error::validation("dataset", "no train pixels").into());
        }
        Ok(Trainer {
            adam: Adam::new(config.adam(), &params),
            normalizer: dataset.normalizer()?,
            sampler: ChaCha8Rng::seed_from_u64(mix(config.seed ^ 0x5a5a)),
            steps_taken: 0,
            rays,
            params,
            config,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant()
    }

    pub fn train_rays(&self) -> &TrainRays {
        &self.rays
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.config
            .steps_per_epoch
            .unwrap_or_else(|| self.rays.len().div_ceil(self.config.rays_per_batch))
    }

    /// Ray indices of the next batch.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let b = self.config.rays_per_batch;
        match self.config.batching {
            Batching::Uniform => (0..b).map(|_| self.sampler.gen_range(0..self.rays.len())).collect(),
            Batching::PerImage => {
                let r = self.rays.image_ranges[self.sampler.gen_range(0..self.rays.image_ranges.len())].clone();
                (0..b).map(|_| self.sampler.gen_range(r.clone())).collect()
            }
        }
    }

    /// Mean loss and gradients over the rays at `indices`. Work is split into
    /// fixed-size chunks and reduced in chunk order, so the result does not
    /// depend on the number of threads.
    pub fn gradients(&self, indices: &[usize], gate: SeasonGate, step: u64) -> satfield_core::Result<(StepStats, FieldGradients)> {
        let total = indices.len() as f64;
        let loss_cfg = self.config.loss_config();
        let settings = self.config.train_render();
        let parts = indices
            .par_chunks(self.config.chunk_rays)
            .enumerate()
            .map(|(k, idx)| {
                let rays: Vec<Ray> = idx.iter().map(|&i| self.rays.rays[i]).collect();
                let conds: Vec<Conditioning> = idx.iter().map(|&i| self.rays.conditions[i]).collect();
                let targets: Vec<Vec3> = idx.iter().map(|&i| self.rays.targets[i]).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(self.config.seed, step, k as u64));
                let out = batch_gradients(
                    &self.params,
                    &self.normalizer,
                    &rays,
                    &conds,
                    &targets,
                    &settings,
                    &loss_cfg,
                    gate,
                    &mut rng,
                )?;
                Ok((idx.len() as f64 / total, out))
            })
            .collect::<satfield_core::Result<Vec<_>>>()?;
        let mut grads = FieldGradients::zeros_for(&self.params);
        let mut stats = StepStats {
            loss: 0.0,
            mse: 0.0,
            solar_loss: 0.0,
        };
        for (w, mut out) in parts {
            out.grads.scale(w);
            grads.accumulate(&out.grads);
            stats.loss += w * out.loss;
            stats.mse += w * out.mse;
            stats.solar_loss += w * out.solar_loss;
        }
        Ok((stats, grads))
    }

    /// One optimizer step on the rays at `indices`.
    pub fn step_on(&mut self, indices: &[usize], gate: SeasonGate, lr: f64) -> satfield_core::Result<StepStats> {
        let (stats, grads) = self.gradients(indices, gate, self.steps_taken)?;
        if let Some(t) = grads.params.tensors().iter().find(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(satfield_core::Error::NonFinite(format!("gradient of `{}`", t.name)));
        }
        self.adam.step(&mut self.params, &grads, gate, lr)?;
        self.steps_taken += 1;
        Ok(stats)
    }

    /// Run one 1-based epoch. Returns the mean loss and mean MSE over its
    /// steps; errors carry the failing step in the message.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<(f64, f64), (usize, satfield_core::Error)> {
        let gate = SeasonGate::for_epoch(epoch, self.config.activation_epoch);
        let lr = self.config.schedule().rate(epoch);
        let steps = self.steps_per_epoch();
        let (mut loss, mut mse) = (0.0, 0.0);
        for s in 0..steps {
            let batch = self.next_batch();
            let stats = self.step_on(&batch, gate, lr).map_err(|e| (s + 1, e))?;
            loss += stats.loss;
            mse += stats.mse;
        }
        Ok((loss / steps as f64, mse / steps as f64))
    }

    pub fn checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            epoch,
            gate: SeasonGate::for_epoch(epoch, self.config.activation_epoch),
            variant: Some(self.variant().label().to_string()),
            train_config: serde_json::to_value(&self.config).ok(),
        }
    }
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("train_log.jsonl")
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }
    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("epoch_{epoch:03}.ckpt"))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: FieldParams,
    pub log: Vec<EpochRecord>,
    /// Final checkpoint, when the run wrote to disk.
    pub model: Option<PathBuf>,
}

/// Train for `config.epochs` epochs. With `out` set, writes the config, a
/// JSON-lines log and one checkpoint per epoch; on divergence the error
/// names the last checkpoint written.
pub fn train(
    dataset: &SceneDataset,
    config: &TrainConfig,
    out: Option<&RunPaths>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(dataset, config.clone())?;
    let mut log_file = match out {
        Some(paths) => {
            fs::create_dir_all(paths.root.join("checkpoints")).map_err(|e| IoError::io(&paths.root, e))?;
            fs::write(paths.config(), config.to_text()).map_err(|e| IoError::io(&paths.config(), e))?;
            Some(File::create(paths.log()).map_err(|e| IoError::io(&paths.log(), e))?)
        }
        None => None,
    };
    let start = Instant::now();
    let mut log = Vec::with_capacity(config.epochs);
    let mut last_good: Option<PathBuf> = None;
    for epoch in 1..=config.epochs {
        let (loss, mse) = trainer.run_epoch(epoch).map_err(|(step, e)| TrainError::Diverged {
            epoch,
            step,
            detail: e.to_string(),
            last_good: last_good.clone(),
        })?;
        let record = EpochRecord {
            epoch,
            loss,
            psnr_train: psnr_from_mse(mse),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let (Some(paths), Some(file)) = (out, log_file.as_mut()) {
            let line = serde_json::to_string(&record).expect("epoch record serializes");
            writeln!(file, "{line}").map_err(|e| IoError::io(&paths.log(), e))?;
            file.flush().map_err(|e| IoError::io(&paths.log(), e))?;
            let path = paths.epoch_checkpoint(epoch);
            trainer.checkpoint(epoch).save(&path)?;
            last_good = Some(path);
        }
        on_epoch(&record);
        log.push(record);
    }
    let model = match out {
        Some(paths) => {
            let path = paths.model();
            trainer.checkpoint(config.epochs).save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        params: trainer.params,
        log,
        model,
    })
}
