//! Training loop: Gaussian-smoothed KL objective, map augmentation,
//! Adam, and checkpoint selection by validation accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::{AdamState, Tape, Tensor};
use crate::eval::{evaluate_model, metrics_from, EvalError, Metrics};
use crate::model::{kl_loss, save_checkpoint, Ablation, Model, ModelError};
use crate::text::{encode_dialog, DialogVariant};
use crate::util::rng_for;
use crate::worldgen::{Environment, Episode, Split, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("training diverged: {0}")]
    Diverged(String),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Gaussian smoothing radius for the target distribution, meters
    pub sigma_m: f64,
    pub augment: bool,
    /// maximum fraction of each map side erased by the crop augmentation
    pub crop_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.001,
            batch_size: 10,
            sigma_m: 3.0,
            augment: true,
            crop_frac: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch_size must be positive".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.sigma_m <= 0.0 {
            return Err(TrainError::Config("sigma_m must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.crop_frac) {
            return Err(TrainError::Config("crop_frac must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// One training example with the dialog already encoded.
#[derive(Debug, Clone)]
pub struct Sample {
    pub episode_id: String,
    pub raster: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub tokens: Vec<u32>,
    /// final position in meters on the episode's floor
    pub pos_m: (f64, f64),
    pub meters_per_pixel: f64,
}

pub fn prepare_samples(
    envs: &BTreeMap<String, Environment>,
    episodes: &[Episode],
    model: &Model,
) -> Result<Vec<Sample>, TrainError> {
    episodes
        .iter()
        .map(|ep| {
            let env = envs.get(&ep.env_id).ok_or_else(|| {
                TrainError::Config(format!("unknown environment {}", ep.env_id))
            })?;
            let f = &env.floors[ep.final_floor()];
            let tokens = encode_dialog(&ep.dialog, &model.vocab, DialogVariant::Full);
            Ok(Sample {
                episode_id: ep.episode_id.clone(),
                raster: f.raster.clone(),
                height: f.height,
                width: f.width,
                tokens: tokens.ids,
                pos_m: (ep.final_position.1, ep.final_position.2),
                meters_per_pixel: env.meters_per_pixel,
            })
        })
        .collect()
}

/// Normalized Gaussian over cell centers around the true position.
pub fn gaussian_target(
    rows: usize,
    cols: usize,
    cell_m: f64,
    true_pos: (f64, f64),
    sigma_m: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x = (c as f64 + 0.5) * cell_m;
            let y = (r as f64 + 0.5) * cell_m;
            let d2 = (x - true_pos.0).powi(2) + (y - true_pos.1).powi(2);
            out.push((-d2 / (2.0 * sigma_m * sigma_m)).exp());
        }
    }
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Color jitter, 180° rotation, and border crop-erasure. Returns the
/// augmented raster and the (possibly rotated) target position.
pub fn augment_sample(
    raster: &[u8],
    height: usize,
    width: usize,
    pos_m: (f64, f64),
    meters_per_pixel: f64,
    crop_frac: f64,
    rng: &mut ChaCha12Rng,
) -> (Vec<u8>, (f64, f64)) {
    let mut px = raster.to_vec();

    // per-channel affine jitter
    for ch in 0..3 {
        let scale = rng.gen_range(0.8..1.2);
        let offset = rng.gen_range(-0.1..0.1) * 255.0;
        for p in px[ch..].iter_mut().step_by(3) {
            *p = (*p as f64 * scale + offset).clamp(0.0, 255.0) as u8;
        }
    }

    // 180° rotation with probability 1/2
    let mut pos = pos_m;
    if rng.gen::<bool>() {
        let mut rot = vec![0u8; px.len()];
        for row in 0..height {
            for col in 0..width {
                let src = (row * width + col) * 3;
                let dst = ((height - 1 - row) * width + (width - 1 - col)) * 3;
                rot[dst..dst + 3].copy_from_slice(&px[src..src + 3]);
            }
        }
        px = rot;
        pos = (
            (width - 1) as f64 * meters_per_pixel - pos.0,
            (height - 1) as f64 * meters_per_pixel - pos.1,
        );
    }

    // erase up to crop_frac of each side, keeping the target visible
    let (col_px, row_px) = (pos.0 / meters_per_pixel, pos.1 / meters_per_pixel);
    for _ in 0..5 {
        let l = rng.gen_range(0.0..=crop_frac.max(f64::MIN_POSITIVE)) * width as f64;
        let r = rng.gen_range(0.0..=crop_frac.max(f64::MIN_POSITIVE)) * width as f64;
        let t = rng.gen_range(0.0..=crop_frac.max(f64::MIN_POSITIVE)) * height as f64;
        let b = rng.gen_range(0.0..=crop_frac.max(f64::MIN_POSITIVE)) * height as f64;
        let (l, r, t, b) = (l as usize, r as usize, t as usize, b as usize);
        let keeps = col_px >= l as f64
            && col_px < (width - r) as f64
            && row_px >= t as f64
            && row_px < (height - b) as f64;
        if !keeps {
            continue;
        }
        for row in 0..height {
            for col in 0..width {
                if row < t || row >= height - b || col < l || col >= width - r {
                    let i = (row * width + col) * 3;
                    px[i..i + 3].copy_from_slice(&[0, 0, 0]);
                }
            }
        }
        break;
    }
    (px, pos)
}

/// Index of the best epoch: highest accuracy, earliest on ties.
pub fn select_checkpoint(acc_by_epoch: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &a) in acc_by_epoch.iter().enumerate() {
        if best.is_none_or(|b| a > acc_by_epoch[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept
    pub best_epoch: usize,
    pub best_acc_3m: f64,
    pub final_train_loss: f64,
    /// (epoch, split name, metrics) per evaluated split per epoch
    pub history: Vec<(usize, &'static str, Metrics)>,
}

/// Train on the `Train` episodes, evaluating every split each epoch.
/// The weights kept (and written to `out_dir/checkpoint.ckpt` when an
/// output directory is given) are those of the epoch with the best
/// val-unseen Acc@3m; ties keep the earlier epoch. Falls back to train
/// Acc@3m when no val-unseen episodes exist.
pub fn train(
    model: &mut Model,
    envs: &BTreeMap<String, Environment>,
    episodes: &[Episode],
    config: &TrainConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let train_eps: Vec<Episode> =
        episodes.iter().filter(|e| e.split == Split::Train).cloned().collect();
    if train_eps.is_empty() {
        return Err(TrainError::Config("no training episodes".into()));
    }
    let samples = prepare_samples(envs, &train_eps, model)?;
    let select_split = if episodes.iter().any(|e| e.split == Split::ValUnseen) {
        Split::ValUnseen
    } else {
        Split::Train
    };

    let mut adam = AdamState::new(&model.params, config.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::new();
    let mut select_acc = Vec::new();
    let mut best_params: Option<Vec<Vec<f64>>> = None;
    let mut final_loss = f64::NAN;

    for epoch in 1..=config.epochs {
        let mut rng = rng_for(seed, &format!("epoch-{epoch}"));
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let tape = Tape::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &si in batch {
                let s = &samples[si];
                let (raster, pos) = if config.augment {
                    augment_sample(
                        &s.raster,
                        s.height,
                        s.width,
                        s.pos_m,
                        s.meters_per_pixel,
                        config.crop_frac,
                        &mut rng,
                    )
                } else {
                    (s.raster.clone(), s.pos_m)
                };
                let map = Model::map_tensor(&tape, &raster, s.height, s.width);
                let logits =
                    model.forward(&tape, &map, &s.tokens, Ablation::Full, true, &mut rng)?;
                let ds = model.config.downsample;
                let target = gaussian_target(
                    s.height / ds,
                    s.width / ds,
                    ds as f64 * s.meters_per_pixel,
                    pos,
                    config.sigma_m,
                );
                let t = tape.constant(&[target.len()], target);
                losses.push(kl_loss(&logits, &t)?);
            }
            let refs: Vec<&Tensor> = losses.iter().collect();
            let loss = Tensor::concat(&refs, 0).sum().scale(1.0 / batch.len() as f64);
            let value = loss.scalar();
            if !value.is_finite() {
                return Err(TrainError::Diverged(format!(
                    "non-finite loss {value} at epoch {epoch}"
                )));
            }
            epoch_loss += value * batch.len() as f64;
            model.params.zero_grads();
            tape.backward(&loss).map_err(ModelError::from)?;
            adam.step(&model.params);
        }
        final_loss = epoch_loss / samples.len() as f64;

        // per-epoch metrics on every split present
        let mut selected = 0.0;
        for split in Split::all() {
            let eps: Vec<Episode> =
                episodes.iter().filter(|e| e.split == split).cloned().collect();
            if eps.is_empty() {
                continue;
            }
            let results =
                evaluate_model(model, envs, &eps, DialogVariant::Full, Ablation::Full)?;
            let m = metrics_from(&results);
            if split == select_split {
                selected = m.acc_3m;
            }
            history.push((epoch, split.as_str(), m));
        }
        select_acc.push(selected);
        if select_checkpoint(&select_acc) == Some(epoch - 1) {
            best_params =
                Some(model.params.iter().map(|p| p.borrow().values.clone()).collect());
        }
    }

    // restore the selected epoch's weights
    let best_epoch = select_checkpoint(&select_acc).unwrap() + 1;
    if let Some(best) = best_params {
        for (p, vals) in model.params.iter().zip(best) {
            p.borrow_mut().values = vals;
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(&dir.join("checkpoint.ckpt"), model, seed)?;
        write_metrics_history(&dir.join("metrics.csv"), &history)?;
    }
    Ok(TrainReport {
        epochs_run: config.epochs,
        best_epoch,
        best_acc_3m: select_acc[best_epoch - 1],
        final_train_loss: final_loss,
        history,
    })
}

fn write_metrics_history(
    path: &Path,
    history: &[(usize, &'static str, Metrics)],
) -> Result<(), TrainError> {
    let mut out =
        String::from("epoch,split,n,le_mean_m,le_se_m,acc_3m,acc_3m_se,acc_5m,acc_5m_se\n");
    for (epoch, split, m) in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            epoch, split, m.n, m.le_mean_m, m.le_se_m, m.acc_3m, m.acc_3m_se, m.acc_5m, m.acc_5m_se
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}
