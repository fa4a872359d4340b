use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use speedcam_nn::{Adam, AdamConfig, ParamKind, Parameterized, Tensor};

use super::early_stop::{best_epoch, early_stop_check, EarlyStop};
use crate::dataset::{default_horizon_frames, ClipConfig, ClipSample, DatasetManifest, NormalizationSpec};
use crate::error::{Error, IoContext, Result};
use crate::models::{save_checkpoint, CheckpointMeta, ModelConfig, ModelKind, Regressor};

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// `None` disables early stopping.
    pub early_stop_patience: Option<usize>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Reference recipe for each architecture.
    pub fn for_kind(kind: ModelKind) -> Self {
        let adam = AdamConfig::with_lr(0.0);
        let (learning_rate, batch_size, max_epochs, early_stop_patience) = match kind {
            ModelKind::R3d18 => (3e-4, 5, 100, Some(7)),
            ModelKind::CnnGru => (1e-4, 3, 150, None),
        };
        Self {
            model_kind: kind,
            learning_rate,
            batch_size,
            max_epochs,
            early_stop_patience,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::Config("early_stop_patience must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub wall_time_s: f64,
}

impl TrainHistory {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_epochs_csv(path, &self.epochs)
    }

    /// Reads the per-epoch rows of `history.csv`.
    pub fn read_csv(path: &Path) -> Result<Vec<EpochRecord>> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
    }
}

/// Where training writes its artifacts.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
}

impl RunArtifacts {
    pub fn history(&self) -> PathBuf {
        self.dir.join(HISTORY_FILE)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_FILE)
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join(TRAIN_CONFIG_FILE)
    }
}

/// `<base>/<UTC timestamp>_seed<seed>`, created on disk.
pub fn create_run_dir(base: &Path, seed: u64) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let dir = base.join(format!("{stamp}_seed{seed}"));
    fs::create_dir_all(&dir).at(&dir)?;
    Ok(dir)
}

/// Clip sampling matched to a model: its timestep count and input size,
/// over the dataset's default horizon.
pub fn clip_config_for(model: &ModelConfig, manifest: &DatasetManifest) -> ClipConfig {
    let (h, w) = model.input_hw();
    ClipConfig {
        timesteps: model.timesteps(),
        horizon_frames: default_horizon_frames(manifest.segment_length_m, manifest.fps),
        resize_hw: Some((h as u32, w as u32)),
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Id of the best-epoch checkpoint, when artifacts were written.
    pub checkpoint_id: Option<String>,
}

#[derive(Serialize)]
struct ConfigSnapshot<'a> {
    train: &'a TrainConfig,
    model: &'a ModelConfig,
    norm: &'a NormalizationSpec,
    n_train: usize,
    n_val: usize,
}

fn stack_batch(encoded: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    let items: Vec<&Tensor> = idx.iter().map(|&i| &encoded[i]).collect();
    Ok(Tensor::stack(&items)?)
}

/// Mean squared error over a whole split, inference mode.
fn evaluate_loss(model: &mut Regressor, encoded: &[Tensor], targets: &[f64], batch: usize) -> Result<f64> {
    let order: Vec<usize> = (0..encoded.len()).collect();
    let mut sum = 0.0;
    for chunk in order.chunks(batch) {
        let y = model.forward_encoded(&stack_batch(encoded, chunk)?, false)?;
        for (p, &i) in y.data().iter().zip(chunk) {
            sum += (*p as f64 - targets[i]).powi(2);
        }
    }
    Ok(sum / encoded.len() as f64)
}

fn snapshot(model: &Regressor) -> Vec<Tensor> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| {
        if p.kind() != ParamKind::Frozen {
            out.push(p.value.clone());
        }
    });
    out
}

fn restore(model: &mut Regressor, saved: &[Tensor]) {
    let mut it = saved.iter();
    model.visit_params_mut(&mut |p| {
        if p.kind() != ParamKind::Frozen {
            p.value = it.next().expect("snapshot matches model").clone();
        }
    });
}

/// Fits `model` to the training clips with Adam on the MSE of normalized
/// targets, validating once per epoch.
///
/// Batches are reshuffled every epoch from `config.seed`; the final partial
/// batch is kept. With early stopping enabled, training halts per
/// [`early_stop_check`] and the best-epoch parameters are restored. When
/// `artifacts` is given, `history.csv` is rewritten each epoch, the best
/// epoch is checkpointed, and the resolved configuration is saved.
pub fn train(
    model: &mut Regressor,
    train_clips: &[ClipSample],
    val_clips: &[ClipSample],
    config: &TrainConfig,
    norm: &NormalizationSpec,
    artifacts: Option<&RunArtifacts>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.kind() != config.model_kind {
        return Err(Error::Config(format!(
            "training config is for {}, model is {}",
            config.model_kind,
            model.kind()
        )));
    }
    if train_clips.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val_clips.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    let started = Instant::now();
    let model_config = model.config();
    if let Some(a) = artifacts {
        fs::create_dir_all(&a.dir).at(&a.dir)?;
        crate::dataset::write_json(
            &a.config(),
            &ConfigSnapshot {
                train: config,
                model: &model_config,
                norm,
                n_train: train_clips.len(),
                n_val: val_clips.len(),
            },
        )?;
    }

    let encode = |model: &mut Regressor, clips: &[ClipSample]| -> Result<(Vec<Tensor>, Vec<f64>)> {
        let mut enc = Vec::with_capacity(clips.len());
        for c in clips {
            enc.push(model.encode(c)?);
        }
        Ok((enc, clips.iter().map(|c| c.target).collect()))
    };
    let (train_x, train_y) = encode(model, train_clips)?;
    let (val_x, val_y) = encode(model, val_clips)?;

    let mut adam = Adam::new(config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut checkpoint_id = None;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        for (batch_no, idx) in order.chunks(config.batch_size).enumerate() {
            let x = stack_batch(&train_x, idx)?;
            let y = model.forward_encoded(&x, true)?;
            let b = idx.len() as f64;
            let mut grad = Tensor::zeros(&[idx.len(), 1]);
            let mut batch_sq = 0.0;
            for (k, (&p, &i)) in y.data().iter().zip(idx).enumerate() {
                let d = p as f64 - train_y[i];
                batch_sq += d * d;
                grad.data_mut()[k] = (2.0 * d / b) as f32;
            }
            if !batch_sq.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            sq_sum += batch_sq;
            model.zero_grad();
            model.backward(&grad)?;
            adam.step(model);
        }
        let train_loss = sq_sum / train_x.len() as f64;
        let val_loss = evaluate_loss(model, &val_x, &val_y, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        info!("epoch {epoch}: train_loss {train_loss:.6} val_loss {val_loss:.6}");
        epochs.push(record);

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, snapshot(model)));
            if let Some(a) = artifacts {
                let meta = CheckpointMeta {
                    norm: *norm,
                    seed: config.seed,
                    learning_rate: config.learning_rate,
                    adam_beta1: config.adam_beta1,
                    adam_beta2: config.adam_beta2,
                    adam_eps: config.adam_eps,
                    epoch: Some(epoch),
                };
                checkpoint_id = Some(save_checkpoint(&a.checkpoint(), model, &meta)?);
            }
        }
        if let Some(a) = artifacts {
            write_epochs_csv(&a.history(), &epochs)?;
        }
        if let Some(patience) = config.early_stop_patience {
            let val: Vec<f64> = epochs.iter().map(|e| e.val_loss).collect();
            if let EarlyStop::Stop { best_epoch } = early_stop_check(&val, patience)? {
                info!("early stop after epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }
    }

    if config.early_stop_patience.is_some() {
        if let Some((_, params)) = &best {
            restore(model, params);
        }
    }
    let val: Vec<f64> = epochs.iter().map(|e| e.val_loss).collect();
    let history = TrainHistory {
        stopped_epoch: epochs.len(),
        best_epoch: best_epoch(&val),
        epochs,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { history, checkpoint_id })
}

fn write_epochs_csv(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for e in epochs {
        w.serialize(e).map_err(csv_err)?;
    }
    w.flush().at(path)
}
