use serde::{Deserialize, Serialize};

use crate::dataset::{sample_clip, ClipConfig, ClipSample, DatasetManifest, NormalizationSpec};
use crate::error::{Error, Result};
use crate::models::{predict_speed, Regressor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeError {
    pub episode_id: String,
    pub true_speed_mps: f64,
    pub predicted_speed_mps: f64,
    pub abs_error_mps: f64,
}

impl EpisodeError {
    pub fn new(episode_id: impl Into<String>, true_speed_mps: f64, predicted_speed_mps: f64) -> Self {
        Self {
            episode_id: episode_id.into(),
            true_speed_mps,
            predicted_speed_mps,
            abs_error_mps: (true_speed_mps - predicted_speed_mps).abs(),
        }
    }
}

/// Per-episode errors sorted by episode id, with their aggregate metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub overall_mae_mps: f64,
    pub rmse_mps: f64,
    pub errors: Vec<EpisodeError>,
}

impl Evaluation {
    pub fn from_errors(mut errors: Vec<EpisodeError>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptySplit("test"));
        }
        errors.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        let n = errors.len() as f64;
        let mae = errors.iter().map(|e| e.abs_error_mps).sum::<f64>() / n;
        let mse = errors.iter().map(|e| e.abs_error_mps.powi(2)).sum::<f64>() / n;
        Ok(Self {
            overall_mae_mps: mae,
            rmse_mps: mse.sqrt(),
            errors,
        })
    }

    pub fn n_test(&self) -> usize {
        self.errors.len()
    }
}

/// Scores `model` on pre-sampled clips (one per episode).
pub fn evaluate_clips(model: &mut Regressor, clips: &[ClipSample], norm: &NormalizationSpec) -> Result<Evaluation> {
    let errors = clips
        .iter()
        .map(|c| {
            Ok(EpisodeError::new(
                &c.episode_id,
                c.speed_mps,
                predict_speed(model, c, norm)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_errors(errors)
}

/// Samples one clip per test episode and scores `model` on it.
pub fn evaluate(
    model: &mut Regressor,
    manifest: &DatasetManifest,
    test_ids: &[String],
    clip_cfg: &ClipConfig,
    norm: &NormalizationSpec,
) -> Result<Evaluation> {
    if test_ids.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let mut errors = Vec::with_capacity(test_ids.len());
    for id in test_ids {
        let ep = manifest
            .get(id)
            .ok_or_else(|| Error::Config(format!("test episode {id} is not in the manifest")))?;
        let clip = sample_clip(manifest, ep, clip_cfg, norm)?;
        errors.push(EpisodeError::new(id, ep.speed_mps, predict_speed(model, &clip, norm)?));
    }
    Evaluation::from_errors(errors)
}
