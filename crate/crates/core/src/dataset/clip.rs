use image::imageops::{self, FilterType};
use rayon::prelude::*;
use speedcam_nn::Tensor;

use super::manifest::{DatasetManifest, EpisodeRecord};
use super::normalize::NormalizationSpec;
use crate::error::{Error, Result};
use crate::scenesynth::frames_to_cover;

/// Frames needed for the slowest normalizable vehicle (30 km/h) to cross
/// the segment: 192 for 20 m at 80 fps.
pub fn default_horizon_frames(segment_length_m: f64, fps: f64) -> usize {
    frames_to_cover(segment_length_m, NormalizationSpec::default().v_min, fps)
}

/// Evenly spaced indices over `[0, horizon - 1]` with half-up rounding, plus
/// how many of them were clamped to the last recorded frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipPlan {
    pub indices: Vec<usize>,
    pub clamped: usize,
}

pub fn plan_clip(n_frames: usize, n: usize, horizon_frames: usize) -> Result<ClipPlan> {
    if n < 2 {
        return Err(Error::Config(format!("clip length must be >= 2, got {n}")));
    }
    if horizon_frames < n {
        return Err(Error::Config(format!(
            "horizon ({horizon_frames}) must be >= clip length ({n})"
        )));
    }
    if n_frames == 0 {
        return Err(Error::Config("episode has no frames".into()));
    }
    let (h, n) = (horizon_frames, n);
    let mut clamped = 0;
    let indices = (0..n)
        .map(|k| {
            // round(k (h-1) / (n-1)) with ties up, in integers.
            let idx = (2 * k * (h - 1) + (n - 1)) / (2 * (n - 1));
            if idx >= n_frames {
                clamped += 1;
                n_frames - 1
            } else {
                idx
            }
        })
        .collect();
    Ok(ClipPlan { indices, clamped })
}

pub fn clip_indices(n_frames: usize, n: usize, horizon_frames: usize) -> Result<Vec<usize>> {
    Ok(plan_clip(n_frames, n, horizon_frames)?.indices)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClipConfig {
    pub timesteps: usize,
    pub horizon_frames: usize,
    /// Target `(height, width)`; `None` keeps the native resolution.
    pub resize_hw: Option<(u32, u32)>,
}

/// A model input: `N` frames stacked as `[N, H, W, 3]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub episode_id: String,
    pub frames: Tensor,
    pub target: f64,
    pub speed_mps: f64,
    pub timesteps: usize,
    pub horizon_frames: usize,
    pub indices: Vec<usize>,
    pub clamped: usize,
}

pub fn sample_clip(
    manifest: &DatasetManifest,
    episode: &EpisodeRecord,
    cfg: &ClipConfig,
    norm: &NormalizationSpec,
) -> Result<ClipSample> {
    let plan = plan_clip(episode.n_frames, cfg.timesteps, cfg.horizon_frames)?;
    let (h, w) = cfg.resize_hw.unwrap_or((episode.resolution[1], episode.resolution[0]));
    let per_frame = (h * w * 3) as usize;
    let mut data = Vec::with_capacity(per_frame * cfg.timesteps);
    for &idx in &plan.indices {
        let path = manifest.frame_path(&episode.episode_id, idx);
        if !path.is_file() {
            return Err(Error::MissingFrame(path));
        }
        let img = image::open(&path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .into_rgb8();
        let img = if img.dimensions() == (w, h) {
            img
        } else {
            imageops::resize(&img, w, h, FilterType::Triangle)
        };
        data.extend(img.as_raw().iter().map(|&v| v as f32 / 255.0));
    }
    let frames = Tensor::from_vec(&[cfg.timesteps, h as usize, w as usize, 3], data)?;
    Ok(ClipSample {
        episode_id: episode.episode_id.clone(),
        frames,
        target: norm.normalize(episode.speed_mps).value,
        speed_mps: episode.speed_mps,
        timesteps: cfg.timesteps,
        horizon_frames: cfg.horizon_frames,
        indices: plan.indices,
        clamped: plan.clamped,
    })
}

/// Samples one clip per listed episode, in list order.
pub fn sample_clips(
    manifest: &DatasetManifest,
    ids: &[String],
    cfg: &ClipConfig,
    norm: &NormalizationSpec,
) -> Result<Vec<ClipSample>> {
    ids.par_iter()
        .map(|id| {
            let ep = manifest
                .get(id)
                .ok_or_else(|| Error::Config(format!("episode {id} is not in the manifest")))?;
            sample_clip(manifest, ep, cfg, norm)
        })
        .collect()
}
