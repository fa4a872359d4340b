//! The two speed regressors and their checkpoint format.

mod checkpoint;
mod cnn_gru;
mod r3d;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use speedcam_nn::{count_params, Param, Parameterized, Tensor};

use crate::dataset::{ClipSample, NormalizationSpec};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use cnn_gru::{BackbonePreset, CnnGru, CnnGruConfig, FEATURE_DIM};
pub use r3d::{R3d18, R3dConfig, R3D_SPATIAL_STRIDE, R3D_TEMPORAL_STRIDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "r3d18")]
    R3d18,
    #[serde(rename = "cnn_gru")]
    CnnGru,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::R3d18 => "r3d18",
            ModelKind::CnnGru => "cnn_gru",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r3d18" => Ok(ModelKind::R3d18),
            "cnn_gru" | "cnn-gru" => Ok(ModelKind::CnnGru),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    R3d18(R3dConfig),
    CnnGru(CnnGruConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::R3d18(_) => ModelKind::R3d18,
            ModelConfig::CnnGru(_) => ModelKind::CnnGru,
        }
    }

    pub fn timesteps(&self) -> usize {
        match self {
            ModelConfig::R3d18(c) => c.timesteps,
            ModelConfig::CnnGru(c) => c.timesteps,
        }
    }

    pub fn input_hw(&self) -> (usize, usize) {
        match self {
            ModelConfig::R3d18(c) => c.input_hw,
            ModelConfig::CnnGru(c) => c.input_hw,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelConfig::R3d18(c) => c.seed = seed,
            ModelConfig::CnnGru(c) => c.seed = seed,
        }
    }
}

/// Either regressor behind one interface.
///
/// Inputs pass through two stages: [`Regressor::encode`] maps a clip to the
/// input of the trainable part (a channel-first video for the 3D network,
/// frozen backbone features for the recurrent one), and
/// [`Regressor::forward_encoded`] runs the trainable part on a stacked
/// batch. Training caches encodings across epochs.
#[derive(Clone, Debug)]
pub enum Regressor {
    R3d18(R3d18),
    CnnGru(CnnGru),
}

impl Regressor {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        Ok(match config {
            ModelConfig::R3d18(c) => Regressor::R3d18(R3d18::new(*c)?),
            ModelConfig::CnnGru(c) => Regressor::CnnGru(CnnGru::new(c.clone())?),
        })
    }

    pub(crate) fn build_for_restore(config: &ModelConfig) -> Result<Self> {
        Ok(match config {
            ModelConfig::R3d18(c) => Regressor::R3d18(R3d18::new(*c)?),
            ModelConfig::CnnGru(c) => Regressor::CnnGru(CnnGru::without_pretrained(c.clone())?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Regressor::R3d18(m) => ModelConfig::R3d18(*m.config()),
            Regressor::CnnGru(m) => ModelConfig::CnnGru(m.config().clone()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Regressor::R3d18(_) => ModelKind::R3d18,
            Regressor::CnnGru(_) => ModelKind::CnnGru,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.config().timesteps()
    }

    pub fn input_hw(&self) -> (usize, usize) {
        self.config().input_hw()
    }

    /// Checks a clip against the model's timestep count and resolution.
    pub fn check_clip(&self, clip: &ClipSample) -> Result<()> {
        let n = self.timesteps();
        if clip.frames.dim(0) != n {
            return Err(Error::TimestepMismatch {
                expected: n,
                got: clip.frames.dim(0),
            });
        }
        let (h, w) = self.input_hw();
        if clip.frames.shape() != [n, h, w, 3] {
            return Err(Error::Config(format!(
                "clip {} has frame shape {:?}, model expects [{n}, {h}, {w}, 3]",
                clip.episode_id,
                clip.frames.shape()
            )));
        }
        Ok(())
    }

    /// Per-sample input of the trainable part (no batch axis).
    pub fn encode(&mut self, clip: &ClipSample) -> Result<Tensor> {
        self.check_clip(clip)?;
        match self {
            Regressor::R3d18(_) => to_channel_first(&clip.frames),
            Regressor::CnnGru(m) => m.encode_frames(&clip.frames),
        }
    }

    /// `[B, ...encoded] -> [B, 1]`
    pub fn forward_encoded(&mut self, batch: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            Regressor::R3d18(m) => m.forward(batch, train),
            Regressor::CnnGru(m) => m.forward_features(batch, train),
        }
    }

    /// Inference on raw model input: `[B, 3, T, H, W]` for the 3D network,
    /// `[B, T, H, W, 3]` for the recurrent one.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Regressor::R3d18(m) => m.forward(x, false),
            Regressor::CnnGru(m) => {
                let b = x.dim(0);
                let per = x.len() / b.max(1);
                let shape = x.shape()[1..].to_vec();
                let mut encoded = Vec::with_capacity(b);
                for s in x.data().chunks(per) {
                    encoded.push(m.encode_frames(&Tensor::from_vec(&shape, s.to_vec())?)?);
                }
                let refs: Vec<&Tensor> = encoded.iter().collect();
                m.forward_features(&Tensor::stack(&refs)?, false)
            }
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        match self {
            Regressor::R3d18(m) => m.backward(grad),
            Regressor::CnnGru(m) => m.backward(grad),
        }
    }

    /// Shape of one raw input batch; a leading 0 marks the free batch axis.
    pub fn input_shape(&self) -> Vec<usize> {
        let (h, w) = self.input_hw();
        let t = self.timesteps();
        match self {
            Regressor::R3d18(_) => vec![0, 3, t, h, w],
            Regressor::CnnGru(_) => vec![0, t, h, w, 3],
        }
    }

    /// Parameters that never receive gradients (the recurrent model's backbone).
    pub fn frozen_part(&self) -> Option<&dyn Parameterized> {
        match self {
            Regressor::R3d18(_) => None,
            Regressor::CnnGru(m) => Some(m.backbone_params()),
        }
    }
}

impl Parameterized for Regressor {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        match self {
            Regressor::R3d18(m) => m.visit_params(f),
            Regressor::CnnGru(m) => m.visit_params(f),
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Regressor::R3d18(m) => m.visit_params_mut(f),
            Regressor::CnnGru(m) => m.visit_params_mut(f),
        }
    }
}

/// `[T, H, W, 3] -> [3, T, H, W]`
fn to_channel_first(frames: &Tensor) -> Result<Tensor> {
    let (t, h, w) = (frames.dim(0), frames.dim(1), frames.dim(2));
    let plane = t * h * w;
    let mut out = vec![0.0f32; 3 * plane];
    for (p, px) in frames.data().chunks(3).enumerate() {
        out[p] = px[0];
        out[plane + p] = px[1];
        out[2 * plane + p] = px[2];
    }
    Ok(Tensor::from_vec(&[3, t, h, w], out)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub trainable_params: usize,
    pub frozen_params: usize,
    /// A leading 0 is the free batch axis.
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

pub fn summarize(model: &Regressor) -> ModelSummary {
    let counts = count_params(model);
    ModelSummary {
        kind: model.kind(),
        trainable_params: counts.trainable,
        frozen_params: counts.frozen,
        input_shape: model.input_shape(),
        output_shape: vec![0, 1],
    }
}

/// Denormalized inference-mode prediction for one clip.
pub fn predict_speed(model: &mut Regressor, clip: &ClipSample, norm: &NormalizationSpec) -> Result<f64> {
    let x = model.encode(clip)?;
    let shape: Vec<usize> = std::iter::once(1).chain(x.shape().iter().copied()).collect();
    let y = model.forward_encoded(&x.reshape(&shape)?, false)?;
    Ok(norm.denormalize(y.data()[0] as f64))
}

/// Hex SHA-256 over every parameter value, in visit order.
pub fn parameter_checksum(model: &dyn Parameterized) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    model.visit_params(&mut |p| {
        for v in p.value.data() {
            hasher.update(v.to_le_bytes());
        }
    });
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
