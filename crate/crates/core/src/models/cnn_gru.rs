use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use speedcam_nn::{max_pool2d, relu_inplace, Conv3d, ConvGeometry, Gru, Linear, Param, Parameterized, Tensor};

use crate::error::{Error, IoContext, Result};

/// Per-frame feature map the recurrent part expects: 512 channels at 7x7.
pub const FEATURE_CHANNELS: usize = 512;
pub const FEATURE_SIDE: usize = 7;
pub const FEATURE_DIM: usize = FEATURE_CHANNELS * FEATURE_SIDE * FEATURE_SIDE;

/// Channel statistics applied to inputs of a backbone with loaded weights.
const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackbonePreset {
    /// The 13 convolutional layers of VGG16 (224x224 input).
    Vgg16,
    /// A narrow VGG-style stack for 56x56 input with the same 7x7x512 output.
    Desk,
}

#[derive(Clone, Copy, Debug)]
enum Layer {
    Conv(usize),
    Pool,
}

impl BackbonePreset {
    fn layers(self) -> Vec<Layer> {
        use Layer::{Conv, Pool};
        match self {
            BackbonePreset::Vgg16 => vec![
                Conv(64),
                Conv(64),
                Pool,
                Conv(128),
                Conv(128),
                Pool,
                Conv(256),
                Conv(256),
                Conv(256),
                Pool,
                Conv(512),
                Conv(512),
                Conv(512),
                Pool,
                Conv(512),
                Conv(512),
                Conv(512),
                Pool,
            ],
            BackbonePreset::Desk => vec![Conv(16), Pool, Conv(32), Pool, Conv(64), Pool, Conv(512)],
        }
    }

    pub fn native_input_hw(self) -> (usize, usize) {
        match self {
            BackbonePreset::Vgg16 => (224, 224),
            BackbonePreset::Desk => (56, 56),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnGruConfig {
    pub timesteps: usize,
    pub input_hw: (usize, usize),
    pub backbone: BackbonePreset,
    /// Raw little-endian f32 backbone weights, laid out per convolution as
    /// weight `[out, in, 3, 3]` then bias `[out]`. When absent the backbone is
    /// randomly initialized from `seed`.
    pub backbone_weights: Option<PathBuf>,
    pub gru_units: usize,
    pub seed: u64,
}

impl Default for CnnGruConfig {
    fn default() -> Self {
        Self {
            timesteps: 32,
            input_hw: (224, 224),
            backbone: BackbonePreset::Vgg16,
            backbone_weights: None,
            gru_units: 50,
            seed: 0,
        }
    }
}

impl CnnGruConfig {
    /// Desk-scale configuration: small random backbone at 56x56.
    pub fn desk() -> Self {
        Self {
            input_hw: BackbonePreset::Desk.native_input_hw(),
            backbone: BackbonePreset::Desk,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps < 1 {
            return Err(Error::Config("timesteps must be >= 1".into()));
        }
        if self.gru_units < 1 {
            return Err(Error::Config("gru_units must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Backbone {
    layers: Vec<(Layer, Option<Conv3d>)>,
    normalize_input: bool,
}

impl Backbone {
    fn new(preset: BackbonePreset, input_hw: (usize, usize), rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut cin = 3;
        let (mut h, mut w) = input_hw;
        let mut layers = Vec::new();
        for layer in preset.layers() {
            match layer {
                Layer::Conv(cout) => {
                    let mut conv = Conv3d::new(ConvGeometry::planar(cin, cout, 3, 1, 1), true, rng)?;
                    conv.freeze();
                    layers.push((layer, Some(conv)));
                    cin = cout;
                }
                Layer::Pool => {
                    h /= 2;
                    w /= 2;
                    layers.push((layer, None));
                }
            }
        }
        if (cin, h, w) != (FEATURE_CHANNELS, FEATURE_SIDE, FEATURE_SIDE) {
            return Err(Error::Config(format!(
                "backbone output for {}x{} input is {h}x{w}x{cin}, expected {FEATURE_SIDE}x{FEATURE_SIDE}x{FEATURE_CHANNELS}",
                input_hw.0, input_hw.1
            )));
        }
        Ok(Self {
            layers,
            normalize_input: false,
        })
    }

    fn load_raw_weights(&mut self, path: &PathBuf) -> Result<()> {
        let bytes = fs::read(path).at(path)?;
        let mut floats = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let needed: usize = self
            .layers
            .iter()
            .filter_map(|(_, c)| c.as_ref())
            .map(|c| c.weight.numel() + c.bias.as_ref().map_or(0, Param::numel))
            .sum();
        if bytes.len() != needed * 4 {
            return Err(Error::Config(format!(
                "backbone weights {} hold {} bytes, expected {}",
                path.display(),
                bytes.len(),
                needed * 4
            )));
        }
        for conv in self.layers.iter_mut().filter_map(|(_, c)| c.as_mut()) {
            for v in conv.weight.value.data_mut() {
                *v = floats.next().expect("length checked");
            }
            if let Some(b) = &mut conv.bias {
                for v in b.value.data_mut() {
                    *v = floats.next().expect("length checked");
                }
            }
        }
        self.normalize_input = true;
        Ok(())
    }

    /// `[1, 3, 1, H, W] -> [FEATURE_DIM]`
    fn features(&mut self, x: Tensor) -> Result<Vec<f32>> {
        let mut h = x;
        for (layer, conv) in &mut self.layers {
            h = match layer {
                Layer::Conv(_) => {
                    let mut y = conv.as_mut().expect("conv layer").forward(&h, false)?;
                    relu_inplace(&mut y);
                    y
                }
                Layer::Pool => max_pool2d(&h, 2)?,
            };
        }
        Ok(h.into_data())
    }
}

impl Parameterized for Backbone {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        for conv in self.layers.iter().filter_map(|(_, c)| c.as_ref()) {
            conv.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for conv in self.layers.iter_mut().filter_map(|(_, c)| c.as_mut()) {
            conv.visit_params_mut(f);
        }
    }
}

/// Frozen convolutional backbone applied per frame, a GRU over the flattened
/// 7x7x512 feature sequence, and a one-output dense head on the final hidden
/// state.
#[derive(Clone, Debug)]
pub struct CnnGru {
    config: CnnGruConfig,
    backbone: Backbone,
    gru: Gru,
    head: Linear,
}

impl CnnGru {
    pub fn new(config: CnnGruConfig) -> Result<Self> {
        let mut model = Self::without_pretrained(config)?;
        if let Some(path) = model.config.backbone_weights.clone() {
            model.backbone.load_raw_weights(&path)?;
        }
        Ok(model)
    }

    /// Builds the architecture without reading `backbone_weights`; used when
    /// every parameter is about to be overwritten from a checkpoint.
    pub(crate) fn without_pretrained(config: CnnGruConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut backbone = Backbone::new(config.backbone, config.input_hw, &mut rng)?;
        backbone.normalize_input = config.backbone_weights.is_some();
        let gru = Gru::new(FEATURE_DIM, config.gru_units, &mut rng);
        let head = Linear::with_glorot_init(config.gru_units, 1, &mut rng);
        Ok(Self {
            config,
            backbone,
            gru,
            head,
        })
    }

    pub fn config(&self) -> &CnnGruConfig {
        &self.config
    }

    /// Runs the frozen backbone over a `[T, H, W, 3]` clip, giving `[T, FEATURE_DIM]`.
    pub fn encode_frames(&mut self, frames: &Tensor) -> Result<Tensor> {
        let (h, w) = self.config.input_hw;
        frames.expect_shape("CnnGru::encode_frames", &[0, h, w, 3])?;
        let t = frames.dim(0);
        let plane = h * w;
        let mut out = Vec::with_capacity(t * FEATURE_DIM);
        for frame in frames.data().chunks(plane * 3) {
            let mut chw = vec![0.0f32; 3 * plane];
            for (p, px) in frame.chunks(3).enumerate() {
                for c in 0..3 {
                    chw[c * plane + p] = if self.backbone.normalize_input {
                        (px[c] - IMAGENET_MEAN[c]) / IMAGENET_STD[c]
                    } else {
                        px[c]
                    };
                }
            }
            let x = Tensor::from_vec(&[1, 3, 1, h, w], chw)?;
            out.extend(self.backbone.features(x)?);
        }
        Ok(Tensor::from_vec(&[t, FEATURE_DIM], out)?)
    }

    /// `[B, T, FEATURE_DIM] -> [B, 1]`
    pub fn forward_features(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        x.expect_shape("CnnGru", &[0, self.config.timesteps, FEATURE_DIM])?;
        let h = self.gru.forward(x, train)?;
        Ok(self.head.forward(&h, train)?)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let g = self.head.backward(grad)?;
        self.gru.backward(&g, false)?;
        Ok(())
    }

    pub(crate) fn backbone_params(&self) -> &dyn Parameterized {
        &self.backbone
    }
}

impl Parameterized for CnnGru {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.backbone.visit_params(f);
        self.gru.visit_params(f);
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.backbone.visit_params_mut(f);
        self.gru.visit_params_mut(f);
        self.head.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use speedcam_nn::count_params;

    #[test]
    fn reference_counts() {
        let m = CnnGru::new(CnnGruConfig::default()).unwrap();
        let c = count_params(&m);
        assert_eq!(c.frozen, 14_714_688);
        assert_eq!(c.trainable, 3_771_051);
        assert_eq!(count_params(m.backbone_params()).trainable, 0);
    }

    #[test]
    fn wrong_feature_shape_is_rejected() {
        let cfg = CnnGruConfig {
            input_hw: (64, 64),
            ..CnnGruConfig::desk()
        };
        assert!(matches!(CnnGru::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn desk_model_encodes_and_regresses() {
        let cfg = CnnGruConfig {
            timesteps: 3,
            ..CnnGruConfig::desk()
        };
        let mut m = CnnGru::new(cfg).unwrap();
        let frames = Tensor::full(&[3, 56, 56, 3], 0.4);
        let feats = m.encode_frames(&frames).unwrap();
        assert_eq!(feats.shape(), &[3, FEATURE_DIM]);
        let x = Tensor::stack(&[&feats, &feats]).unwrap();
        let y = m.forward_features(&x, true).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert!(y.all_finite());
        m.backward(&Tensor::full(&[2, 1], 1.0)).unwrap();
    }

    #[test]
    fn raw_weight_file_must_match_backbone_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        fs::write(&path, [0u8; 16]).unwrap();
        let cfg = CnnGruConfig {
            backbone_weights: Some(path.clone()),
            ..CnnGruConfig::desk()
        };
        assert!(CnnGru::new(cfg.clone()).is_err());

        let n = count_params(&CnnGru::new(CnnGruConfig::desk()).unwrap().backbone).frozen;
        let bytes: Vec<u8> = (0..n).flat_map(|i| ((i % 7) as f32 * 0.01).to_le_bytes()).collect();
        fs::write(&path, bytes).unwrap();
        let m = CnnGru::new(cfg).unwrap();
        assert!(m.backbone.normalize_input);
        let mut first = None;
        m.backbone.visit_params(&mut |p| {
            first.get_or_insert(p.value.data()[1]);
        });
        assert_eq!(first, Some(0.01));
    }
}
