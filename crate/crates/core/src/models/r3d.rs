use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use speedcam_nn::{
    global_avg_pool, global_avg_pool_backward, relu_backward_inplace, relu_inplace, BatchNorm, Conv3d, ConvGeometry,
    Linear, Param, Parameterized, Tensor,
};

use crate::error::{Error, Result};

const BASE_CHANNELS: [usize; 4] = [64, 128, 256, 512];
/// Spatial and temporal downsampling factors of the whole network.
pub const R3D_SPATIAL_STRIDE: usize = 16;
pub const R3D_TEMPORAL_STRIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct R3dConfig {
    pub timesteps: usize,
    /// `(height, width)` of the network input.
    pub input_hw: (usize, usize),
    /// Scales every channel count; 1.0 is the standard ResNet-18 width.
    pub width_multiplier: f64,
    pub seed: u64,
}

impl Default for R3dConfig {
    fn default() -> Self {
        Self {
            timesteps: 16,
            input_hw: (112, 112),
            width_multiplier: 1.0,
            seed: 0,
        }
    }
}

impl R3dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps < 2 {
            return Err(Error::Config(format!("timesteps must be >= 2, got {}", self.timesteps)));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::Config(format!(
                "width_multiplier must be in (0, 1], got {}",
                self.width_multiplier
            )));
        }
        let (h, w) = self.input_hw;
        if h == 0 || w == 0 || h % R3D_SPATIAL_STRIDE != 0 || w % R3D_SPATIAL_STRIDE != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} must be a positive multiple of the network stride {R3D_SPATIAL_STRIDE}"
            )));
        }
        if self.timesteps % R3D_TEMPORAL_STRIDE != 0 {
            return Err(Error::Config(format!(
                "timesteps {} must be a multiple of the temporal stride {R3D_TEMPORAL_STRIDE}",
                self.timesteps
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> [usize; 4] {
        BASE_CHANNELS.map(|c| ((c as f64 * self.width_multiplier).round() as usize).max(1))
    }
}

#[derive(Clone, Debug)]
struct BasicBlock {
    conv1: Conv3d,
    bn1: BatchNorm,
    conv2: Conv3d,
    bn2: BatchNorm,
    downsample: Option<(Conv3d, BatchNorm)>,
    /// Post-ReLU activations needed for the backward pass.
    mid: Option<Tensor>,
    out: Option<Tensor>,
}

impl BasicBlock {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let downsample = if stride != 1 || cin != cout {
            Some((
                Conv3d::new(ConvGeometry::cubic(cin, cout, 1, stride, 0), false, rng)?,
                BatchNorm::new(cout),
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv3d::new(ConvGeometry::cubic(cin, cout, 3, stride, 1), false, rng)?,
            bn1: BatchNorm::new(cout),
            conv2: Conv3d::new(ConvGeometry::cubic(cout, cout, 3, 1, 1), false, rng)?,
            bn2: BatchNorm::new(cout),
            downsample,
            mid: None,
            out: None,
        })
    }

    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut h = self.conv1.forward(x, train)?;
        h = self.bn1.forward(&h, train)?;
        relu_inplace(&mut h);
        let mut y = self.conv2.forward(&h, train)?;
        y = self.bn2.forward(&y, train)?;
        match &mut self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(x, train)?;
                y.add_assign(&bn.forward(&s, train)?)?;
            }
            None => y.add_assign(x)?,
        }
        relu_inplace(&mut y);
        if train {
            self.mid = Some(h);
            self.out = Some(y.clone());
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let (Some(mid), Some(out)) = (self.mid.take(), self.out.take()) else {
            return Err(speedcam_nn::NnError::NoCache { op: "BasicBlock" }.into());
        };
        let mut g = grad.clone();
        relu_backward_inplace(&mut g, &out);
        let g2 = self.bn2.backward(&g)?;
        let mut g_mid = self.conv2.backward(&g2, true)?.expect("input grad requested");
        relu_backward_inplace(&mut g_mid, &mid);
        let g1 = self.bn1.backward(&g_mid)?;
        let gx = self.conv1.backward(&g1, need_input_grad)?;
        let shortcut = match &mut self.downsample {
            Some((conv, bn)) => {
                let gs = bn.backward(&g)?;
                conv.backward(&gs, need_input_grad)?
            }
            None => need_input_grad.then_some(g),
        };
        Ok(match (gx, shortcut) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b)?;
                Some(a)
            }
            _ => None,
        })
    }
}

impl Parameterized for BasicBlock {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.conv1.visit_params(f);
        self.bn1.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
        if let Some((c, b)) = &self.downsample {
            c.visit_params(f);
            b.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv1.visit_params_mut(f);
        self.bn1.visit_params_mut(f);
        self.conv2.visit_params_mut(f);
        self.bn2.visit_params_mut(f);
        if let Some((c, b)) = &mut self.downsample {
            c.visit_params_mut(f);
            b.visit_params_mut(f);
        }
    }
}

/// 3D ResNet-18 regressor: `[B, 3, T, H, W] -> [B, 1]`.
///
/// Stem: 3x7x7 convolution, stride (1, 2, 2), no max-pooling. Four stages of
/// two basic blocks; stages 2-4 halve time and space. Global average pooling
/// feeds a single-output linear head.
#[derive(Clone, Debug)]
pub struct R3d18 {
    config: R3dConfig,
    stem: Conv3d,
    stem_bn: BatchNorm,
    blocks: Vec<BasicBlock>,
    fc: Linear,
    stem_out: Option<Tensor>,
    pooled_shape: Option<Vec<usize>>,
}

impl R3d18 {
    pub fn new(config: R3dConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ch = config.channels();
        let stem_geom = ConvGeometry {
            in_channels: 3,
            out_channels: ch[0],
            kernel: [3, 7, 7],
            stride: [1, 2, 2],
            padding: [1, 3, 3],
        };
        let stem = Conv3d::new(stem_geom, false, &mut rng)?;
        let mut blocks = Vec::with_capacity(8);
        let mut cin = ch[0];
        for (stage, &cout) in ch.iter().enumerate() {
            let stride = if stage == 0 { 1 } else { 2 };
            blocks.push(BasicBlock::new(cin, cout, stride, &mut rng)?);
            blocks.push(BasicBlock::new(cout, cout, 1, &mut rng)?);
            cin = cout;
        }
        let fc = Linear::with_normal_init(cin, 1, 0.01, &mut rng);
        Ok(Self {
            config,
            stem,
            stem_bn: BatchNorm::new(ch[0]),
            blocks,
            fc,
            stem_out: None,
            pooled_shape: None,
        })
    }

    pub fn config(&self) -> &R3dConfig {
        &self.config
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 5] {
        let (h, w) = self.config.input_hw;
        [batch, 3, self.config.timesteps, h, w]
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let want = self.input_shape(0);
        x.expect_shape("R3d18", &want)?;
        let mut h = self.stem.forward(x, train)?;
        h = self.stem_bn.forward(&h, train)?;
        relu_inplace(&mut h);
        if train {
            self.stem_out = Some(h.clone());
        }
        for block in &mut self.blocks {
            h = block.forward(&h, train)?;
        }
        if train {
            self.pooled_shape = Some(h.shape().to_vec());
        }
        let pooled = global_avg_pool(&h)?;
        Ok(self.fc.forward(&pooled, train)?)
    }

    /// Accumulates parameter gradients for `grad` (`[B, 1]`) from the last
    /// training-mode forward pass.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let (Some(stem_out), Some(shape)) = (self.stem_out.take(), self.pooled_shape.take()) else {
            return Err(speedcam_nn::NnError::NoCache { op: "R3d18" }.into());
        };
        let g = self.fc.backward(grad)?;
        let mut g = global_avg_pool_backward(&g, &shape)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g, true)?.expect("input grad requested");
        }
        relu_backward_inplace(&mut g, &stem_out);
        let g = self.stem_bn.backward(&g)?;
        self.stem.backward(&g, false)?;
        Ok(())
    }
}

impl Parameterized for R3d18 {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.stem.visit_params(f);
        self.stem_bn.visit_params(f);
        for b in &self.blocks {
            b.visit_params(f);
        }
        self.fc.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stem.visit_params_mut(f);
        self.stem_bn.visit_params_mut(f);
        for b in &mut self.blocks {
            b.visit_params_mut(f);
        }
        self.fc.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use speedcam_nn::count_params;

    fn tiny() -> R3dConfig {
        R3dConfig {
            timesteps: 8,
            input_hw: (16, 16),
            width_multiplier: 0.0625,
            seed: 3,
        }
    }

    #[test]
    fn reference_trainable_count() {
        let m = R3d18::new(R3dConfig::default()).unwrap();
        let c = count_params(&m);
        assert_eq!(c.trainable, 33_166_785);
        assert_eq!(c.frozen, 0);
    }

    #[test]
    fn stride_incompatible_input_is_rejected() {
        let bad = R3dConfig {
            input_hw: (100, 112),
            ..R3dConfig::default()
        };
        assert!(R3d18::new(bad).is_err());
        let bad_t = R3dConfig {
            timesteps: 12,
            ..R3dConfig::default()
        };
        assert!(R3d18::new(bad_t).is_err());
    }

    #[test]
    fn block_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = BasicBlock::new(2, 3, 2, &mut rng).unwrap();
        let x = speedcam_nn::init::normal(&[2, 2, 4, 4, 4], 1.0, &mut rng);
        let probe = speedcam_nn::init::normal(&[2, 3, 2, 2, 2], 1.0, &mut rng);
        let loss = |b: &mut BasicBlock, x: &Tensor| -> f64 {
            let y = b.forward(x, true).unwrap();
            y.data()
                .iter()
                .zip(probe.data())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum()
        };
        loss(&mut block, &x);
        let gx = block.backward(&probe, true).unwrap().unwrap();
        let eps = 1e-2f32;
        for i in [0usize, 17, 55, 101] {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let fd = (loss(&mut block.clone(), &xp) - loss(&mut block.clone(), &xm)) / (2.0 * eps as f64);
            let an = gx.data()[i] as f64;
            assert!((fd - an).abs() < 2e-2 * (1.0 + fd.abs()), "i={i} fd={fd} an={an}");
        }
    }

    #[test]
    fn forward_backward_on_tiny_network() {
        let mut m = R3d18::new(tiny()).unwrap();
        let x = Tensor::full(&m.input_shape(2), 0.5);
        let y = m.forward(&x, true).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        m.backward(&Tensor::full(&[2, 1], 1.0)).unwrap();
        assert!(m.backward(&Tensor::full(&[2, 1], 1.0)).is_err());
    }
}
