use crate::error::{NnError, Result};
use crate::param::{Param, Parameterized};
use crate::tensor::Tensor;

/// Per-channel batch normalization over `[B, C, ...]` inputs.
///
/// Training mode normalizes with batch statistics (biased variance) and
/// updates running estimates (unbiased variance) with `momentum`; inference
/// mode uses the running estimates.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    channels: usize,
    eps: f32,
    momentum: f32,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f32>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Param::trainable("weight", Tensor::full(&[channels], 1.0)),
            beta: Param::trainable("bias", Tensor::zeros(&[channels])),
            running_mean: Param::buffer("running_mean", Tensor::zeros(&[channels])),
            running_var: Param::buffer("running_var", Tensor::full(&[channels], 1.0)),
            cache: None,
        }
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.ndim() < 2 || x.dim(1) != self.channels {
            let mut want = vec![0; x.ndim().max(2)];
            want[1] = self.channels;
            return Err(NnError::Shape {
                op: "BatchNorm",
                expected: want,
                got: x.shape().to_vec(),
            });
        }
        let spatial = x.shape()[2..].iter().product::<usize>();
        Ok((x.dim(0), spatial))
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (batch, spatial) = self.layout(x)?;
        let c_n = self.channels;
        let mut y = x.clone();
        if !train {
            let rm = self.running_mean.value.data();
            let rv = self.running_var.value.data();
            let g = self.gamma.value.data();
            let b = self.beta.value.data();
            for (i, chunk) in y.data_mut().chunks_mut(spatial).enumerate() {
                let c = i % c_n;
                let scale = g[c] / (rv[c] + self.eps).sqrt();
                let shift = b[c] - rm[c] * scale;
                chunk.iter_mut().for_each(|v| *v = *v * scale + shift);
            }
            self.cache = None;
            return Ok(y);
        }

        let m = (batch * spatial) as f64;
        let mut mean = vec![0f64; c_n];
        let mut sq = vec![0f64; c_n];
        for (i, chunk) in x.data().chunks(spatial).enumerate() {
            let c = i % c_n;
            for &v in chunk {
                mean[c] += v as f64;
            }
        }
        mean.iter_mut().for_each(|s| *s /= m);
        for (i, chunk) in x.data().chunks(spatial).enumerate() {
            let c = i % c_n;
            for &v in chunk {
                let d = v as f64 - mean[c];
                sq[c] += d * d;
            }
        }
        let var: Vec<f64> = sq.iter().map(|s| s / m).collect();
        let inv_std: Vec<f32> = var
            .iter()
            .map(|v| (1.0 / (v + self.eps as f64).sqrt()) as f32)
            .collect();

        let mut xhat = Tensor::zeros(x.shape());
        let g = self.gamma.value.data();
        let b = self.beta.value.data();
        for (i, (ys, xs)) in y
            .data_mut()
            .chunks_mut(spatial)
            .zip(xhat.data_mut().chunks_mut(spatial))
            .enumerate()
        {
            let c = i % c_n;
            let mu = mean[c] as f32;
            for (yv, xv) in ys.iter_mut().zip(xs.iter_mut()) {
                *xv = (*yv - mu) * inv_std[c];
                *yv = g[c] * *xv + b[c];
            }
        }

        let mom = self.momentum as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for c in 0..c_n {
            let rm = &mut self.running_mean.value.data_mut()[c];
            *rm = ((1.0 - mom) * *rm as f64 + mom * mean[c]) as f32;
            let rv = &mut self.running_var.value.data_mut()[c];
            *rv = ((1.0 - mom) * *rv as f64 + mom * var[c] * unbias) as f32;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(NnError::NoCache { op: "BatchNorm" })?;
        if grad_out.shape() != cache.xhat.shape() {
            return Err(NnError::Shape {
                op: "BatchNorm::backward",
                expected: cache.xhat.shape().to_vec(),
                got: grad_out.shape().to_vec(),
            });
        }
        let (batch, spatial) = self.layout(grad_out)?;
        let c_n = self.channels;
        let m = (batch * spatial) as f64;
        let mut sum_dy = vec![0f64; c_n];
        let mut sum_dy_xhat = vec![0f64; c_n];
        for (i, (gs, xs)) in grad_out
            .data()
            .chunks(spatial)
            .zip(cache.xhat.data().chunks(spatial))
            .enumerate()
        {
            let c = i % c_n;
            for (&g, &xh) in gs.iter().zip(xs) {
                sum_dy[c] += g as f64;
                sum_dy_xhat[c] += g as f64 * xh as f64;
            }
        }
        if let Some(gg) = self.gamma.grad_mut() {
            for c in 0..c_n {
                gg.data_mut()[c] += sum_dy_xhat[c] as f32;
            }
        }
        if let Some(gb) = self.beta.grad_mut() {
            for c in 0..c_n {
                gb.data_mut()[c] += sum_dy[c] as f32;
            }
        }
        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros(grad_out.shape());
        for (i, ((ds, gs), xs)) in dx
            .data_mut()
            .chunks_mut(spatial)
            .zip(grad_out.data().chunks(spatial))
            .zip(cache.xhat.data().chunks(spatial))
            .enumerate()
        {
            let c = i % c_n;
            let k = gamma[c] * cache.inv_std[c];
            let mean_dy = (sum_dy[c] / m) as f32;
            let mean_dy_xhat = (sum_dy_xhat[c] / m) as f32;
            for ((d, &g), &xh) in ds.iter_mut().zip(gs).zip(xs) {
                *d = k * (g - mean_dy - xh * mean_dy_xhat);
            }
        }
        Ok(dx)
    }
}

impl Parameterized for BatchNorm {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{test_rng, uniform};

    #[test]
    fn training_output_is_standardized() {
        let mut bn = BatchNorm::new(3);
        let x = uniform(&[4, 3, 2, 5], -3.0, 7.0, &mut test_rng(1));
        let y = bn.forward(&x, true).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| y.data()[(b * 3 + c) * 10..(b * 3 + c + 1) * 10].to_vec())
                .map(|v| v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm::new(2);
        let mut rng = test_rng(4);
        bn.gamma.value = uniform(&[2], 0.5, 1.5, &mut rng);
        bn.beta.value = uniform(&[2], -0.5, 0.5, &mut rng);
        let x = uniform(&[3, 2, 4], -1.0, 1.0, &mut rng);
        let r = uniform(&[3, 2, 4], -1.0, 1.0, &mut rng);
        bn.forward(&x, true).unwrap();
        let dx = bn.backward(&r).unwrap();
        let dgamma = bn.gamma.grad().unwrap().clone();
        let loss = |bn: &mut BatchNorm, x: &Tensor| -> f64 {
            let y = bn.forward(x, true).unwrap();
            bn.cache = None;
            y.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
        };
        let eps = 1e-2f32;
        let mut xp = x.clone();
        for i in 0..x.len() {
            xp.data_mut()[i] = x.data()[i] + eps;
            let lp = loss(&mut bn, &xp);
            xp.data_mut()[i] = x.data()[i] - eps;
            let lm = loss(&mut bn, &xp);
            xp.data_mut()[i] = x.data()[i];
            let fd = (lp - lm) / (2.0 * eps as f64);
            assert!(
                (fd - dx.data()[i] as f64).abs() < 5e-3,
                "dx[{i}] {fd} vs {}",
                dx.data()[i]
            );
        }
        for c in 0..2 {
            let orig = bn.gamma.value.data()[c];
            bn.gamma.value.data_mut()[c] = orig + eps;
            let lp = loss(&mut bn, &x);
            bn.gamma.value.data_mut()[c] = orig - eps;
            let lm = loss(&mut bn, &x);
            bn.gamma.value.data_mut()[c] = orig;
            let fd = (lp - lm) / (2.0 * eps as f64);
            assert!((fd - dgamma.data()[c] as f64).abs() < 5e-3);
        }
    }

    #[test]
    fn inference_uses_running_statistics() {
        let mut bn = BatchNorm::new(1);
        bn.running_mean.value.data_mut()[0] = 2.0;
        bn.running_var.value.data_mut()[0] = 4.0 - 1e-5;
        let x = Tensor::from_vec(&[1, 1, 2], vec![2.0, 6.0]).unwrap();
        let y = bn.forward(&x, false).unwrap();
        assert!((y.data()[0]).abs() < 1e-6);
        assert!((y.data()[1] - 2.0).abs() < 1e-5);
    }
}
