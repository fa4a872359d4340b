use rand::Rng;

use crate::error::{NnError, Result};
use crate::gemm::{sgemm, MatRef};
use crate::init;
use crate::param::{Param, Parameterized};
use crate::tensor::Tensor;

/// Dense layer `y = x W^T + b` on `[B, in]` inputs.
#[derive(Clone, Debug)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    /// `[out, in]`
    pub weight: Param,
    pub bias: Param,
    cached_input: Option<Tensor>,
}

impl Linear {
    /// Weights drawn from `N(0, std^2)`, zero bias.
    pub fn with_normal_init<R: Rng + ?Sized>(in_features: usize, out_features: usize, std: f64, rng: &mut R) -> Self {
        Self::from_weight(
            in_features,
            out_features,
            init::normal(&[out_features, in_features], std, rng),
        )
    }

    /// Glorot-uniform weights, zero bias.
    pub fn with_glorot_init<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self::from_weight(
            in_features,
            out_features,
            init::glorot_uniform(out_features, in_features, rng),
        )
    }

    fn from_weight(in_features: usize, out_features: usize, w: Tensor) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::trainable("weight", w),
            bias: Param::trainable("bias", Tensor::zeros(&[out_features])),
            cached_input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        x.expect_shape("Linear", &[0, self.in_features])?;
        let b = x.dim(0);
        let mut y = Tensor::zeros(&[b, self.out_features]);
        for row in y.data_mut().chunks_mut(self.out_features) {
            row.copy_from_slice(self.bias.value.data());
        }
        sgemm(
            b,
            self.in_features,
            self.out_features,
            1.0,
            MatRef::row_major(x.data(), self.in_features),
            MatRef::transposed(self.weight.value.data(), self.in_features),
            1.0,
            y.data_mut(),
            self.out_features,
        );
        self.cached_input = train.then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cached_input.take().ok_or(NnError::NoCache { op: "Linear" })?;
        let b = x.dim(0);
        grad_out.expect_shape("Linear::backward", &[b, self.out_features])?;
        if let Some(gw) = self.weight.grad_mut() {
            // dW (out x in) += dY^T (out x B) * X (B x in)
            sgemm(
                self.out_features,
                b,
                self.in_features,
                1.0,
                MatRef::transposed(grad_out.data(), self.out_features),
                MatRef::row_major(x.data(), self.in_features),
                1.0,
                gw.data_mut(),
                self.in_features,
            );
        }
        if let Some(gb) = self.bias.grad_mut() {
            for row in grad_out.data().chunks(self.out_features) {
                for (a, &g) in gb.data_mut().iter_mut().zip(row) {
                    *a += g;
                }
            }
        }
        let mut dx = Tensor::zeros(&[b, self.in_features]);
        sgemm(
            b,
            self.out_features,
            self.in_features,
            1.0,
            MatRef::row_major(grad_out.data(), self.out_features),
            MatRef::row_major(self.weight.value.data(), self.in_features),
            0.0,
            dx.data_mut(),
            self.in_features,
        );
        Ok(dx)
    }
}

impl Parameterized for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::test_rng;

    #[test]
    fn forward_and_backward_by_hand() {
        let mut lin = Linear::with_normal_init(2, 1, 0.1, &mut test_rng(0));
        lin.weight.value = Tensor::from_vec(&[1, 2], vec![2.0, -1.0]).unwrap();
        lin.bias.value = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 3.0, 2.0]).unwrap();
        let y = lin.forward(&x, true).unwrap();
        assert_eq!(y.data(), &[1.5, 4.5]);
        let g = Tensor::from_vec(&[2, 1], vec![1.0, -1.0]).unwrap();
        let dx = lin.backward(&g).unwrap();
        assert_eq!(dx.data(), &[2.0, -1.0, -2.0, 1.0]);
        assert_eq!(lin.weight.grad().unwrap().data(), &[-2.0, -1.0]);
        assert_eq!(lin.bias.grad().unwrap().data(), &[0.0]);
    }
}
