use crate::param::{Param, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Moment coefficients and epsilon from the original Adam publication.
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. State is keyed by the visit order of trainable
/// parameters, so the same optimizer must always be stepped on the same
/// module.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter using its current
    /// gradient. Frozen parameters and buffers are never touched.
    pub fn step(&mut self, module: &mut dyn Parameterized) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = (c.lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let (b1, b2, eps) = (c.beta1 as f32, c.beta2 as f32, c.eps as f32);
        let moments = &mut self.moments;
        let mut idx = 0;
        module.visit_params_mut(&mut |p: &mut Param| {
            if !p.is_trainable() {
                return;
            }
            if moments.len() <= idx {
                moments.push((vec![0.0; p.numel()], vec![0.0; p.numel()]));
            }
            let (m, v) = &mut moments[idx];
            idx += 1;
            let (value, grad) = p.value_and_grad_mut();
            let grad = grad.expect("trainable parameter has a gradient");
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamKind;
    use crate::tensor::Tensor;

    struct Pair {
        a: Param,
        b: Param,
    }

    impl Parameterized for Pair {
        fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
            f(&self.a);
            f(&self.b);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.a);
            f(&mut self.b);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate_and_skips_frozen() {
        let mut pair = Pair {
            a: Param::trainable("a", Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap()),
            b: Param::new("b", ParamKind::Frozen, Tensor::from_vec(&[1], vec![3.0]).unwrap()),
        };
        pair.a.grad_mut().unwrap().data_mut().copy_from_slice(&[0.5, -2.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(&mut pair);
        // With bias correction the first step is lr * sign(g).
        assert!((pair.a.value.data()[0] - 0.9).abs() < 1e-6);
        assert!((pair.a.value.data()[1] - 1.1).abs() < 1e-6);
        assert_eq!(pair.b.value.data(), &[3.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut pair = Pair {
            a: Param::trainable("a", Tensor::from_vec(&[1], vec![5.0]).unwrap()),
            b: Param::buffer("b", Tensor::zeros(&[1])),
        };
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..500 {
            let x = pair.a.value.data()[0];
            pair.zero_grad();
            pair.a.grad_mut().unwrap().data_mut()[0] = 2.0 * (x - 2.0);
            adam.step(&mut pair);
        }
        assert!((pair.a.value.data()[0] - 2.0).abs() < 1e-2);
    }
}
