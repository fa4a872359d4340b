use rand::Rng;

use crate::act::sigmoid;
use crate::error::{NnError, Result};
use crate::gemm::{sgemm, MatRef};
use crate::init;
use crate::param::{Param, Parameterized};
use crate::tensor::Tensor;

/// Single-layer GRU returning the final hidden state.
///
/// Uses the reset-after formulation with separate input and recurrent biases
/// (gate order r, z, n):
///
/// ```text
/// r = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    input_size: usize,
    hidden: usize,
    /// `[3H, I]`
    pub weight_ih: Param,
    /// `[3H, H]`
    pub weight_hh: Param,
    pub bias_ih: Param,
    pub bias_hh: Param,
    cache: Option<GruCache>,
}

#[derive(Clone, Debug)]
struct GruCache {
    x: Tensor,
    /// Per step `[B, H]` hidden state entering the step.
    h_prev: Vec<Vec<f32>>,
    r: Vec<Vec<f32>>,
    z: Vec<Vec<f32>>,
    n: Vec<Vec<f32>>,
    /// `W_hn h + b_hn` per step.
    hn: Vec<Vec<f32>>,
}

impl Gru {
    /// Glorot-uniform input weights, orthogonal recurrent weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_size,
            hidden,
            weight_ih: Param::trainable("weight_ih", init::glorot_uniform(3 * hidden, input_size, rng)),
            weight_hh: Param::trainable("weight_hh", init::orthogonal(3 * hidden, hidden, rng)),
            bias_ih: Param::trainable("bias_ih", Tensor::zeros(&[3 * hidden])),
            bias_hh: Param::trainable("bias_hh", Tensor::zeros(&[3 * hidden])),
            cache: None,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    /// `[B, T, I] -> [B, H]`
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        x.expect_shape("Gru", &[0, 0, self.input_size])?;
        let (b_n, t_n) = (x.dim(0), x.dim(1));
        if t_n == 0 {
            return Err(NnError::Config("GRU needs at least one timestep".into()));
        }
        let h3 = 3 * self.hidden;
        let hsz = self.hidden;

        let mut xg = vec![0f32; b_n * t_n * h3];
        for row in xg.chunks_mut(h3) {
            row.copy_from_slice(self.bias_ih.value.data());
        }
        sgemm(
            b_n * t_n,
            self.input_size,
            h3,
            1.0,
            MatRef::row_major(x.data(), self.input_size),
            MatRef::transposed(self.weight_ih.value.data(), self.input_size),
            1.0,
            &mut xg,
            h3,
        );

        let mut h = vec![0f32; b_n * hsz];
        let mut cache = GruCache {
            x: Tensor::zeros(&[0]),
            h_prev: Vec::new(),
            r: Vec::new(),
            z: Vec::new(),
            n: Vec::new(),
            hn: Vec::new(),
        };
        let mut hg = vec![0f32; b_n * h3];
        for t in 0..t_n {
            for row in hg.chunks_mut(h3) {
                row.copy_from_slice(self.bias_hh.value.data());
            }
            sgemm(
                b_n,
                hsz,
                h3,
                1.0,
                MatRef::row_major(&h, hsz),
                MatRef::transposed(self.weight_hh.value.data(), hsz),
                1.0,
                &mut hg,
                h3,
            );
            let mut r = vec![0f32; b_n * hsz];
            let mut z = vec![0f32; b_n * hsz];
            let mut n = vec![0f32; b_n * hsz];
            let mut hn = vec![0f32; b_n * hsz];
            let mut h_next = vec![0f32; b_n * hsz];
            for b in 0..b_n {
                let xrow = &xg[(b * t_n + t) * h3..(b * t_n + t + 1) * h3];
                let hrow = &hg[b * h3..(b + 1) * h3];
                for j in 0..hsz {
                    let i = b * hsz + j;
                    let rv = sigmoid(xrow[j] + hrow[j]);
                    let zv = sigmoid(xrow[hsz + j] + hrow[hsz + j]);
                    let hnv = hrow[2 * hsz + j];
                    let nv = (xrow[2 * hsz + j] + rv * hnv).tanh();
                    r[i] = rv;
                    z[i] = zv;
                    n[i] = nv;
                    hn[i] = hnv;
                    h_next[i] = (1.0 - zv) * nv + zv * h[i];
                }
            }
            if train {
                cache.h_prev.push(std::mem::replace(&mut h, h_next));
                cache.r.push(r);
                cache.z.push(z);
                cache.n.push(n);
                cache.hn.push(hn);
            } else {
                h = h_next;
            }
        }
        if train {
            cache.x = x.clone();
            self.cache = Some(cache);
        } else {
            self.cache = None;
        }
        Tensor::from_vec(&[b_n, hsz], h)
    }

    /// Backpropagates a gradient on the final hidden state through time.
    /// Returns the gradient with respect to the input sequence when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, grad_h: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let cache = self.cache.take().ok_or(NnError::NoCache { op: "Gru" })?;
        let (b_n, t_n) = (cache.x.dim(0), cache.x.dim(1));
        grad_h.expect_shape("Gru::backward", &[b_n, self.hidden])?;
        let hsz = self.hidden;
        let h3 = 3 * hsz;
        let mut dxg = vec![0f32; b_n * t_n * h3];
        let mut dh = grad_h.data().to_vec();
        let mut dhg = vec![0f32; b_n * h3];
        for t in (0..t_n).rev() {
            let (hp, r, z, n, hn) = (&cache.h_prev[t], &cache.r[t], &cache.z[t], &cache.n[t], &cache.hn[t]);
            let mut dh_prev = vec![0f32; b_n * hsz];
            for b in 0..b_n {
                let xrow = &mut dxg[(b * t_n + t) * h3..(b * t_n + t + 1) * h3];
                let hrow = &mut dhg[b * h3..(b + 1) * h3];
                for j in 0..hsz {
                    let i = b * hsz + j;
                    let g = dh[i];
                    let dn = g * (1.0 - z[i]);
                    let dz = g * (hp[i] - n[i]);
                    dh_prev[i] = g * z[i];
                    let dan = dn * (1.0 - n[i] * n[i]);
                    let dar = dan * hn[i] * r[i] * (1.0 - r[i]);
                    let daz = dz * z[i] * (1.0 - z[i]);
                    xrow[j] = dar;
                    xrow[hsz + j] = daz;
                    xrow[2 * hsz + j] = dan;
                    hrow[j] = dar;
                    hrow[hsz + j] = daz;
                    hrow[2 * hsz + j] = dan * r[i];
                }
            }
            if let Some(gw) = self.weight_hh.grad_mut() {
                // dW_hh (3H x H) += dHG^T (3H x B) * h_prev (B x H)
                sgemm(
                    h3,
                    b_n,
                    hsz,
                    1.0,
                    MatRef::transposed(&dhg, h3),
                    MatRef::row_major(hp, hsz),
                    1.0,
                    gw.data_mut(),
                    hsz,
                );
            }
            if let Some(gb) = self.bias_hh.grad_mut() {
                for row in dhg.chunks(h3) {
                    for (a, &v) in gb.data_mut().iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
            // dh_prev += dHG (B x 3H) * W_hh (3H x H)
            sgemm(
                b_n,
                h3,
                hsz,
                1.0,
                MatRef::row_major(&dhg, h3),
                MatRef::row_major(self.weight_hh.value.data(), hsz),
                1.0,
                &mut dh_prev,
                hsz,
            );
            dh = dh_prev;
        }
        if let Some(gw) = self.weight_ih.grad_mut() {
            sgemm(
                h3,
                b_n * t_n,
                self.input_size,
                1.0,
                MatRef::transposed(&dxg, h3),
                MatRef::row_major(cache.x.data(), self.input_size),
                1.0,
                gw.data_mut(),
                self.input_size,
            );
        }
        if let Some(gb) = self.bias_ih.grad_mut() {
            for row in dxg.chunks(h3) {
                for (a, &v) in gb.data_mut().iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(cache.x.shape());
        sgemm(
            b_n * t_n,
            h3,
            self.input_size,
            1.0,
            MatRef::row_major(&dxg, h3),
            MatRef::row_major(self.weight_ih.value.data(), self.input_size),
            0.0,
            dx.data_mut(),
            self.input_size,
        );
        Ok(Some(dx))
    }
}

impl Parameterized for Gru {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight_ih);
        f(&self.weight_hh);
        f(&self.bias_ih);
        f(&self.bias_hh);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight_ih);
        f(&mut self.weight_hh);
        f(&mut self.bias_ih);
        f(&mut self.bias_hh);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{test_rng, uniform};

    /// Scalar GRU step written out independently, in f64.
    fn reference_final_state(gru: &Gru, x: &Tensor) -> Vec<f64> {
        let (b_n, t_n, i_n, h) = (x.dim(0), x.dim(1), x.dim(2), gru.hidden);
        let w_ih = gru.weight_ih.value.data();
        let w_hh = gru.weight_hh.value.data();
        let b_ih = gru.bias_ih.value.data();
        let b_hh = gru.bias_hh.value.data();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut out = Vec::new();
        for b in 0..b_n {
            let mut state = vec![0f64; h];
            for t in 0..t_n {
                let xt = &x.data()[(b * t_n + t) * i_n..(b * t_n + t + 1) * i_n];
                let lin = |row: usize, w: &[f32], v: &[f64], stride: usize| -> f64 {
                    (0..stride).map(|k| w[row * stride + k] as f64 * v[k]).sum()
                };
                let xt64: Vec<f64> = xt.iter().map(|&v| v as f64).collect();
                let mut next = vec![0f64; h];
                for j in 0..h {
                    let r = sig(lin(j, w_ih, &xt64, i_n) + b_ih[j] as f64 + lin(j, w_hh, &state, h) + b_hh[j] as f64);
                    let z = sig(lin(h + j, w_ih, &xt64, i_n)
                        + b_ih[h + j] as f64
                        + lin(h + j, w_hh, &state, h)
                        + b_hh[h + j] as f64);
                    let n = (lin(2 * h + j, w_ih, &xt64, i_n)
                        + b_ih[2 * h + j] as f64
                        + r * (lin(2 * h + j, w_hh, &state, h) + b_hh[2 * h + j] as f64))
                        .tanh();
                    next[j] = (1.0 - z) * n + z * state[j];
                }
                state = next;
            }
            out.extend(state);
        }
        out
    }

    fn randomized(rng_seed: u64) -> Gru {
        let mut rng = test_rng(rng_seed);
        let mut gru = Gru::new(4, 3, &mut rng);
        gru.bias_ih.value = uniform(&[9], -0.5, 0.5, &mut rng);
        gru.bias_hh.value = uniform(&[9], -0.5, 0.5, &mut rng);
        gru
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let mut gru = randomized(1);
        let x = uniform(&[2, 5, 4], -1.0, 1.0, &mut test_rng(2));
        let y = gru.forward(&x, false).unwrap();
        let want = reference_final_state(&gru, &x);
        for (a, b) in y.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut gru = randomized(3);
        let x = uniform(&[2, 4, 4], -1.0, 1.0, &mut test_rng(4));
        let r = uniform(&[2, 3], -1.0, 1.0, &mut test_rng(5));
        gru.forward(&x, true).unwrap();
        let dx = gru.backward(&r, true).unwrap().unwrap();
        let loss = |gru: &Gru, x: &Tensor| -> f64 {
            reference_final_state(gru, x)
                .iter()
                .zip(r.data())
                .map(|(a, &b)| a * b as f64)
                .sum()
        };
        let eps = 1e-3f32;
        let mut g2 = gru.clone();
        let mut check = |name: &str, analytic: Vec<f32>, get: &dyn Fn(&mut Gru) -> &mut Tensor| {
            for i in 0..analytic.len() {
                let orig = get(&mut g2).data()[i];
                get(&mut g2).data_mut()[i] = orig + eps;
                let lp = loss(&g2, &x);
                get(&mut g2).data_mut()[i] = orig - eps;
                let lm = loss(&g2, &x);
                get(&mut g2).data_mut()[i] = orig;
                let fd = (lp - lm) / (2.0 * eps as f64);
                assert!(
                    (fd - analytic[i] as f64).abs() < 1e-3,
                    "{name}[{i}] fd={fd} an={}",
                    analytic[i]
                );
            }
        };
        check("w_ih", gru.weight_ih.grad().unwrap().data().to_vec(), &|g| {
            &mut g.weight_ih.value
        });
        check("w_hh", gru.weight_hh.grad().unwrap().data().to_vec(), &|g| {
            &mut g.weight_hh.value
        });
        check("b_ih", gru.bias_ih.grad().unwrap().data().to_vec(), &|g| {
            &mut g.bias_ih.value
        });
        check("b_hh", gru.bias_hh.grad().unwrap().data().to_vec(), &|g| {
            &mut g.bias_hh.value
        });

        let mut xp = x.clone();
        for i in 0..x.len() {
            xp.data_mut()[i] = x.data()[i] + eps;
            let lp = loss(&gru, &xp);
            xp.data_mut()[i] = x.data()[i] - eps;
            let lm = loss(&gru, &xp);
            xp.data_mut()[i] = x.data()[i];
            let fd = (lp - lm) / (2.0 * eps as f64);
            assert!((fd - dx.data()[i] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn parameter_count_uses_double_bias() {
        let gru = Gru::new(10, 5, &mut test_rng(0));
        let mut n = 0;
        gru.visit_params(&mut |p| n += p.numel());
        assert_eq!(n, 3 * (5 * 10 + 5 * 5 + 2 * 5));
    }
}
