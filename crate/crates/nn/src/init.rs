//! Parameter initializers. All take an explicit RNG so that a seeded
//! generator fully determines a network's initial weights.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::Tensor;

pub fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng) as f32).collect();
    Tensor::from_vec(shape, data).expect("sized to shape")
}

pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let dist = Uniform::new(lo, hi).expect("lo < hi");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng) as f32).collect();
    Tensor::from_vec(shape, data).expect("sized to shape")
}

/// Glorot/Xavier uniform for a `[fan_out, fan_in]` matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(&[fan_out, fan_in], -limit, limit, rng)
}

/// Row-orthonormal `[rows, cols]` matrix (rows <= cols gives orthonormal
/// rows; otherwise orthonormal columns), via modified Gram-Schmidt on a
/// Gaussian draw.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    // n vectors of length m
    let mut v: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| dist.sample(rng)).collect()).collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = v.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= dot * b;
            }
        }
        let norm = v[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        v[i].iter_mut().for_each(|a| *a /= norm);
    }
    let mut out = Tensor::zeros(&[rows, cols]);
    let d = out.data_mut();
    for (i, vec) in v.iter().enumerate() {
        for (j, &val) in vec.iter().enumerate() {
            if rows <= cols {
                d[i * cols + j] = val as f32;
            } else {
                d[j * cols + i] = val as f32;
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = test_rng(3);
        let q = orthogonal(6, 6, &mut rng);
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = (0..6)
                    .map(|k| q.data()[i * 6 + k] as f64 * q.data()[j * 6 + k] as f64)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = normal(&[10, 10], 0.1, &mut test_rng(5));
        let b = normal(&[10, 10], 0.1, &mut test_rng(5));
        assert_eq!(a, b);
        let lim = (6.0f64 / 30.0).sqrt() as f32;
        let g = glorot_uniform(10, 20, &mut test_rng(6));
        assert!(g.data().iter().all(|v| v.abs() <= lim));
    }
}
