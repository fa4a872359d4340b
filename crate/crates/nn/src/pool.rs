use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Mean over every axis after the channel axis: `[B, C, ...] -> [B, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    if x.ndim() < 3 {
        return Err(NnError::Shape {
            op: "global_avg_pool",
            expected: vec![0, 0, 0],
            got: x.shape().to_vec(),
        });
    }
    let (b, c) = (x.dim(0), x.dim(1));
    let spatial = x.len() / (b * c).max(1);
    let data = x
        .data()
        .chunks(spatial)
        .map(|s| (s.iter().map(|&v| v as f64).sum::<f64>() / spatial as f64) as f32)
        .collect();
    Tensor::from_vec(&[b, c], data)
}

/// Spreads `[B, C]` gradients uniformly back over `input_shape`.
pub fn global_avg_pool_backward(grad: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    grad.expect_shape("global_avg_pool_backward", &input_shape[..2])?;
    let spatial: usize = input_shape[2..].iter().product();
    let mut out = Tensor::zeros(input_shape);
    for (dst, &g) in out.data_mut().chunks_mut(spatial).zip(grad.data()) {
        dst.fill(g / spatial as f32);
    }
    Ok(out)
}

/// Non-overlapping `k x k` max pooling over the last two axes of
/// `[B, C, T, H, W]`; trailing rows/columns that do not fill a window are
/// dropped. Inference only.
pub fn max_pool2d(x: &Tensor, k: usize) -> Result<Tensor> {
    x.expect_shape("max_pool2d", &[0, 0, 0, 0, 0])?;
    if k == 0 || x.dim(3) < k || x.dim(4) < k {
        return Err(NnError::Config(format!(
            "max_pool2d window {k} does not fit {:?}",
            x.shape()
        )));
    }
    let (h, w) = (x.dim(3), x.dim(4));
    let (ho, wo) = (h / k, w / k);
    let planes = x.dim(0) * x.dim(1) * x.dim(2);
    let mut out = Tensor::zeros(&[x.dim(0), x.dim(1), x.dim(2), ho, wo]);
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out.data_mut()[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                let mut m = f32::NEG_INFINITY;
                for di in 0..k {
                    let row = &src[(i * k + di) * w + j * k..(i * k + di) * w + j * k + k];
                    for &v in row {
                        m = m.max(v);
                    }
                }
                dst[i * wo + j] = m;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_pool_round_trip_shapes() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 3.0, 5.0, 9.0]).unwrap();
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 7.0]);
        let g = global_avg_pool_backward(&y, &[1, 2, 2]).unwrap();
        assert_eq!(g.data(), &[1.0, 1.0, 3.5, 3.5]);
    }

    #[test]
    fn max_pool_picks_window_maxima() {
        let x = Tensor::from_vec(&[1, 1, 1, 2, 4], vec![1.0, 5.0, -1.0, 0.0, 2.0, 3.0, 7.0, -2.0]).unwrap();
        let y = max_pool2d(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 2]);
        assert_eq!(y.data(), &[5.0, 7.0]);
    }
}
