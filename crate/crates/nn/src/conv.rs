//! 3D convolution via chunked im2col + GEMM. A 2D convolution is the special
//! case `T = 1`, kernel depth 1.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::gemm::{sgemm, MatRef};
use crate::init;
use crate::param::{Param, Parameterized};
use crate::tensor::Tensor;

/// Target size of one im2col chunk, in floats.
const COL_CHUNK_FLOATS: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    /// (depth, height, width)
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn cubic(in_channels: usize, out_channels: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: [k; 3],
            stride: [stride; 3],
            padding: [pad; 3],
        }
    }

    /// 2D convolution expressed as a depth-1 3D convolution.
    pub fn planar(in_channels: usize, out_channels: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: [1, k, k],
            stride: [1, stride, stride],
            padding: [0, pad, pad],
        }
    }

    /// Rows of the im2col matrix: `cin * kt * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] {
                return Err(NnError::Config(format!(
                    "input extent {} (axis {a}) smaller than kernel {}",
                    input[a], self.kernel[a]
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(NnError::Config("convolution needs non-zero channels".into()));
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(NnError::Config("kernel and stride must be positive".into()));
        }
        Ok(())
    }
}

/// Convolution over `[B, C, T, H, W]` inputs.
#[derive(Clone, Debug)]
pub struct Conv3d {
    geom: ConvGeometry,
    /// `[cout, cin, kt, kh, kw]`
    pub weight: Param,
    pub bias: Option<Param>,
    cached_input: Option<Tensor>,
}

impl Conv3d {
    /// Kaiming-normal (fan-out, ReLU gain) initialization, zero bias.
    pub fn new<R: Rng + ?Sized>(geom: ConvGeometry, with_bias: bool, rng: &mut R) -> Result<Self> {
        geom.validate()?;
        let shape = [
            geom.out_channels,
            geom.in_channels,
            geom.kernel[0],
            geom.kernel[1],
            geom.kernel[2],
        ];
        let fan_out = geom.out_channels * geom.kernel.iter().product::<usize>();
        let std = (2.0 / fan_out as f64).sqrt();
        let weight = Param::trainable("weight", init::normal(&shape, std, rng));
        let bias = with_bias.then(|| Param::trainable("bias", Tensor::zeros(&[geom.out_channels])));
        Ok(Self {
            geom,
            weight,
            bias,
            cached_input: None,
        })
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geom
    }

    pub fn freeze(&mut self) {
        self.weight.freeze();
        if let Some(b) = &mut self.bias {
            b.freeze();
        }
    }

    fn input_dims(&self, x: &Tensor) -> Result<(usize, [usize; 3])> {
        x.expect_shape("Conv3d", &[0, self.geom.in_channels, 0, 0, 0])?;
        Ok((x.dim(0), [x.dim(2), x.dim(3), x.dim(4)]))
    }

    /// Output-time planes per im2col chunk.
    fn planes_per_chunk(&self, plane: usize) -> usize {
        (COL_CHUNK_FLOATS / (self.geom.patch_len() * plane).max(1)).max(1)
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (batch, in_dims) = self.input_dims(x)?;
        let out_dims = self.geom.output_dims(in_dims)?;
        let cout = self.geom.out_channels;
        let k = self.geom.patch_len();
        let plane = out_dims[1] * out_dims[2];
        let l = out_dims[0] * plane;
        let in_sample = self.geom.in_channels * in_dims.iter().product::<usize>();

        let mut y = Tensor::zeros(&[batch, cout, out_dims[0], out_dims[1], out_dims[2]]);
        let step = self.planes_per_chunk(plane);
        let mut col = Vec::new();
        for b in 0..batch {
            let xs = &x.data()[b * in_sample..(b + 1) * in_sample];
            let ys = &mut y.data_mut()[b * cout * l..(b + 1) * cout * l];
            let mut t0 = 0;
            while t0 < out_dims[0] {
                let t1 = (t0 + step).min(out_dims[0]);
                let lc = (t1 - t0) * plane;
                col.resize(k * lc, 0.0);
                im2col(&self.geom, xs, in_dims, out_dims, t0, t1, &mut col);
                sgemm(
                    cout,
                    k,
                    lc,
                    1.0,
                    MatRef::row_major(self.weight.value.data(), k),
                    MatRef::row_major(&col, lc),
                    0.0,
                    &mut ys[t0 * plane..],
                    l,
                );
                t0 = t1;
            }
            if let Some(bias) = &self.bias {
                for (c, row) in ys.chunks_mut(l).enumerate() {
                    let bv = bias.value.data()[c];
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        self.cached_input = train.then(|| x.clone());
        Ok(y)
    }

    /// Accumulates weight/bias gradients and, if requested, returns the
    /// gradient with respect to the cached input.
    pub fn backward(&mut self, grad_out: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let x = self.cached_input.take().ok_or(NnError::NoCache { op: "Conv3d" })?;
        let (batch, in_dims) = self.input_dims(&x)?;
        let out_dims = self.geom.output_dims(in_dims)?;
        let cout = self.geom.out_channels;
        grad_out.expect_shape(
            "Conv3d::backward",
            &[batch, cout, out_dims[0], out_dims[1], out_dims[2]],
        )?;
        let k = self.geom.patch_len();
        let plane = out_dims[1] * out_dims[2];
        let l = out_dims[0] * plane;
        let in_sample = self.geom.in_channels * in_dims.iter().product::<usize>();
        let weight_trainable = self.weight.is_trainable();

        if let Some(bias) = &mut self.bias {
            if let Some(g) = bias.grad_mut() {
                let g = g.data_mut();
                for b in 0..batch {
                    let gs = &grad_out.data()[b * cout * l..(b + 1) * cout * l];
                    for (c, row) in gs.chunks(l).enumerate() {
                        g[c] += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
                    }
                }
            }
        }

        let mut grad_in = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let step = self.planes_per_chunk(plane);
        let mut col = Vec::new();
        let mut dcol = Vec::new();
        for b in 0..batch {
            let xs = &x.data()[b * in_sample..(b + 1) * in_sample];
            let gs = &grad_out.data()[b * cout * l..(b + 1) * cout * l];
            let mut t0 = 0;
            while t0 < out_dims[0] {
                let t1 = (t0 + step).min(out_dims[0]);
                let lc = (t1 - t0) * plane;
                let g_chunk = &gs[t0 * plane..];
                if weight_trainable {
                    col.resize(k * lc, 0.0);
                    im2col(&self.geom, xs, in_dims, out_dims, t0, t1, &mut col);
                    let dw = self.weight.grad_mut().expect("trainable weight has grad");
                    // dW (cout x k) += dY (cout x lc) * col^T (lc x k)
                    sgemm(
                        cout,
                        lc,
                        k,
                        1.0,
                        MatRef {
                            data: g_chunk,
                            rs: l,
                            cs: 1,
                        },
                        MatRef::transposed(&col, lc),
                        1.0,
                        dw.data_mut(),
                        k,
                    );
                }
                if let Some(gi) = &mut grad_in {
                    dcol.resize(k * lc, 0.0);
                    // dcol (k x lc) = W^T (k x cout) * dY (cout x lc)
                    sgemm(
                        k,
                        cout,
                        lc,
                        1.0,
                        MatRef::transposed(self.weight.value.data(), k),
                        MatRef {
                            data: g_chunk,
                            rs: l,
                            cs: 1,
                        },
                        0.0,
                        &mut dcol,
                        lc,
                    );
                    let gxs = &mut gi.data_mut()[b * in_sample..(b + 1) * in_sample];
                    col2im(&self.geom, &dcol, in_dims, out_dims, t0, t1, gxs);
                }
                t0 = t1;
            }
        }
        Ok(grad_in)
    }
}

impl Parameterized for Conv3d {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Valid output range `[lo, hi)` along one axis for kernel offset `d`, i.e.
/// the outputs whose input coordinate `o * s + d - p` lies inside `[0, n)`.
fn valid_range(n: usize, out: usize, s: usize, d: usize, p: usize) -> (usize, usize) {
    let lo = if d >= p { 0 } else { (p - d).div_ceil(s) };
    let hi = if n + p <= d {
        0
    } else {
        ((n + p - d - 1) / s + 1).min(out)
    };
    (lo.min(hi), hi)
}

/// Fills `col` (`patch_len x ((t1 - t0) * ho * wo)`, row-major) for output
/// time planes `t0..t1` of one sample.
fn im2col(
    g: &ConvGeometry,
    x: &[f32],
    in_dims: [usize; 3],
    out_dims: [usize; 3],
    t0: usize,
    t1: usize,
    col: &mut [f32],
) {
    let [ti_n, hi_n, wi_n] = in_dims;
    let [_, ho_n, wo_n] = out_dims;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let lc = (t1 - t0) * ho_n * wo_n;
    let mut r = 0;
    for ci in 0..g.in_channels {
        let xc = &x[ci * ti_n * hi_n * wi_n..(ci + 1) * ti_n * hi_n * wi_n];
        for dt in 0..kt {
            let (tlo, thi) = valid_range(ti_n, out_dims[0], st, dt, pt);
            for dh in 0..kh {
                let (hlo, hhi) = valid_range(hi_n, ho_n, sh, dh, ph);
                for dw in 0..kw {
                    let (wlo, whi) = valid_range(wi_n, wo_n, sw, dw, pw);
                    let row = &mut col[r * lc..(r + 1) * lc];
                    r += 1;
                    let mut j = 0;
                    for to in t0..t1 {
                        if to < tlo || to >= thi {
                            row[j..j + ho_n * wo_n].fill(0.0);
                            j += ho_n * wo_n;
                            continue;
                        }
                        let ti = to * st + dt - pt;
                        let xt = &xc[ti * hi_n * wi_n..(ti + 1) * hi_n * wi_n];
                        for ho in 0..ho_n {
                            let dst = &mut row[j..j + wo_n];
                            j += wo_n;
                            if ho < hlo || ho >= hhi {
                                dst.fill(0.0);
                                continue;
                            }
                            let hi = ho * sh + dh - ph;
                            let xr = &xt[hi * wi_n..(hi + 1) * wi_n];
                            dst[..wlo].fill(0.0);
                            dst[whi..].fill(0.0);
                            if sw == 1 {
                                let w0 = wlo + dw - pw;
                                dst[wlo..whi].copy_from_slice(&xr[w0..w0 + (whi - wlo)]);
                            } else {
                                for wo in wlo..whi {
                                    dst[wo] = xr[wo * sw + dw - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `dcol` back into the input gradient; inverse of [`im2col`].
fn col2im(
    g: &ConvGeometry,
    dcol: &[f32],
    in_dims: [usize; 3],
    out_dims: [usize; 3],
    t0: usize,
    t1: usize,
    gx: &mut [f32],
) {
    let [ti_n, hi_n, wi_n] = in_dims;
    let [_, ho_n, wo_n] = out_dims;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let lc = (t1 - t0) * ho_n * wo_n;
    let mut r = 0;
    for ci in 0..g.in_channels {
        let gc = &mut gx[ci * ti_n * hi_n * wi_n..(ci + 1) * ti_n * hi_n * wi_n];
        for dt in 0..kt {
            let (tlo, thi) = valid_range(ti_n, out_dims[0], st, dt, pt);
            for dh in 0..kh {
                let (hlo, hhi) = valid_range(hi_n, ho_n, sh, dh, ph);
                for dw in 0..kw {
                    let (wlo, whi) = valid_range(wi_n, wo_n, sw, dw, pw);
                    let row = &dcol[r * lc..(r + 1) * lc];
                    r += 1;
                    for to in t0.max(tlo)..t1.min(thi) {
                        let ti = to * st + dt - pt;
                        let base = (to - t0) * ho_n * wo_n;
                        let gt = &mut gc[ti * hi_n * wi_n..(ti + 1) * hi_n * wi_n];
                        for ho in hlo..hhi {
                            let hi = ho * sh + dh - ph;
                            let gr = &mut gt[hi * wi_n..(hi + 1) * wi_n];
                            let src = &row[base + ho * wo_n..base + (ho + 1) * wo_n];
                            for wo in wlo..whi {
                                gr[wo * sw + dw - pw] += src[wo];
                            }
                        }
                    }
                }
            }
        }
    }
}
