//! Neural building blocks with explicit forward/backward passes.
//!
//! Everything operates on `(batch, channels, length)` tensors in f64 and is
//! strictly sequential, so a fixed parameter state and input produce
//! bit-identical results on every run. Convolutions use "same" padding: an
//! input of length `L` maps to `L / stride` (conv) or `L * stride`
//! (transposed conv), padding split TensorFlow-style with the extra sample
//! on the right.
//!
//! The transposed convolution is implemented as the input-gradient of a
//! virtual forward convolution with kernel shape `(in_ch, out_ch, k)`; its
//! own backward pass therefore reuses the forward convolution kernels.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) const VBN_EPS: f64 = 1e-5;

pub(crate) type Batch = Array3<f64>;

/// Total left/right padding so that `out_len = in_len / stride`.
pub(crate) fn same_padding(in_len: usize, k: usize, stride: usize) -> (usize, usize) {
    debug_assert!(in_len % stride == 0);
    let out_len = in_len / stride;
    let needed = (out_len - 1) * stride + k;
    let total = needed.saturating_sub(in_len);
    (total / 2, total - total / 2)
}

/// Truncated normal init: zero mean, `std`, resampled beyond two sigma.
pub(crate) fn trunc_normal<R: Rng>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect()
}

fn im2col(
    x: &ArrayView2<'_, f64>,
    k: usize,
    stride: usize,
    pad_left: usize,
    out_len: usize,
    cols: &mut Array2<f64>,
) {
    let (ci, in_len) = x.dim();
    debug_assert_eq!(cols.dim(), (ci * k, out_len));
    cols.fill(0.0);
    for i in 0..ci {
        let row = x.row(i);
        for kk in 0..k {
            let mut dst = cols.row_mut(i * k + kk);
            for t in 0..out_len {
                let src = (t * stride + kk) as isize - pad_left as isize;
                if src >= 0 && (src as usize) < in_len {
                    dst[t] = row[src as usize];
                }
            }
        }
    }
}

fn col2im(
    cols: &ArrayView2<'_, f64>,
    k: usize,
    stride: usize,
    pad_left: usize,
    x: &mut ArrayViewMut2<'_, f64>,
) {
    let (ci, in_len) = x.dim();
    let out_len = cols.dim().1;
    debug_assert_eq!(cols.dim().0, ci * k);
    for i in 0..ci {
        for kk in 0..k {
            let src = cols.row(i * k + kk);
            for t in 0..out_len {
                let dst = (t * stride + kk) as isize - pad_left as isize;
                if dst >= 0 && (dst as usize) < in_len {
                    x[(i, dst as usize)] += src[t];
                }
            }
        }
    }
}

/// Strided 1-D convolution, kernel `(out_ch, in_ch, k)`.
#[derive(Debug, Clone)]
pub(crate) struct Conv1d {
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
}

impl Conv1d {
    pub fn init<R: Rng>(out_ch: usize, in_ch: usize, k: usize, stride: usize, rng: &mut R) -> Self {
        let w = Array3::from_shape_vec((out_ch, in_ch, k), trunc_normal(out_ch * in_ch * k, 0.02, rng))
            .expect("conv kernel shape");
        Self {
            w,
            b: Array1::zeros(out_ch),
            stride,
        }
    }

    pub fn out_ch(&self) -> usize {
        self.w.dim().0
    }

    pub fn forward(&self, x: &Batch) -> Batch {
        let (batch, ci, in_len) = x.dim();
        let (co, wci, k) = self.w.dim();
        debug_assert_eq!(ci, wci);
        let (pad_left, _) = same_padding(in_len, k, self.stride);
        let out_len = in_len / self.stride;
        let w2 = self.w.view().into_shape((co, ci * k)).expect("kernel view");
        let mut cols = Array2::zeros((ci * k, out_len));
        let mut y = Array3::zeros((batch, co, out_len));
        for bi in 0..batch {
            im2col(&x.index_axis(Axis(0), bi), k, self.stride, pad_left, out_len, &mut cols);
            let yb = w2.dot(&cols);
            let mut dst = y.index_axis_mut(Axis(0), bi);
            dst.assign(&yb);
            for o in 0..co {
                let bias = self.b[o];
                dst.row_mut(o).mapv_inplace(|v| v + bias);
            }
        }
        y
    }

    /// Returns `(grad_input, grad_w, grad_b)`.
    pub fn backward(&self, x: &Batch, gy: &Batch) -> (Batch, Array3<f64>, Array1<f64>) {
        let (batch, ci, in_len) = x.dim();
        let (co, _, k) = self.w.dim();
        let out_len = in_len / self.stride;
        let (pad_left, _) = same_padding(in_len, k, self.stride);
        let w2 = self.w.view().into_shape((co, ci * k)).expect("kernel view");
        let mut cols = Array2::zeros((ci * k, out_len));
        let mut gx = Array3::zeros((batch, ci, in_len));
        let mut gw2 = Array2::<f64>::zeros((co, ci * k));
        let mut gb = Array1::zeros(co);
        for bi in 0..batch {
            let gyb = gy.index_axis(Axis(0), bi);
            // grad_input: scatter wᵀ·gy back through the column map
            let gcols = w2.t().dot(&gyb);
            col2im(
                &gcols.view(),
                k,
                self.stride,
                pad_left,
                &mut gx.index_axis_mut(Axis(0), bi),
            );
            // grad_w accumulates gy·colsᵀ
            im2col(&x.index_axis(Axis(0), bi), k, self.stride, pad_left, out_len, &mut cols);
            gw2 = gw2 + gyb.dot(&cols.t());
            for o in 0..co {
                gb[o] += gyb.row(o).sum();
            }
        }
        let gw = gw2.into_shape((co, ci, k)).expect("grad kernel shape");
        (gx, gw, gb)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Fractional-stride (transposed) 1-D convolution, kernel `(in_ch, out_ch, k)`.
#[derive(Debug, Clone)]
pub(crate) struct ConvT1d {
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
}

impl ConvT1d {
    pub fn init<R: Rng>(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut R) -> Self {
        let w = Array3::from_shape_vec((in_ch, out_ch, k), trunc_normal(in_ch * out_ch * k, 0.02, rng))
            .expect("tconv kernel shape");
        Self {
            w,
            b: Array1::zeros(out_ch),
            stride,
        }
    }

    pub fn out_ch(&self) -> usize {
        self.w.dim().1
    }

    pub fn forward(&self, x: &Batch) -> Batch {
        let (batch, ci, in_len) = x.dim();
        let (wci, co, k) = self.w.dim();
        debug_assert_eq!(ci, wci);
        let out_len = in_len * self.stride;
        let (pad_left, _) = same_padding(out_len, k, self.stride);
        let w2 = self.w.view().into_shape((ci, co * k)).expect("kernel view");
        let mut y = Array3::zeros((batch, co, out_len));
        for bi in 0..batch {
            let xb = x.index_axis(Axis(0), bi);
            let gcols = w2.t().dot(&xb); // (co*k, in_len)
            col2im(
                &gcols.view(),
                k,
                self.stride,
                pad_left,
                &mut y.index_axis_mut(Axis(0), bi),
            );
            let mut dst = y.index_axis_mut(Axis(0), bi);
            for o in 0..co {
                let bias = self.b[o];
                dst.row_mut(o).mapv_inplace(|v| v + bias);
            }
        }
        y
    }

    pub fn backward(&self, x: &Batch, gy: &Batch) -> (Batch, Array3<f64>, Array1<f64>) {
        let (batch, ci, in_len) = x.dim();
        let (_, co, k) = self.w.dim();
        let out_len = in_len * self.stride;
        let (pad_left, _) = same_padding(out_len, k, self.stride);
        let w2 = self.w.view().into_shape((ci, co * k)).expect("kernel view");
        let mut cols = Array2::zeros((co * k, in_len));
        let mut gx = Array3::zeros((batch, ci, in_len));
        let mut gw2 = Array2::<f64>::zeros((ci, co * k));
        let mut gb = Array1::zeros(co);
        for bi in 0..batch {
            let gyb = gy.index_axis(Axis(0), bi);
            im2col(&gyb, k, self.stride, pad_left, in_len, &mut cols);
            let gxb = w2.dot(&cols);
            gx.index_axis_mut(Axis(0), bi).assign(&gxb);
            gw2 = gw2 + x.index_axis(Axis(0), bi).dot(&cols.t());
            for o in 0..co {
                gb[o] += gyb.row(o).sum();
            }
        }
        let gw = gw2.into_shape((ci, co, k)).expect("grad kernel shape");
        (gx, gw, gb)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Parametric ReLU with a per-channel slope.
pub(crate) fn prelu_fwd(x: &Batch, alpha: &Array1<f64>) -> Batch {
    let mut y = x.clone();
    for (c, mut plane) in y.axis_iter_mut(Axis(1)).enumerate() {
        let a = alpha[c];
        plane.mapv_inplace(|v| if v >= 0.0 { v } else { a * v });
    }
    y
}

pub(crate) fn prelu_bwd(x: &Batch, alpha: &Array1<f64>, gy: &Batch) -> (Batch, Array1<f64>) {
    let mut gx = gy.clone();
    let mut galpha = Array1::zeros(alpha.len());
    for c in 0..alpha.len() {
        let a = alpha[c];
        let xs = x.index_axis(Axis(1), c);
        let mut gs = gx.index_axis_mut(Axis(1), c);
        let gys = gy.index_axis(Axis(1), c);
        let mut ga = 0.0;
        for ((g, &xv), &gyv) in gs.iter_mut().zip(xs.iter()).zip(gys.iter()) {
            if xv < 0.0 {
                *g = gyv * a;
                ga += gyv * xv;
            }
        }
        galpha[c] = ga;
    }
    (gx, galpha)
}

pub(crate) fn leaky_relu_fwd(x: &Batch, slope: f64) -> Batch {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub(crate) fn leaky_relu_bwd(x: &Batch, slope: f64, gy: &Batch) -> Batch {
    let mut gx = gy.clone();
    gx.zip_mut_with(x, |g, &xv| {
        if xv < 0.0 {
            *g *= slope;
        }
    });
    gx
}

pub(crate) fn tanh_fwd(x: &Batch) -> Batch {
    x.mapv(f64::tanh)
}

/// `y` is the forward output.
pub(crate) fn tanh_bwd(y: &Batch, gy: &Batch) -> Batch {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &yv| *g *= 1.0 - yv * yv);
    gx
}

/// Frozen per-channel reference statistics for virtual batch norm.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct VbnStats {
    pub mean: Array1<f64>,
    pub msq: Array1<f64>,
    pub ref_size: usize,
}

/// Pools per-channel mean and raw second moment over `(batch, length)`.
pub(crate) fn vbn_freeze(h: &Batch) -> VbnStats {
    let (batch, ch, len) = h.dim();
    let denom = (batch * len) as f64;
    let mut mean = Array1::zeros(ch);
    let mut msq = Array1::zeros(ch);
    for c in 0..ch {
        let plane = h.index_axis(Axis(1), c);
        let sum: f64 = plane.iter().sum();
        let sq: f64 = plane.iter().map(|v| v * v).sum();
        mean[c] = sum / denom;
        msq[c] = sq / denom;
    }
    VbnStats {
        mean,
        msq,
        ref_size: batch,
    }
}

pub(crate) struct VbnCache {
    pub xhat: Batch,
    pub inv_std: Array2<f64>, // (batch, ch)
    pub blend: f64,
}

/// Normalizes each example against a blend of its own per-channel
/// statistics and the frozen reference, weighted `1/(ref_size+1)` toward
/// the example. Scoring is therefore independent of minibatch composition.
pub(crate) fn vbn_fwd(
    h: &Batch,
    stats: &VbnStats,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Batch, VbnCache) {
    let (batch, ch, len) = h.dim();
    let a = 1.0 / (stats.ref_size as f64 + 1.0);
    let mut xhat = Array3::zeros((batch, ch, len));
    let mut inv_std = Array2::zeros((batch, ch));
    let mut y = Array3::zeros((batch, ch, len));
    for bi in 0..batch {
        for c in 0..ch {
            let row = h.index_axis(Axis(0), bi);
            let row = row.row(c);
            let m_x: f64 = row.iter().sum::<f64>() / len as f64;
            let s_x: f64 = row.iter().map(|v| v * v).sum::<f64>() / len as f64;
            let mu = a * m_x + (1.0 - a) * stats.mean[c];
            let e2 = a * s_x + (1.0 - a) * stats.msq[c];
            let var = (e2 - mu * mu).max(0.0);
            let r = 1.0 / (var + VBN_EPS).sqrt();
            inv_std[(bi, c)] = r;
            let (g, b) = (gamma[c], beta[c]);
            for t in 0..len {
                let xh = (row[t] - mu) * r;
                xhat[(bi, c, t)] = xh;
                y[(bi, c, t)] = g * xh + b;
            }
        }
    }
    (
        y,
        VbnCache {
            xhat,
            inv_std,
            blend: a,
        },
    )
}

pub(crate) fn vbn_bwd(
    cache: &VbnCache,
    gamma: &Array1<f64>,
    gy: &Batch,
) -> (Batch, Array1<f64>, Array1<f64>) {
    let (batch, ch, len) = gy.dim();
    let a = cache.blend;
    let mut gx = Array3::zeros((batch, ch, len));
    let mut ggamma = Array1::zeros(ch);
    let mut gbeta = Array1::zeros(ch);
    for bi in 0..batch {
        for c in 0..ch {
            let r = cache.inv_std[(bi, c)];
            let g = gamma[c];
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for t in 0..len {
                let gyv = gy[(bi, c, t)];
                let xh = cache.xhat[(bi, c, t)];
                ggamma[c] += gyv * xh;
                gbeta[c] += gyv;
                s1 += gyv * g;
                s2 += gyv * g * xh;
            }
            let scale = a / len as f64;
            for t in 0..len {
                let gxh = gy[(bi, c, t)] * g;
                let xh = cache.xhat[(bi, c, t)];
                gx[(bi, c, t)] = r * (gxh - scale * s1 - scale * xh * s2);
            }
        }
    }
    (gx, ggamma, gbeta)
}

/// Normalizes a reference batch against its own pooled statistics (the
/// freeze-time pass that defines the next layer's reference input).
pub(crate) fn vbn_reference_fwd(
    h: &Batch,
    stats: &VbnStats,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> Batch {
    let (batch, ch, len) = h.dim();
    let mut y = Array3::zeros((batch, ch, len));
    for c in 0..ch {
        let mu = stats.mean[c];
        let var = (stats.msq[c] - mu * mu).max(0.0);
        let r = 1.0 / (var + VBN_EPS).sqrt();
        let (g, b) = (gamma[c], beta[c]);
        for bi in 0..batch {
            for t in 0..len {
                y[(bi, c, t)] = g * (h[(bi, c, t)] - mu) * r + b;
            }
        }
    }
    y
}

/// Dense map from a feature vector to one scalar per example.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: Array1<f64>,
    pub b: f64,
}

impl Linear {
    pub fn init<R: Rng>(features: usize, rng: &mut R) -> Self {
        Self {
            w: Array1::from_vec(trunc_normal(features, 0.02, rng)),
            b: 0.0,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.w) + self.b
    }

    pub fn backward(&self, x: &Array2<f64>, gy: &Array1<f64>) -> (Array2<f64>, Array1<f64>, f64) {
        let gx = gy
            .view()
            .insert_axis(Axis(1))
            .dot(&self.w.view().insert_axis(Axis(0)));
        let gw = x.t().dot(gy);
        let gb = gy.sum();
        (gx, gw, gb)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + 1
    }
}
