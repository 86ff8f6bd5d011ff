//! Layer primitives on `N x C x T x F` tensors with matching backward passes.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Dense 4-d tensor, shape `(batch, channels, time, freq)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} values for shape {:?}", data.len(), shape)));
        }
        Ok(Tensor { shape, data })
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn time(&self) -> usize {
        self.shape[2]
    }

    pub fn freq(&self) -> usize {
        self.shape[3]
    }

    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 3x3 convolution, stride 1, zero padding 1 on both axes.
/// `weight` is `out x in x 3 x 3`.
pub fn conv3x3_forward(x: &Tensor, weight: &[f64], bias: &[f64]) -> Result<Tensor> {
    let [n, cin, t, f] = x.shape;
    let cout = bias.len();
    if weight.len() != cout * cin * 9 {
        return Err(Error::Shape(format!("conv weight has {} values, expected {}x{}x3x3", weight.len(), cout, cin)));
    }
    let plane = t * f;
    let mut out = Tensor::zeros([n, cout, t, f]);
    for b in 0..n {
        for oc in 0..cout {
            let dst = &mut out.data[(b * cout + oc) * plane..][..plane];
            dst.fill(bias[oc]);
            for ic in 0..cin {
                let src = &x.data[(b * cin + ic) * plane..][..plane];
                let k = &weight[(oc * cin + ic) * 9..][..9];
                for dt in 0..3 {
                    for df in 0..3 {
                        let w = k[dt * 3 + df];
                        shifted_axpy(dst, src, t, f, dt, df, w);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `dst[t][f] += w * src[t + dt - 1][f + df - 1]` over in-range positions.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], t: usize, f: usize, dt: usize, df: usize, w: f64) {
    let t_lo = if dt == 0 { 1 } else { 0 };
    let t_hi = if dt == 2 { t.saturating_sub(1) } else { t };
    let f_lo = if df == 0 { 1 } else { 0 };
    let f_hi = if df == 2 { f.saturating_sub(1) } else { f };
    if f_lo >= f_hi {
        return;
    }
    for ti in t_lo..t_hi {
        let si = ti + dt - 1;
        let d = &mut dst[ti * f + f_lo..ti * f + f_hi];
        let s = &src[si * f + f_lo + df - 1..si * f + f_hi + df - 1];
        for (a, b) in d.iter_mut().zip(s) {
            *a += w * b;
        }
    }
}

/// `sum dst[t][f] * src[t + dt - 1][f + df - 1]` over in-range positions.
#[inline]
fn shifted_dot(dst: &[f64], src: &[f64], t: usize, f: usize, dt: usize, df: usize) -> f64 {
    let t_lo = if dt == 0 { 1 } else { 0 };
    let t_hi = if dt == 2 { t.saturating_sub(1) } else { t };
    let f_lo = if df == 0 { 1 } else { 0 };
    let f_hi = if df == 2 { f.saturating_sub(1) } else { f };
    if f_lo >= f_hi {
        return 0.0;
    }
    let mut acc = 0.0;
    for ti in t_lo..t_hi {
        let si = ti + dt - 1;
        let d = &dst[ti * f + f_lo..ti * f + f_hi];
        let s = &src[si * f + f_lo + df - 1..si * f + f_hi + df - 1];
        acc += d.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
    }
    acc
}

/// Returns `(dx, dweight, dbias)`; `dx` is skipped when `need_dx` is false.
pub fn conv3x3_backward(
    x: &Tensor,
    weight: &[f64],
    dy: &Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Vec<f64>, Vec<f64>) {
    let [n, cin, t, f] = x.shape;
    let cout = dy.channels();
    let plane = t * f;
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; cout];
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape));
    for b in 0..n {
        for (oc, db_oc) in db.iter_mut().enumerate() {
            let g = &dy.data[(b * cout + oc) * plane..][..plane];
            *db_oc += g.iter().sum::<f64>();
            for ic in 0..cin {
                let src = &x.data[(b * cin + ic) * plane..][..plane];
                let kidx = (oc * cin + ic) * 9;
                for dt in 0..3 {
                    for df in 0..3 {
                        dw[kidx + dt * 3 + df] += shifted_dot(g, src, t, f, dt, df);
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    let dst = &mut dx.data[(b * cin + ic) * plane..][..plane];
                    // transpose of shifted_axpy: flip the kernel offsets
                    for dt in 0..3 {
                        for df in 0..3 {
                            shifted_axpy(dst, g, t, f, 2 - dt, 2 - df, weight[kidx + dt * 3 + df]);
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Batch-norm cache for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub training: bool,
}

/// Training mode normalizes with batch statistics (biased variance);
/// inference mode uses the running statistics.
pub fn batch_norm_forward(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    training: bool,
) -> (Tensor, BatchNormCache) {
    let [n, c, _, _] = x.shape;
    let plane = x.plane();
    let count = (n * plane) as f64;
    let (mean, var) = if training {
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for b in 0..n {
                s += x.data[(b * c + ch) * plane..][..plane].iter().sum::<f64>();
            }
            let m = s / count;
            let mut v = 0.0;
            for b in 0..n {
                v += x.data[(b * c + ch) * plane..][..plane].iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = v / count;
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Tensor::zeros(x.shape);
    let mut y = Tensor::zeros(x.shape);
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                let h = (x.data[i] - mean[ch]) * inv_std[ch];
                xhat.data[i] = h;
                y.data[i] = gamma[ch] * h + beta[ch];
            }
        }
    }
    (y, BatchNormCache { xhat, inv_std, batch_mean: mean, batch_var: var, training })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward(dy: &Tensor, gamma: &[f64], cache: &BatchNormCache) -> (Tensor, Vec<f64>, Vec<f64>) {
    let [n, c, _, _] = dy.shape;
    let plane = dy.plane();
    let count = (n * plane) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                dgamma[ch] += dy.data[i] * cache.xhat.data[i];
                dbeta[ch] += dy.data[i];
            }
        }
    }
    let mut dx = Tensor::zeros(dy.shape);
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let k = gamma[ch] * cache.inv_std[ch];
            for i in off..off + plane {
                dx.data[i] = if cache.training {
                    // dxhat = dy * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                    k * (dy.data[i] - dbeta[ch] / count - cache.xhat.data[i] * dgamma[ch] / count)
                } else {
                    k * dy.data[i]
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Exponential moving update of running statistics. The running variance
/// uses the unbiased batch variance.
pub fn update_running_stats(running_mean: &mut [f64], running_var: &mut [f64], cache: &BatchNormCache, count: usize) {
    let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
    for ch in 0..running_mean.len() {
        running_mean[ch] = (1.0 - BN_MOMENTUM) * running_mean[ch] + BN_MOMENTUM * cache.batch_mean[ch];
        running_var[ch] = (1.0 - BN_MOMENTUM) * running_var[ch] + BN_MOMENTUM * cache.batch_var[ch] * unbias;
    }
}

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU expressed through its output.
pub fn elu_grad_from_output(y: f64) -> f64 {
    if y >= 0.0 {
        1.0
    } else {
        y + 1.0
    }
}

pub fn elu_forward(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape, data: x.data.iter().map(|&v| elu(v)).collect() }
}

pub fn elu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    Tensor { shape: y.shape, data: y.data.iter().zip(&dy.data).map(|(&y, &g)| g * elu_grad_from_output(y)).collect() }
}

/// 1x2 max pooling over frequency, ceil mode: an odd trailing column forms a
/// window of one. Returns the output and the flat argmax index per output.
pub fn max_pool_freq_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let [n, c, t, f] = x.shape;
    let fo = f.div_ceil(2);
    let mut out = Tensor::zeros([n, c, t, fo]);
    let mut arg = vec![0usize; out.data.len()];
    for row in 0..n * c * t {
        for j in 0..fo {
            let a = row * f + 2 * j;
            let best = if 2 * j + 1 < f && x.data[a + 1] > x.data[a] { a + 1 } else { a };
            out.data[row * fo + j] = x.data[best];
            arg[row * fo + j] = best;
        }
    }
    (out, arg)
}

pub fn max_pool_freq_backward(input_shape: [usize; 4], arg: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&i, &g) in arg.iter().zip(&dy.data) {
        dx.data[i] += g;
    }
    dx
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep }).collect()
}
