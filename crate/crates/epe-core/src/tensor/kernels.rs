//! Raw numeric kernels over flat row-major buffers.
//!
//! All layouts are `[batch, channel, height, width]` (or `[batch, feature]`
//! for the linear kernel). Shape checking happens in the tape; these
//! functions assume consistent buffer lengths.

/// Geometry of one 2-d convolution.
#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub batch: usize,
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// Output positions `o` in `[0, out_extent)` whose input column
/// `o * stride + k_off - pad` lands inside `[0, in_extent)`.
#[inline]
fn valid_out_range(
    in_extent: usize,
    out_extent: usize,
    stride: usize,
    pad: usize,
    k_off: usize,
) -> (usize, usize) {
    let lo = if k_off >= pad { 0 } else { (pad - k_off).div_ceil(stride) };
    let max_in = in_extent - 1 + pad;
    if k_off > max_in {
        return (0, 0);
    }
    let hi = ((max_in - k_off) / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

pub fn conv2d_forward(x: &[f64], s: &ConvShape, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut y = vec![0.0; s.batch * s.out_ch * oh * ow];
    for b in 0..s.batch {
        for co in 0..s.out_ch {
            let y_base = (b * s.out_ch + co) * oh * ow;
            if bias[co] != 0.0 {
                y[y_base..y_base + oh * ow].fill(bias[co]);
            }
            for ci in 0..s.in_ch {
                let x_base = (b * s.in_ch + ci) * s.h * s.w;
                let w_base = (co * s.in_ch + ci) * s.kernel * s.kernel;
                for kh in 0..s.kernel {
                    for kw in 0..s.kernel {
                        let wv = weight[w_base + kh * s.kernel + kw];
                        let (lo, hi) = valid_out_range(s.w, ow, s.stride, s.padding, kw);
                        if lo >= hi {
                            continue;
                        }
                        for or in 0..oh {
                            let ir = (or * s.stride + kh) as isize - s.padding as isize;
                            if ir < 0 || ir >= s.h as isize {
                                continue;
                            }
                            let x_row = &x[x_base + ir as usize * s.w..][..s.w];
                            let y_row = &mut y[y_base + or * ow..][..ow];
                            if s.stride == 1 {
                                let shift = lo + kw - s.padding;
                                for (yo, xv) in
                                    y_row[lo..hi].iter_mut().zip(&x_row[shift..shift + hi - lo])
                                {
                                    *yo += wv * xv;
                                }
                            } else {
                                for o in lo..hi {
                                    y_row[o] += wv * x_row[o * s.stride + kw - s.padding];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Gradient of `conv2d_forward` with respect to its input.
pub fn conv2d_backward_input(dy: &[f64], s: &ConvShape, weight: &[f64]) -> Vec<f64> {
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut dx = vec![0.0; s.batch * s.in_ch * s.h * s.w];
    for b in 0..s.batch {
        for co in 0..s.out_ch {
            let dy_base = (b * s.out_ch + co) * oh * ow;
            for ci in 0..s.in_ch {
                let dx_base = (b * s.in_ch + ci) * s.h * s.w;
                let w_base = (co * s.in_ch + ci) * s.kernel * s.kernel;
                for kh in 0..s.kernel {
                    for kw in 0..s.kernel {
                        let wv = weight[w_base + kh * s.kernel + kw];
                        let (lo, hi) = valid_out_range(s.w, ow, s.stride, s.padding, kw);
                        if lo >= hi {
                            continue;
                        }
                        for or in 0..oh {
                            let ir = (or * s.stride + kh) as isize - s.padding as isize;
                            if ir < 0 || ir >= s.h as isize {
                                continue;
                            }
                            let dy_row = &dy[dy_base + or * ow..][..ow];
                            let dx_row = &mut dx[dx_base + ir as usize * s.w..][..s.w];
                            if s.stride == 1 {
                                let shift = lo + kw - s.padding;
                                for (xo, gv) in dx_row[shift..shift + hi - lo]
                                    .iter_mut()
                                    .zip(&dy_row[lo..hi])
                                {
                                    *xo += wv * gv;
                                }
                            } else {
                                for o in lo..hi {
                                    dx_row[o * s.stride + kw - s.padding] += wv * dy_row[o];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Average pooling with a fixed divisor of `kernel * kernel`; padded cells
/// count as zeros in the numerator but still count in the divisor.
pub fn avg_pool_forward(
    x: &[f64],
    batch: usize,
    ch: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let mut y = vec![0.0; batch * ch * oh * ow];
    for plane in 0..batch * ch {
        let x_base = plane * h * w;
        let y_base = plane * oh * ow;
        for kh in 0..kernel {
            for kw in 0..kernel {
                let (lo, hi) = valid_out_range(w, ow, stride, padding, kw);
                if lo >= hi {
                    continue;
                }
                for or in 0..oh {
                    let ir = (or * stride + kh) as isize - padding as isize;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    let x_row = &x[x_base + ir as usize * w..][..w];
                    let y_row = &mut y[y_base + or * ow..][..ow];
                    for o in lo..hi {
                        y_row[o] += x_row[o * stride + kw - padding];
                    }
                }
            }
        }
    }
    let inv = 1.0 / (kernel * kernel) as f64;
    for v in &mut y {
        *v *= inv;
    }
    (y, oh, ow)
}

pub fn avg_pool_backward(
    dy: &[f64],
    batch: usize,
    ch: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Vec<f64> {
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let inv = 1.0 / (kernel * kernel) as f64;
    let mut dx = vec![0.0; batch * ch * h * w];
    for plane in 0..batch * ch {
        let dy_base = plane * oh * ow;
        let dx_base = plane * h * w;
        for kh in 0..kernel {
            for kw in 0..kernel {
                let (lo, hi) = valid_out_range(w, ow, stride, padding, kw);
                if lo >= hi {
                    continue;
                }
                for or in 0..oh {
                    let ir = (or * stride + kh) as isize - padding as isize;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    let dy_row = &dy[dy_base + or * ow..][..ow];
                    let dx_row = &mut dx[dx_base + ir as usize * w..][..w];
                    for o in lo..hi {
                        dx_row[o * stride + kw - padding] += inv * dy_row[o];
                    }
                }
            }
        }
    }
    dx
}

/// Training-mode batch norm over `[batch, ch, h, w]` with biased variance
/// computed per channel across batch and spatial positions. Returns the
/// output and the per-channel `1 / sqrt(var + eps)`.
pub fn batchnorm_forward(
    x: &[f64],
    batch: usize,
    ch: usize,
    h: usize,
    w: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let count = (batch * plane) as f64;
    let mut y = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; ch];
    for c in 0..ch {
        let mut sum = 0.0;
        for b in 0..batch {
            let base = (b * ch + c) * plane;
            for v in &x[base..base + plane] {
                sum += v;
            }
        }
        let mean = sum / count;
        let mut sq = 0.0;
        for b in 0..batch {
            let base = (b * ch + c) * plane;
            for v in &x[base..base + plane] {
                let d = v - mean;
                sq += d * d;
            }
        }
        let inv = 1.0 / (sq / count + eps).sqrt();
        inv_std[c] = inv;
        let scale = gamma[c] * inv;
        let shift = beta[c] - scale * mean;
        for b in 0..batch {
            let base = (b * ch + c) * plane;
            for (yo, xv) in y[base..base + plane].iter_mut().zip(&x[base..base + plane]) {
                *yo = scale * xv + shift;
            }
        }
    }
    (y, inv_std)
}

/// Gradient of training-mode batch norm with respect to its input, recovering
/// the normalized values from the retained output as `(y - beta) / gamma`.
pub fn batchnorm_backward(
    dy: &[f64],
    y: &[f64],
    batch: usize,
    ch: usize,
    h: usize,
    w: usize,
    gamma: &[f64],
    beta: &[f64],
    inv_std: &[f64],
) -> Vec<f64> {
    let plane = h * w;
    let count = (batch * plane) as f64;
    let mut dx = vec![0.0; dy.len()];
    for c in 0..ch {
        let inv_gamma = 1.0 / gamma[c];
        let mut dy_sum = 0.0;
        let mut dy_xhat_sum = 0.0;
        for b in 0..batch {
            let base = (b * ch + c) * plane;
            for i in base..base + plane {
                let xhat = (y[i] - beta[c]) * inv_gamma;
                dy_sum += dy[i];
                dy_xhat_sum += dy[i] * xhat;
            }
        }
        let dy_mean = dy_sum / count;
        let dy_xhat_mean = dy_xhat_sum / count;
        let scale = gamma[c] * inv_std[c];
        for b in 0..batch {
            let base = (b * ch + c) * plane;
            for i in base..base + plane {
                let xhat = (y[i] - beta[c]) * inv_gamma;
                dx[i] = scale * (dy[i] - dy_mean - xhat * dy_xhat_mean);
            }
        }
    }
    dx
}

/// `y[b, k] = sum_f x[b, f] * weight[k, f] + bias[k]`.
pub fn linear_forward(
    x: &[f64],
    batch: usize,
    features: usize,
    weight: &[f64],
    out: usize,
    bias: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; batch * out];
    for b in 0..batch {
        let x_row = &x[b * features..][..features];
        for k in 0..out {
            let w_row = &weight[k * features..][..features];
            let mut acc = bias[k];
            for (xv, wv) in x_row.iter().zip(w_row) {
                acc += xv * wv;
            }
            y[b * out + k] = acc;
        }
    }
    y
}

pub fn linear_backward_input(
    dy: &[f64],
    batch: usize,
    out: usize,
    weight: &[f64],
    features: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; batch * features];
    for b in 0..batch {
        let dx_row = &mut dx[b * features..][..features];
        for k in 0..out {
            let g = dy[b * out + k];
            if g == 0.0 {
                continue;
            }
            let w_row = &weight[k * features..][..features];
            for (xo, wv) in dx_row.iter_mut().zip(w_row) {
                *xo += g * wv;
            }
        }
    }
    dx
}

pub fn global_avg_pool_forward(x: &[f64], batch: usize, ch: usize, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let mut y = vec![0.0; batch * ch];
    for (i, yo) in y.iter_mut().enumerate() {
        let base = i * plane;
        let mut acc = 0.0;
        for v in &x[base..base + plane] {
            acc += v;
        }
        *yo = acc * inv;
    }
    y
}

pub fn global_avg_pool_backward(dy: &[f64], h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let mut dx = vec![0.0; dy.len() * plane];
    for (i, g) in dy.iter().enumerate() {
        dx[i * plane..(i + 1) * plane].fill(g * inv);
    }
    dx
}
