//! Layer kernels with explicit forward and backward passes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;

/// Square convolution with stride 1 and "same" zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            weight: vec![0.0; out_ch * in_ch * kernel * kernel],
            bias: vec![0.0; out_ch],
        }
    }

    /// He-normal weights scaled by `scale`, zero biases.
    pub fn init(in_ch: usize, out_ch: usize, kernel: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut conv = Conv2d::zeros(in_ch, out_ch, kernel);
        let fan_in = (in_ch * kernel * kernel) as f64;
        let std = scale * (2.0 / fan_in).sqrt();
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut conv.weight {
                *w = normal.sample(rng);
            }
        }
        conv
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d::zeros(self.in_ch, self.out_ch, self.kernel)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn param(&self, i: usize) -> f64 {
        if i < self.weight.len() {
            self.weight[i]
        } else {
            self.bias[i - self.weight.len()]
        }
    }

    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let n = self.weight.len();
        if i < n {
            &mut self.weight[i]
        } else {
            &mut self.bias[i - n]
        }
    }

    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        let k = self.kernel;
        self.weight[((o * self.in_ch + i) * k + ky) * k + kx]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (c, h, w) = x.shape();
        assert_eq!(c, self.in_ch, "conv input channels");
        let k = self.kernel;
        let pad = k / 2;
        let mut y = Tensor::zeros(self.out_ch, h, w);
        for o in 0..self.out_ch {
            let out = y.plane_mut(o);
            out.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let inp = x.plane(i);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.w(o, i, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        let (x_lo, x_hi) = valid_range(w, kx, pad);
                        for oy in 0..h {
                            let Some(iy) = (oy + ky).checked_sub(pad).filter(|&v| v < h) else {
                                continue;
                            };
                            let src = &inp[iy * w + x_lo + kx - pad..iy * w + x_hi + kx - pad];
                            let dst = &mut out[oy * w + x_lo..oy * w + x_hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulate parameter gradients into `grad` and return `dL/dx` when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        grad: &mut Conv2d,
        need_input_grad: bool,
    ) -> Option<Tensor> {
        let (_, h, w) = x.shape();
        let k = self.kernel;
        let pad = k / 2;
        let mut dx = need_input_grad.then(|| Tensor::zeros(self.in_ch, h, w));
        for o in 0..self.out_ch {
            let g = dy.plane(o);
            grad.bias[o] += g.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let inp = x.plane(i);
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * self.in_ch + i) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let (x_lo, x_hi) = valid_range(w, kx, pad);
                        let mut acc = 0.0;
                        for oy in 0..h {
                            let Some(iy) = (oy + ky).checked_sub(pad).filter(|&v| v < h) else {
                                continue;
                            };
                            let src = &inp[iy * w + x_lo + kx - pad..iy * w + x_hi + kx - pad];
                            let gy = &g[oy * w + x_lo..oy * w + x_hi];
                            acc += gy.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            if let Some(dx) = dx.as_mut() {
                                let dst = &mut dx.plane_mut(i)
                                    [iy * w + x_lo + kx - pad..iy * w + x_hi + kx - pad];
                                for (d, gv) in dst.iter_mut().zip(gy) {
                                    *d += wv * gv;
                                }
                            }
                        }
                        grad.weight[widx] += acc;
                    }
                }
            }
        }
        dx
    }
}

/// Output columns `[lo, hi)` whose input column `ox + kx - pad` is in range.
fn valid_range(w: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (w + pad).saturating_sub(kx).min(w);
    (lo, hi.max(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    /// No nonlinearity; used to build linear models for gradient checks.
    Identity,
}

impl Activation {
    pub fn apply(self, z: &Tensor) -> Tensor {
        match self {
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// `dL/dz` from `dL/da` given the pre-activation `z`.
    pub fn backward(self, z: &Tensor, da: &Tensor) -> Tensor {
        match self {
            Activation::Relu => {
                let mut out = da.clone();
                for (g, &v) in out.data_mut().iter_mut().zip(z.data()) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
                out
            }
            Activation::Identity => da.clone(),
        }
    }
}

/// 2x2 max pooling; returns the pooled tensor and, per output element, the
/// flat index of the winning input element (first maximum in scan order).
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = x.shape();
    assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even dimensions");
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(c, oh, ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    let src = x.data();
    let dst = y.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[(ch * oh + oy) * ow + ox] = src[best];
                idx.push(best);
            }
        }
    }
    (y, idx)
}

/// Scatter each element to its recorded position in a zero tensor of the
/// pre-pooling shape.
pub fn max_unpool2(x: &Tensor, indices: &[usize], shape: (usize, usize, usize)) -> Tensor {
    assert_eq!(x.data().len(), indices.len(), "unpool index count");
    let mut y = Tensor::zeros(shape.0, shape.1, shape.2);
    let dst = y.data_mut();
    for (&v, &i) in x.data().iter().zip(indices) {
        dst[i] = v;
    }
    y
}

/// Gradient of [`max_unpool2`]: gather at the recorded positions.
pub fn max_unpool2_backward(dy: &Tensor, indices: &[usize], pooled: (usize, usize, usize)) -> Tensor {
    let data = indices.iter().map(|&i| dy.data()[i]).collect();
    Tensor::from_vec(pooled.0, pooled.1, pooled.2, data).expect("pooled shape")
}

/// Gradient of [`max_pool2`] is the unpooling scatter.
pub fn max_pool2_backward(dy: &Tensor, indices: &[usize], input: (usize, usize, usize)) -> Tensor {
    max_unpool2(dy, indices, input)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a probability, clamped away from 0 and 1.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Binary cross-entropy evaluated from a logit (numerically stable).
pub fn bce_logit(z: f64, target: f64) -> f64 {
    // softplus(z) - target * z
    z.max(0.0) + (-z.abs()).exp().ln_1p() - target * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(c: &Conv2d, x: &Tensor) -> Tensor {
        let (_, h, w) = x.shape();
        let k = c.kernel as isize;
        let pad = k / 2;
        let mut y = Tensor::zeros(c.out_ch, h, w);
        for o in 0..c.out_ch {
            for oy in 0..h as isize {
                for ox in 0..w as isize {
                    let mut s = c.bias[o];
                    for i in 0..c.in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (iy, ix) = (oy + ky - pad, ox + kx - pad);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                s += c.w(o, i, ky as usize, kx as usize)
                                    * x.plane(i)[iy as usize * w + ix as usize];
                            }
                        }
                    }
                    y.plane_mut(o)[oy as usize * w + ox as usize] = s;
                }
            }
        }
        y
    }

    fn random_tensor(c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor {
        let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 3, 5] {
            let mut conv = Conv2d::init(3, 4, k, 1.0, &mut rng);
            conv.bias = vec![0.1, -0.2, 0.3, 0.0];
            let x = random_tensor(3, 7, 5, &mut rng);
            let a = conv.forward(&x);
            let b = naive_conv(&conv, &x);
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unpool_restores_maxima_in_place() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(2, 6, 8, &mut rng);
        let (p, idx) = max_pool2(&x);
        let u = max_unpool2(&p, &idx, x.shape());
        let mut kept = 0;
        for (i, (&orig, &back)) in x.data().iter().zip(u.data()).enumerate() {
            if idx.contains(&i) {
                assert_eq!(orig, back);
                kept += 1;
            } else {
                assert_eq!(back, 0.0);
            }
        }
        assert_eq!(kept, p.data().len());
    }

    #[test]
    fn pool_picks_first_maximum_on_ties() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(max_pool2(&x).1, vec![0]);
    }

    #[test]
    fn bce_forms_agree() {
        for z in [-20.0, -2.0, 0.0, 0.7, 20.0] {
            for t in [0.0, 1.0] {
                let a = bce(sigmoid(z), t);
                let b = bce_logit(z, t);
                // 1 - sigmoid(z) loses digits for large z
                let tol = if z.abs() > 10.0 { 1e-4 * b.max(1.0) } else { 1e-9 };
                assert!((a - b).abs() < tol, "{z} {t}: {a} vs {b}");
            }
        }
    }
}
