//! Encoder-decoder patch classifier.
//!
//! Encoder blocks are `conv3x3 -> activation -> maxpool2` with the pooling
//! argmax recorded; decoder blocks mirror them as `unpool (recorded
//! indices) -> conv3x3 -> activation`, and a `1x1` conv with a per-pixel
//! sigmoid yields a probability map the size of the input. The patch score
//! is the spatial mean of that map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::layers::{
    bce, max_pool2, max_pool2_backward, max_unpool2, max_unpool2_backward, sigmoid, Activation,
    Conv2d,
};
use super::tensor::Tensor;
use super::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct SegNetConfig {
    /// Output channels of each encoder block.
    pub channels: Vec<usize>,
    pub activation: Activation,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            channels: vec![8, 16, 32],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet {
    pub(crate) activation: Activation,
    /// Encoder convs, then decoder convs, then the head.
    pub(crate) layers: Vec<Conv2d>,
}

pub struct SegNetOutput {
    pub prob_map: Tensor,
    pub score: f64,
}

struct Cache {
    enc_in: Vec<Tensor>,
    enc_z: Vec<Tensor>,
    enc_shape: Vec<(usize, usize, usize)>,
    enc_idx: Vec<Vec<usize>>,
    dec_in: Vec<Tensor>,
    dec_z: Vec<Tensor>,
    head_in: Tensor,
    prob: Tensor,
}

impl SegNet {
    /// Layer shapes `(in, out, kernel)` for an encoder channel plan.
    pub fn layout(channels: &[usize]) -> Vec<(usize, usize, usize)> {
        let d = channels.len();
        let mut out = Vec::with_capacity(2 * d + 1);
        let mut prev = 1;
        for &c in channels {
            out.push((prev, c, 3));
            prev = c;
        }
        for j in 0..d {
            let cin = channels[d - 1 - j];
            let cout = if j + 1 < d { channels[d - 2 - j] } else { channels[0] };
            out.push((cin, cout, 3));
        }
        out.push((channels[0], 1, 1));
        out
    }

    pub fn new(cfg: &SegNetConfig, init_scale: f64, seed: u64) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "segnet needs at least one encoder block with nonzero channels".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::layout(&cfg.channels)
            .into_iter()
            .map(|(i, o, k)| Conv2d::init(i, o, k, init_scale, &mut rng))
            .collect();
        Ok(SegNet {
            activation: cfg.activation,
            layers,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(cfg: &SegNetConfig) -> Self {
        SegNet {
            activation: cfg.activation,
            layers: Self::layout(&cfg.channels)
                .into_iter()
                .map(|(i, o, k)| Conv2d::zeros(i, o, k))
                .collect(),
        }
    }

    pub(crate) fn from_layers(activation: Activation, layers: Vec<Conv2d>) -> Result<Self> {
        let depth = (layers.len().saturating_sub(1)) / 2;
        if layers.len() < 3 || layers.len() % 2 == 0 {
            return Err(Error::Model(format!("segnet needs 2d+1 layers, got {}", layers.len())));
        }
        let channels: Vec<usize> = layers[..depth].iter().map(|l| l.out_ch).collect();
        let expect = Self::layout(&channels);
        let got: Vec<_> = layers.iter().map(|l| (l.in_ch, l.out_ch, l.kernel)).collect();
        if expect != got {
            return Err(Error::Model(format!("inconsistent segnet layers {got:?}")));
        }
        Ok(SegNet { activation, layers })
    }

    pub fn depth(&self) -> usize {
        (self.layers.len() - 1) / 2
    }

    pub fn channels(&self) -> Vec<usize> {
        self.layers[..self.depth()].iter().map(|l| l.out_ch).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.shape();
        let m = 1usize << self.depth();
        if c != 1 || h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "segnet of depth {} needs a 1-channel input with sides divisible by {m}, got ({c}, {h}, {w})",
                self.depth()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor) -> Cache {
        let d = self.depth();
        let act = self.activation;
        let mut enc_in = Vec::with_capacity(d);
        let mut enc_z = Vec::with_capacity(d);
        let mut enc_shape = Vec::with_capacity(d);
        let mut enc_idx = Vec::with_capacity(d);
        let mut cur = x.clone();
        for l in &self.layers[..d] {
            let z = l.forward(&cur);
            let a = act.apply(&z);
            let (p, idx) = max_pool2(&a);
            enc_in.push(std::mem::replace(&mut cur, p));
            enc_shape.push(a.shape());
            enc_z.push(z);
            enc_idx.push(idx);
        }
        let mut dec_in = Vec::with_capacity(d);
        let mut dec_z = Vec::with_capacity(d);
        for (j, l) in self.layers[d..2 * d].iter().enumerate() {
            let e = d - 1 - j;
            let u = max_unpool2(&cur, &enc_idx[e], enc_shape[e]);
            let z = l.forward(&u);
            cur = act.apply(&z);
            dec_in.push(u);
            dec_z.push(z);
        }
        let logits = self.layers[2 * d].forward(&cur);
        let prob = logits.map(sigmoid);
        Cache {
            enc_in,
            enc_z,
            enc_shape,
            enc_idx,
            dec_in,
            dec_z,
            head_in: cur,
            prob,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<SegNetOutput> {
        self.check_input(x)?;
        let cache = self.run(x);
        let score = cache.prob.mean();
        Ok(SegNetOutput {
            prob_map: cache.prob,
            score,
        })
    }
}

impl Model for SegNet {
    fn layers(&self) -> &[Conv2d] {
        &self.layers
    }

    fn layers_mut(&mut self) -> &mut [Conv2d] {
        &mut self.layers
    }

    fn score(&self, x: &Tensor) -> Result<f64> {
        Ok(self.forward(x)?.score)
    }

    fn loss_grad(&self, x: &Tensor, target: f64) -> Result<(f64, f64, Vec<Conv2d>)> {
        self.check_input(x)?;
        let d = self.depth();
        let act = self.activation;
        let c = self.run(x);
        let n = c.prob.data().len() as f64;
        let score = c.prob.mean();
        let loss = bce(score, target);
        let s = score.clamp(1e-12, 1.0 - 1e-12);
        let dscore = (s - target) / (s * (1.0 - s));

        let mut grads: Vec<Conv2d> = self.layers.iter().map(Conv2d::zeros_like).collect();
        let dlogit = c.prob.map(|p| dscore / n * p * (1.0 - p));
        let mut g = self.layers[2 * d]
            .backward(&c.head_in, &dlogit, &mut grads[2 * d], true)
            .expect("input grad");
        for j in (0..d).rev() {
            let e = d - 1 - j;
            let dz = act.backward(&c.dec_z[j], &g);
            let du = self.layers[d + j]
                .backward(&c.dec_in[j], &dz, &mut grads[d + j], true)
                .expect("input grad");
            let (ch, h, w) = c.enc_shape[e];
            g = max_unpool2_backward(&du, &c.enc_idx[e], (ch, h / 2, w / 2));
        }
        for e in (0..d).rev() {
            let da = max_pool2_backward(&g, &c.enc_idx[e], c.enc_shape[e]);
            let dz = act.backward(&c.enc_z[e], &da);
            match self.layers[e].backward(&c.enc_in[e], &dz, &mut grads[e], e > 0) {
                Some(dx) => g = dx,
                None => break,
            }
        }
        Ok((loss, score, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_half_everywhere() {
        let m = SegNet::zeros(&SegNetConfig::default());
        let x = Tensor::image(64, 64, &vec![0.7; 64 * 64]).unwrap();
        let out = m.forward(&x).unwrap();
        assert!(out.prob_map.data().iter().all(|&p| p == 0.5));
        assert_eq!(out.score, 0.5);
    }

    #[test]
    fn score_is_mean_of_map() {
        let m = SegNet::new(&SegNetConfig::default(), 1.0, 11).unwrap();
        let px: Vec<f64> = (0..4096).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let out = m.forward(&Tensor::image(64, 64, &px).unwrap()).unwrap();
        assert_eq!(out.prob_map.shape(), (1, 64, 64));
        assert!((out.score - out.prob_map.mean()).abs() < 1e-12);
        assert!(out.prob_map.data().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = SegNet::zeros(&SegNetConfig::default());
        assert!(m.forward(&Tensor::zeros(1, 60, 64)).is_err());
        assert!(m.forward(&Tensor::zeros(2, 64, 64)).is_err());
    }

    #[test]
    fn layout_mirrors_encoder() {
        assert_eq!(
            SegNet::layout(&[8, 16, 32]),
            vec![(1, 8, 3), (8, 16, 3), (16, 32, 3), (32, 16, 3), (16, 8, 3), (8, 8, 3), (8, 1, 1)]
        );
    }
}
