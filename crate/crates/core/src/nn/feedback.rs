//! Weakly supervised segmentation by feedback gating.
//!
//! The backbone is a plain image-level classifier: `conv3x3 -> activation ->
//! maxpool2` blocks, a `1x1` conv to a single class map, global average
//! pooling to a logit and a sigmoid. It is trained only with building /
//! no-building labels.
//!
//! At inference every hidden post-activation unit carries a binary gate. A
//! feedback pass runs forward with the current gates, back-propagates the
//! class logit to the gated activations and keeps a unit open only when its
//! contribution `activation * d(logit)/d(activation)` is positive. After the
//! requested number of passes the input relevance `max(0, x * d(logit)/dx)`
//! is normalised by its maximum to give a footprint map in [0, 1].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::layers::{bce_logit, max_pool2, max_pool2_backward, sigmoid, Activation, Conv2d};
use super::tensor::Tensor;
use super::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackConfig {
    pub channels: Vec<usize>,
    pub activation: Activation,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            channels: vec![8, 16],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackModel {
    pub(crate) activation: Activation,
    /// Backbone convs followed by the `1x1` class-map head.
    pub(crate) layers: Vec<Conv2d>,
    /// Epochs of training applied so far; 0 marks an untrained model.
    pub trained_epochs: u32,
}

/// Per-unit gates on the post-activation maps of each backbone block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates(pub Vec<Vec<bool>>);

impl Gates {
    pub fn open_count(&self) -> Vec<usize> {
        self.0.iter().map(|g| g.iter().filter(|&&b| b).count()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub width: usize,
    pub height: usize,
    /// Row-major relevance in [0, 1].
    pub map: Vec<f64>,
    pub score: f64,
    pub gates_open: Vec<usize>,
    /// Set when the model has never been trained.
    pub untrained: bool,
}

struct Pass {
    block_in: Vec<Tensor>,
    block_z: Vec<Tensor>,
    block_h: Vec<Tensor>,
    block_idx: Vec<Vec<usize>>,
    head_in: Tensor,
    logit: f64,
    map_len: usize,
}

struct PassGrad {
    dh: Vec<Tensor>,
    dx: Option<Tensor>,
}

impl FeedbackModel {
    pub fn layout(channels: &[usize]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(channels.len() + 1);
        let mut prev = 1;
        for &c in channels {
            out.push((prev, c, 3));
            prev = c;
        }
        out.push((prev, 1, 1));
        out
    }

    pub fn new(cfg: &FeedbackConfig, init_scale: f64, seed: u64) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "feedback backbone needs at least one block with nonzero channels".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::layout(&cfg.channels)
            .into_iter()
            .map(|(i, o, k)| Conv2d::init(i, o, k, init_scale, &mut rng))
            .collect();
        Ok(FeedbackModel {
            activation: cfg.activation,
            layers,
            trained_epochs: 0,
        })
    }

    pub(crate) fn from_layers(activation: Activation, layers: Vec<Conv2d>, trained_epochs: u32) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Model("feedback model needs a block and a head".into()));
        }
        let channels: Vec<usize> = layers[..layers.len() - 1].iter().map(|l| l.out_ch).collect();
        let got: Vec<_> = layers.iter().map(|l| (l.in_ch, l.out_ch, l.kernel)).collect();
        if Self::layout(&channels) != got {
            return Err(Error::Model(format!("inconsistent feedback layers {got:?}")));
        }
        Ok(FeedbackModel {
            activation,
            layers,
            trained_epochs,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn channels(&self) -> Vec<usize> {
        self.layers[..self.depth()].iter().map(|l| l.out_ch).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.shape();
        let m = 1usize << self.depth();
        if c != 1 || h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "feedback model of depth {} needs a 1-channel input with sides divisible by {m}, got ({c}, {h}, {w})",
                self.depth()
            )));
        }
        Ok(())
    }

    /// All gates open for an input of the given size.
    pub fn open_gates(&self, h: usize, w: usize) -> Gates {
        let (mut h, mut w) = (h, w);
        let mut out = Vec::with_capacity(self.depth());
        for l in &self.layers[..self.depth()] {
            out.push(vec![true; l.out_ch * h * w]);
            h /= 2;
            w /= 2;
        }
        Gates(out)
    }

    fn run(&self, x: &Tensor, gates: &Gates) -> Pass {
        let d = self.depth();
        let mut block_in = Vec::with_capacity(d);
        let mut block_z = Vec::with_capacity(d);
        let mut block_h = Vec::with_capacity(d);
        let mut block_idx = Vec::with_capacity(d);
        let mut cur = x.clone();
        for (l, gate) in self.layers[..d].iter().zip(&gates.0) {
            let z = l.forward(&cur);
            let mut h = self.activation.apply(&z);
            for (v, &open) in h.data_mut().iter_mut().zip(gate) {
                if !open {
                    *v = 0.0;
                }
            }
            let (p, idx) = max_pool2(&h);
            block_in.push(std::mem::replace(&mut cur, p));
            block_z.push(z);
            block_h.push(h);
            block_idx.push(idx);
        }
        let map = self.layers[d].forward(&cur);
        Pass {
            block_in,
            block_z,
            block_h,
            block_idx,
            head_in: cur,
            logit: map.mean(),
            map_len: map.data().len(),
        }
    }

    /// Back-propagate `dlogit` through a recorded pass.
    fn back(
        &self,
        pass: &Pass,
        gates: &Gates,
        dlogit: f64,
        grads: Option<&mut [Conv2d]>,
        need_input: bool,
    ) -> PassGrad {
        let d = self.depth();
        let mut scratch: Vec<Conv2d>;
        let grads = match grads {
            Some(g) => g,
            None => {
                scratch = self.layers.iter().map(Conv2d::zeros_like).collect();
                &mut scratch[..]
            }
        };
        let (hh, hw) = (pass.head_in.height(), pass.head_in.width());
        let dmap = Tensor::from_vec(1, hh, hw, vec![dlogit / pass.map_len as f64; hh * hw])
            .expect("head map shape");
        let mut g = self.layers[d]
            .backward(&pass.head_in, &dmap, &mut grads[d], true)
            .expect("input grad");
        let mut dh = vec![Tensor::zeros(0, 0, 0); d];
        let mut dx = None;
        for l in (0..d).rev() {
            let shape = pass.block_h[l].shape();
            let mut dgated = max_pool2_backward(&g, &pass.block_idx[l], shape);
            dh[l] = dgated.clone();
            for (v, &open) in dgated.data_mut().iter_mut().zip(&gates.0[l]) {
                if !open {
                    *v = 0.0;
                }
            }
            let dz = self.activation.backward(&pass.block_z[l], &dgated);
            let want = l > 0 || need_input;
            match self.layers[l].backward(&pass.block_in[l], &dz, &mut grads[l], want) {
                Some(t) if l > 0 => g = t,
                Some(t) => dx = Some(t),
                None => {}
            }
        }
        PassGrad { dh, dx }
    }

    /// Image-level score in [0, 1] with all gates open.
    pub fn classify(&self, x: &Tensor) -> Result<f64> {
        self.check_input(x)?;
        let gates = self.open_gates(x.height(), x.width());
        Ok(sigmoid(self.run(x, &gates).logit))
    }

    /// Iterate feedback gating `passes` times and read out the normalised
    /// relevance map. `passes == 0` gives the ungated gradient-times-input
    /// saliency.
    pub fn segment(&self, x: &Tensor, passes: usize) -> Result<Footprint> {
        self.check_input(x)?;
        let (h, w) = (x.height(), x.width());
        let mut gates = self.open_gates(h, w);
        for _ in 0..passes {
            let pass = self.run(x, &gates);
            let grad = self.back(&pass, &gates, 1.0, None, false);
            for (l, gate) in gates.0.iter_mut().enumerate() {
                let act = pass.block_h[l].data();
                let dh = grad.dh[l].data();
                for (i, open) in gate.iter_mut().enumerate() {
                    *open = *open && act[i] * dh[i] > 0.0;
                }
            }
        }
        let pass = self.run(x, &gates);
        let grad = self.back(&pass, &gates, 1.0, None, true);
        let dx = grad.dx.expect("input gradient requested");
        let mut map: Vec<f64> = dx
            .data()
            .iter()
            .zip(x.data())
            .map(|(g, v)| (g * v).max(0.0))
            .collect();
        let max = map.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut map {
                *v /= max;
            }
        }
        Ok(Footprint {
            width: w,
            height: h,
            map,
            score: sigmoid(pass.logit),
            gates_open: gates.open_count(),
            untrained: self.trained_epochs == 0,
        })
    }
}

/// Footprint of a single-channel image; see [`FeedbackModel::segment`].
pub fn feedback_segment(m: &FeedbackModel, image: &Tensor, passes: usize) -> Result<Footprint> {
    m.segment(image, passes)
}

impl Model for FeedbackModel {
    fn layers(&self) -> &[Conv2d] {
        &self.layers
    }

    fn layers_mut(&mut self) -> &mut [Conv2d] {
        &mut self.layers
    }

    fn score(&self, x: &Tensor) -> Result<f64> {
        self.classify(x)
    }

    fn loss_grad(&self, x: &Tensor, target: f64) -> Result<(f64, f64, Vec<Conv2d>)> {
        self.check_input(x)?;
        let gates = self.open_gates(x.height(), x.width());
        let pass = self.run(x, &gates);
        let score = sigmoid(pass.logit);
        let loss = bce_logit(pass.logit, target);
        let mut grads: Vec<Conv2d> = self.layers.iter().map(Conv2d::zeros_like).collect();
        self.back(&pass, &gates, score - target, Some(&mut grads), false);
        Ok((loss, score, grads))
    }

    fn mark_trained(&mut self, epochs: usize) {
        self.trained_epochs = self.trained_epochs.saturating_add(epochs as u32);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FeedbackModel {
        FeedbackModel::new(&FeedbackConfig::default(), 1.0, 5).unwrap()
    }

    #[test]
    fn dark_image_gives_zero_map() {
        let m = model();
        let fp = m.segment(&Tensor::zeros(1, 32, 32), 2).unwrap();
        assert!(fp.map.iter().all(|&v| v == 0.0));
        assert!(fp.untrained);
    }

    #[test]
    fn zero_passes_is_plain_saliency() {
        let m = model();
        let px: Vec<f64> = (0..32 * 32).map(|i| ((i * 13) % 17) as f64 / 16.0).collect();
        let x = Tensor::image(32, 32, &px).unwrap();
        let fp = m.segment(&x, 0).unwrap();
        // reference: ungated logit gradient times input
        let gates = m.open_gates(32, 32);
        let pass = m.run(&x, &gates);
        let dx = m.back(&pass, &gates, 1.0, None, true).dx.unwrap();
        let raw: Vec<f64> = dx.data().iter().zip(&px).map(|(g, v)| (g * v).max(0.0)).collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        for (a, b) in fp.map.iter().zip(&raw) {
            assert!((a - b / max).abs() < 1e-12);
        }
        assert_eq!(fp.gates_open, vec![8 * 32 * 32, 16 * 16 * 16]);
    }

    #[test]
    fn gating_only_closes_units() {
        let m = model();
        let px: Vec<f64> = (0..32 * 32).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let x = Tensor::image(32, 32, &px).unwrap();
        let one = m.segment(&x, 1).unwrap();
        let two = m.segment(&x, 2).unwrap();
        for (a, b) in one.gates_open.iter().zip(&two.gates_open) {
            assert!(b <= a);
        }
        assert!(one.map.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
