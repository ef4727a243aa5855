use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::prefilter::PatchSet;

use super::tensor::Tensor;
use super::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    /// SGD with classical momentum.
    Sgd,
    /// Adam with beta1 0.9, beta2 0.999, epsilon 1e-8.
    #[default]
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(Error::Config(format!("unknown optimizer `{s}` (sgd or adam)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Multiplier on the He-normal initial weight scale.
    pub init_scale: f64,
    /// Momentum for [`Optimizer::Sgd`].
    pub momentum: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            epochs: 20,
            batch_size: 8,
            seed: 7,
            init_scale: 1.0,
            momentum: 0.9,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be >= 0", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config(format!("init_scale {} must be > 0", self.init_scale)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean sample loss per epoch.
    pub loss_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Labelled patches as `(tensor, target)` pairs; unlabelled patches are skipped.
pub fn patch_samples(corpus: &PatchSet) -> Result<Vec<(Tensor, f64)>> {
    corpus
        .patches
        .iter()
        .filter_map(|p| p.label.map(|l| (p, l)))
        .map(|(p, l)| Ok((Tensor::image(p.size, p.size, &p.pixels)?, l.target())))
        .collect()
}

pub fn train<M: Model>(model: &mut M, corpus: &PatchSet, cfg: &TrainConfig) -> Result<TrainReport> {
    let samples = patch_samples(corpus)?;
    let mut report = train_samples(model, &samples, cfg)?;
    let unlabeled = corpus.len() - samples.len();
    if unlabeled > 0 {
        report
            .warnings
            .insert(0, format!("{unlabeled} unlabelled patches ignored"));
    }
    Ok(report)
}

/// Minibatch training on the binary cross-entropy of the score, with the
/// configured optimizer.
///
/// Single-threaded; for a fixed seed the parameter trajectory is bit-exact.
pub fn train_samples<M: Model>(
    model: &mut M,
    samples: &[(Tensor, f64)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let mut report = TrainReport::default();
    let positives = samples.iter().filter(|(_, t)| *t > 0.5).count();
    if positives == 0 || positives == samples.len() {
        let msg = format!(
            "corpus has a single class ({} of {} positive)",
            positives,
            samples.len()
        );
        warn!("{msg}");
        report.warnings.push(msg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<_> = model.layers().iter().map(|l| l.zeros_like()).collect();
    let mut second: Vec<_> = model.layers().iter().map(|l| l.zeros_like()).collect();
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Option<Vec<_>> = None;
            for &i in batch {
                let (x, t) = &samples[i];
                let (loss, _, grads) = model.loss_grad(x, *t)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss {loss} at epoch {epoch}, batch {b}, sample {i}"
                    )));
                }
                epoch_loss += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (al, gl) in a.iter_mut().zip(&grads) {
                            for (x, y) in al.weight.iter_mut().zip(&gl.weight) {
                                *x += y;
                            }
                            for (x, y) in al.bias.iter_mut().zip(&gl.bias) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let acc = acc.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            step += 1;
            let layers = model.layers_mut().iter_mut().zip(&mut velocity).zip(&mut second).zip(&acc);
            for (((layer, vel), sq), grad) in layers {
                let params = layer.weight.iter_mut().chain(layer.bias.iter_mut());
                let m1 = vel.weight.iter_mut().chain(vel.bias.iter_mut());
                let m2 = sq.weight.iter_mut().chain(sq.bias.iter_mut());
                let g = grad.weight.iter().chain(grad.bias.iter());
                match cfg.optimizer {
                    Optimizer::Sgd => {
                        for ((w, v), g) in params.zip(m1).zip(g) {
                            *v = cfg.momentum * *v - cfg.learning_rate * inv * g;
                            *w += *v;
                        }
                    }
                    Optimizer::Adam => {
                        let (b1, b2) = (0.9f64, 0.999f64);
                        let c1 = 1.0 - b1.powi(step);
                        let c2 = 1.0 - b2.powi(step);
                        for (((w, m), v), g) in params.zip(m1).zip(m2).zip(g) {
                            let g = g * inv;
                            *m = b1 * *m + (1.0 - b1) * g;
                            *v = b2 * *v + (1.0 - b2) * g * g;
                            *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                        }
                    }
                }
            }
        }
        let mean = epoch_loss / samples.len() as f64;
        debug!("epoch {epoch}: loss {mean:.6}");
        report.loss_trace.push(mean);
    }
    model.mark_trained(cfg.epochs);
    Ok(report)
}

/// Share of samples whose score lands on the correct side of 0.5.
pub fn accuracy<M: Model>(model: &M, samples: &[(Tensor, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut right = 0usize;
    for (x, t) in samples {
        let s = model.score(x)?;
        if (s > 0.5) == (*t > 0.5) {
            right += 1;
        }
    }
    Ok(right as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{SegNet, SegNetConfig};

    fn tiny() -> SegNet {
        let cfg = SegNetConfig {
            channels: vec![2, 3],
            ..Default::default()
        };
        SegNet::new(&cfg, 1.0, 1).unwrap()
    }

    fn samples() -> Vec<(Tensor, f64)> {
        (0..6)
            .map(|k| {
                let px: Vec<f64> = (0..64).map(|i| ((i * (k + 3)) % 10) as f64 / 10.0).collect();
                (Tensor::image(8, 8, &px).unwrap(), (k % 2) as f64)
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut m = tiny();
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        train_samples(&mut m, &samples(), &cfg).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 2,
            ..Default::default()
        };
        let (mut a, mut b) = (tiny(), tiny());
        let ra = train_samples(&mut a, &samples(), &cfg).unwrap();
        let rb = train_samples(&mut b, &samples(), &cfg).unwrap();
        assert_eq!(ra.loss_trace, rb.loss_trace);
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_warns_but_trains() {
        let data: Vec<_> = samples().into_iter().map(|(x, _)| (x, 1.0)).collect();
        let r = train_samples(&mut tiny(), &data, &TrainConfig { epochs: 1, ..Default::default() })
            .unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn divergence_aborts() {
        let cfg = TrainConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            epochs: 5,
            batch_size: 1,
            ..Default::default()
        };
        let res = train_samples(&mut tiny(), &samples(), &cfg);
        assert!(matches!(res, Err(Error::Diverged(_))), "{res:?}");
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(train_samples(&mut tiny(), &[], &TrainConfig::default()).is_err());
    }
}
