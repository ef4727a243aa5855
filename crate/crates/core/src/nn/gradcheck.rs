//! Finite-difference verification of back-propagated gradients.

use crate::error::{Error, Result};

use super::layers::Conv2d;
use super::tensor::Tensor;
use super::Model;

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub worst_layer: usize,
    pub worst_param: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compare the analytic loss gradient of every parameter against the central
/// difference `(L(p + eps) - L(p - eps)) / 2 eps`.
pub fn grad_check<M: Model + Clone>(m: &M, x: &Tensor, target: f64, eps: f64) -> Result<GradCheckReport> {
    grad_check_with(m, x, target, eps, |_| {})
}

/// As [`grad_check`], but `corrupt` may tamper with the analytic gradients
/// first (mutation testing of the checker itself).
pub fn grad_check_with<M: Model + Clone>(
    m: &M,
    x: &Tensor,
    target: f64,
    eps: f64,
    corrupt: impl FnOnce(&mut [Conv2d]),
) -> Result<GradCheckReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let (_, _, mut grads) = m.loss_grad(x, target)?;
    corrupt(&mut grads);

    let mut probe = m.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_layer: 0,
        worst_param: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (li, grad) in grads.iter().enumerate() {
        for pi in 0..grad.param_count() {
            let orig = probe.layers()[li].param(pi);
            *probe.layers_mut()[li].param_mut(pi) = orig + eps;
            let up = probe.loss_grad(x, target)?.0;
            *probe.layers_mut()[li].param_mut(pi) = orig - eps;
            let down = probe.loss_grad(x, target)?.0;
            *probe.layers_mut()[li].param_mut(pi) = orig;

            let numeric = (up - down) / (2.0 * eps);
            let analytic = grad.param(pi);
            let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst_layer = li;
                report.worst_param = pi;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, FeedbackConfig, FeedbackModel, SegNet, SegNetConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(seed: u64, side: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<f64> = (0..side * side).map(|_| rng.gen()).collect();
        Tensor::image(side, side, &px).unwrap()
    }

    fn jitter_biases<M: Model>(m: &mut M, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in m.layers_mut() {
            for b in &mut l.bias {
                *b = rng.gen_range(-0.1..0.1);
            }
        }
    }

    fn small_segnet(act: Activation, seed: u64) -> SegNet {
        let cfg = SegNetConfig {
            channels: vec![2, 3],
            activation: act,
        };
        let mut m = SegNet::new(&cfg, 1.0, seed).unwrap();
        jitter_biases(&mut m, seed + 100);
        m
    }

    #[test]
    fn segnet_gradients_match_finite_differences() {
        for seed in 0..4 {
            let m = small_segnet(Activation::Relu, seed);
            for target in [0.0, 1.0] {
                let r = grad_check(&m, &input(seed, 8), target, 1e-4).unwrap();
                assert!(r.max_rel_error < 1e-5, "seed {seed}: {r:?}");
                assert_eq!(r.checked, m.param_count());
            }
        }
    }

    #[test]
    fn feedback_gradients_match_finite_differences() {
        for seed in 0..4 {
            let cfg = FeedbackConfig {
                channels: vec![3, 4],
                activation: Activation::Relu,
            };
            let mut m = FeedbackModel::new(&cfg, 1.0, seed).unwrap();
            jitter_biases(&mut m, seed + 7);
            let r = grad_check(&m, &input(seed + 50, 8), 1.0, 1e-4).unwrap();
            assert!(r.max_rel_error < 1e-5, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn linear_model_is_near_exact() {
        let m = small_segnet(Activation::Identity, 3);
        let r = grad_check(&m, &input(9, 8), 1.0, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let m = small_segnet(Activation::Relu, 1);
        let r = grad_check_with(&m, &input(1, 8), 1.0, 1e-4, |g| {
            g[1].weight[4] = g[1].weight[4] * 1.5 + 1e-3;
        })
        .unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");
        assert_eq!((r.worst_layer, r.worst_param), (1, 4));
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let m = small_segnet(Activation::Relu, 1);
        assert!(grad_check(&m, &input(1, 8), 1.0, 0.0).is_err());
    }
}
