//! Double-precision convolutional models for patch classification and weak
//! segmentation, trained with image-level labels only.

mod cascade;
mod feedback;
mod gradcheck;
mod layers;
mod segnet;
mod tensor;
mod train;
mod weights;

pub use cascade::cascade;
pub use feedback::{feedback_segment, FeedbackConfig, FeedbackModel, Footprint, Gates};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use layers::{
    bce, bce_logit, max_pool2, max_pool2_backward, max_unpool2, max_unpool2_backward, sigmoid,
    Activation, Conv2d,
};
pub use segnet::{SegNet, SegNetConfig, SegNetOutput};
pub use tensor::Tensor;
pub use train::{accuracy, patch_samples, train, train_samples, Optimizer, TrainConfig, TrainReport};
pub use weights::{read_models, write_models, ModelBundle};

use crate::error::Result;

/// A binary image classifier with trainable convolution layers.
pub trait Model {
    fn layers(&self) -> &[Conv2d];
    fn layers_mut(&mut self) -> &mut [Conv2d];

    /// Probability that the input shows a building.
    fn score(&self, x: &Tensor) -> Result<f64>;

    /// Binary cross-entropy against `target` in {0, 1}, the score, and the
    /// loss gradient for every layer (same shapes as [`Model::layers`]).
    fn loss_grad(&self, x: &Tensor, target: f64) -> Result<(f64, f64, Vec<Conv2d>)>;

    fn mark_trained(&mut self, _epochs: usize) {}

    fn param_count(&self) -> usize {
        self.layers().iter().map(Conv2d::param_count).sum()
    }
}
