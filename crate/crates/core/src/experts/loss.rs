use crate::data::Label;
use crate::nn::{sigmoid, softplus};

use super::ExpertLogits;

/// Two-class cross-entropy `−ln softmax(logits)[label]` and its gradient
/// with respect to `(logit_real, logit_fake)`.
pub fn bce_loss(logits: ExpertLogits, label: Label) -> (f64, [f64; 2]) {
    let z = logits.as_array();
    let (y, other) = (label.index(), 1 - label.index());
    // With two classes the loss is softplus of the logit gap.
    let gap = z[other] - z[y];
    let p_other = sigmoid(gap);
    let mut grad = [0.0; 2];
    grad[other] = p_other;
    grad[y] = -p_other;
    (softplus(gap), grad)
}

pub fn mean_bce_loss(samples: &[(ExpertLogits, Label)]) -> f64 {
    samples.iter().map(|(l, y)| bce_loss(*l, *y).0).sum::<f64>() / samples.len() as f64
}
