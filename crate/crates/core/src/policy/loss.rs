use super::{DpoExample, PolicyError, ReferencePolicy, SftExample, ToyPolicy};
use crate::nn::{sigmoid, softplus};

/// Value and full parameter gradient of a batch objective.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean over examples of the per-token negative log-likelihood
/// `−(1/T)·log π(tokens)`, with `T` the number of predicted tokens.
pub fn sft_loss(policy: &ToyPolicy, batch: &[SftExample]) -> Result<LossOutput, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut grad = vec![0.0; policy.param_count()];
    let mut loss = 0.0;
    let n = batch.len() as f64;
    for ex in batch {
        let steps = (ex.tokens.len() - 1) as f64;
        let lp = policy.accumulate_logprob_grad(&ex.features, &ex.tokens, -1.0 / (steps * n), &mut grad)?;
        loss -= lp / (steps * n);
    }
    Ok(LossOutput { loss, grad })
}

/// Per-example DPO statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoTerms {
    pub chosen_logprob: f64,
    pub rejected_logprob: f64,
    pub ref_chosen_logprob: f64,
    pub ref_rejected_logprob: f64,
}

impl DpoTerms {
    pub fn compute(policy: &ToyPolicy, reference: &ToyPolicy, ex: &DpoExample) -> Result<Self, PolicyError> {
        Ok(Self {
            chosen_logprob: policy.sequence_logprob(&ex.features, &ex.chosen)?,
            rejected_logprob: policy.sequence_logprob(&ex.features, &ex.rejected)?,
            ref_chosen_logprob: reference.sequence_logprob(&ex.features, &ex.chosen)?,
            ref_rejected_logprob: reference.sequence_logprob(&ex.features, &ex.rejected)?,
        })
    }

    /// `(log π(y_w) − log π_ref(y_w)) − (log π(y_l) − log π_ref(y_l))`.
    pub fn log_ratio_difference(&self) -> f64 {
        (self.chosen_logprob - self.ref_chosen_logprob) - (self.rejected_logprob - self.ref_rejected_logprob)
    }

    /// `log π(y_w) − log π(y_l)` under the trained policy.
    pub fn margin(&self) -> f64 {
        self.chosen_logprob - self.rejected_logprob
    }
}

/// `−log σ(β·Δ)` where `Δ` is the chosen-minus-rejected log-ratio difference.
pub fn dpo_objective(log_ratio_difference: f64, beta: f64) -> f64 {
    softplus(-beta * log_ratio_difference)
}

/// Mean DPO loss over the batch with its gradient with respect to the
/// policy parameters; the reference contributes constants only.
pub fn dpo_loss(
    policy: &ToyPolicy,
    reference: &ReferencePolicy,
    batch: &[DpoExample],
    beta: f64,
) -> Result<LossOutput, PolicyError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(PolicyError::Config(format!("DPO beta must be positive, got {beta}")));
    }
    if batch.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; policy.param_count()];
    let mut loss = 0.0;
    for ex in batch {
        let terms = DpoTerms::compute(policy, reference, ex)?;
        let z = beta * terms.log_ratio_difference();
        loss += softplus(-z) / n;
        // d softplus(−z)/dz = −σ(−z)
        let dz = -sigmoid(-z) * beta / n;
        policy.accumulate_logprob_grad(&ex.features, &ex.chosen, dz, &mut grad)?;
        policy.accumulate_logprob_grad(&ex.features, &ex.rejected, -dz, &mut grad)?;
    }
    Ok(LossOutput { loss, grad })
}

/// Mean `log π(y_w) − log π(y_l)` over a batch.
pub fn mean_margin(policy: &ToyPolicy, batch: &[DpoExample]) -> Result<f64, PolicyError> {
    let mut total = 0.0;
    for ex in batch {
        total += policy.sequence_logprob(&ex.features, &ex.chosen)? - policy.sequence_logprob(&ex.features, &ex.rejected)?;
    }
    Ok(total / batch.len().max(1) as f64)
}
