use super::{PolicyError, ToyPolicy, Vocabulary};
use crate::data::Label;
use crate::nn::argmax;

/// Output of greedy decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Starts with `<bos>`; ends with `<eos>` unless `max_len` was hit.
    pub tokens: Vec<usize>,
    /// `step_logits[k]` are the logits that produced `tokens[k + 1]`.
    pub step_logits: Vec<Vec<f64>>,
    /// Index into `tokens` of the emitted `real`/`fake` token, if any step
    /// produced one.
    pub verdict_position: Option<usize>,
}

impl Decoded {
    /// Logits at the verdict position, or at the first generated step when
    /// no verdict token was produced.
    pub fn verdict_logits(&self) -> &[f64] {
        let step = self.verdict_position.map_or(0, |p| p - 1);
        &self.step_logits[step]
    }

    /// `(logit_real, logit_fake)` at the verdict position.
    pub fn verdict_pair(&self, vocab: &Vocabulary) -> (f64, f64) {
        let l = self.verdict_logits();
        (l[vocab.real()], l[vocab.fake()])
    }

    /// The label the policy itself emits: the higher of the two verdict
    /// logits, ties resolving to real.
    pub fn policy_verdict(&self, vocab: &Vocabulary) -> Label {
        let (r, f) = self.verdict_pair(vocab);
        if f > r { Label::Fake } else { Label::Real }
    }

    pub fn text(&self, vocab: &Vocabulary) -> String {
        vocab.decode(&self.tokens)
    }
}

/// Argmax decoding from `<bos>` until `<eos>` or `max_len` tokens.
pub fn greedy_decode(policy: &ToyPolicy, vocab: &Vocabulary, features: &[f64], max_len: usize) -> Result<Decoded, PolicyError> {
    decode_with_verdict(policy, vocab, features, max_len, |logits| {
        if logits[vocab.fake()] > logits[vocab.real()] { Label::Fake } else { Label::Real }
    })
}

/// Greedy decoding where the first step whose argmax is `real` or `fake`
/// emits the label chosen by `verdict` instead; later steps continue from
/// that token.
pub fn decode_with_verdict(
    policy: &ToyPolicy,
    vocab: &Vocabulary,
    features: &[f64],
    max_len: usize,
    verdict: impl FnOnce(&[f64]) -> Label,
) -> Result<Decoded, PolicyError> {
    if max_len < 2 {
        return Err(PolicyError::Config(format!("max_len must be at least 2, got {max_len}")));
    }
    if policy.vocab_size() != vocab.len() {
        return Err(PolicyError::Shape(format!(
            "policy has {} outputs but vocabulary has {} tokens",
            policy.vocab_size(),
            vocab.len()
        )));
    }
    policy.check_features(features)?;
    let c = policy.context(features);
    let mut tokens = vec![vocab.bos()];
    let mut step_logits = Vec::new();
    let mut verdict_position = None;
    let mut verdict = Some(verdict);
    while tokens.len() < max_len {
        let logits = policy.next_logits(&c, *tokens.last().unwrap());
        let mut next = argmax(&logits);
        if verdict_position.is_none() && (next == vocab.real() || next == vocab.fake()) {
            let label = (verdict.take().expect("verdict chosen once"))(&logits);
            next = match label {
                Label::Real => vocab.real(),
                Label::Fake => vocab.fake(),
            };
            verdict_position = Some(tokens.len());
        }
        step_logits.push(logits);
        tokens.push(next);
        if next == vocab.eos() {
            break;
        }
    }
    Ok(Decoded { tokens, step_logits, verdict_position })
}
