use super::{PolicyError, Vocabulary};

fn check_sequence(tokens: &[usize], vocab: &Vocabulary, what: &str) -> Result<(), PolicyError> {
    if tokens.len() < 3 {
        return Err(PolicyError::BadSequence(format!("{what} has {} tokens, need at least 3", tokens.len())));
    }
    if tokens[0] != vocab.bos() || *tokens.last().unwrap() != vocab.eos() {
        return Err(PolicyError::BadSequence(format!("{what} must start with <bos> and end with <eos>")));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= vocab.len()) {
        return Err(PolicyError::UnknownToken(t));
    }
    Ok(())
}

/// Visual features paired with a target explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub features: Vec<f64>,
    pub tokens: Vec<usize>,
}

impl SftExample {
    pub fn new(features: Vec<f64>, tokens: Vec<usize>, vocab: &Vocabulary) -> Result<Self, PolicyError> {
        check_sequence(&tokens, vocab, "target")?;
        Ok(Self { features, tokens })
    }

    pub fn from_text(features: Vec<f64>, text: &str, vocab: &Vocabulary) -> Result<Self, PolicyError> {
        Self::new(features, vocab.encode(text)?, vocab)
    }
}

/// Visual features with a preferred and a dispreferred explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct DpoExample {
    pub features: Vec<f64>,
    pub chosen: Vec<usize>,
    pub rejected: Vec<usize>,
}

impl DpoExample {
    pub fn new(features: Vec<f64>, chosen: Vec<usize>, rejected: Vec<usize>, vocab: &Vocabulary) -> Result<Self, PolicyError> {
        check_sequence(&chosen, vocab, "chosen")?;
        check_sequence(&rejected, vocab, "rejected")?;
        if chosen == rejected {
            return Err(PolicyError::BadSequence("chosen and rejected are identical".into()));
        }
        Ok(Self { features, chosen, rejected })
    }

    pub fn from_text(features: Vec<f64>, chosen: &str, rejected: &str, vocab: &Vocabulary) -> Result<Self, PolicyError> {
        Self::new(features, vocab.encode(chosen)?, vocab.encode(rejected)?, vocab)
    }
}
