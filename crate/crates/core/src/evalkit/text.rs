//! Single-reference caption metrics over whitespace tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Lowercase, split on whitespace, strip trailing ASCII punctuation; tokens
/// that become empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase().trim_end_matches(|c: char| c.is_ascii_punctuation()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Clipped unigram precision times the brevity penalty. Empty hypothesis
/// or reference scores 0.
pub fn bleu1(hypothesis: &str, reference: &str) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let rc = counts(&r);
    let clipped: usize = counts(&h).iter().map(|(w, &c)| c.min(rc.get(w).copied().unwrap_or(0))).sum();
    let precision = clipped as f64 / h.len() as f64;
    let bp = (1.0 - r.len() as f64 / h.len() as f64).exp().min(1.0);
    precision * bp
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// F1 of LCS precision and recall.
pub fn rouge_l(hypothesis: &str, reference: &str) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    let lcs = lcs_len(&h, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / h.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Exact-match METEOR. Each hypothesis token, left to right, aligns to the
/// earliest unused identical reference token.
pub fn meteor(hypothesis: &str, reference: &str) -> f64 {
    let (h, r) = (tokenize(hypothesis), tokenize(reference));
    let mut used = vec![false; r.len()];
    let mut alignment: Vec<(usize, usize)> = Vec::new();
    for (i, w) in h.iter().enumerate() {
        if let Some(j) = (0..r.len()).find(|&j| !used[j] && &r[j] == w) {
            used[j] = true;
            alignment.push((i, j));
        }
    }
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + alignment.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count();
    let p = m as f64 / h.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

const CIDER_N: usize = 4;

fn ngrams(tokens: &[String], n: usize) -> HashMap<Vec<String>, f64> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w.to_vec()).or_insert(0.0) += 1.0;
    }
    m
}

/// CIDEr with document frequencies taken from a reference corpus.
#[derive(Debug, Clone)]
pub struct CiderScorer {
    docs: f64,
    df: Vec<HashMap<Vec<String>, f64>>,
}

impl CiderScorer {
    /// Each corpus entry is the reference set of one sample.
    pub fn new(corpus: &[Vec<String>]) -> Result<Self, EvalError> {
        if corpus.is_empty() {
            return Err(EvalError::Empty("CIDEr corpus"));
        }
        let mut df = vec![HashMap::new(); CIDER_N];
        for refs in corpus {
            let toks: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
            for (n, table) in df.iter_mut().enumerate() {
                let mut seen = std::collections::HashSet::new();
                for t in &toks {
                    seen.extend(ngrams(t, n + 1).into_keys());
                }
                for g in seen {
                    *table.entry(g).or_insert(0.0) += 1.0;
                }
            }
        }
        Ok(Self { docs: corpus.len() as f64, df })
    }

    // Smoothed so that n-grams present in every document keep a positive weight.
    fn idf(&self, n: usize, g: &[String]) -> f64 {
        let df = self.df[n].get(g).copied().unwrap_or(0.0);
        ((1.0 + self.docs) / (1.0 + df)).ln() + 1.0
    }

    fn vector(&self, tokens: &[String], n: usize) -> HashMap<Vec<String>, f64> {
        let grams = ngrams(tokens, n + 1);
        let total: f64 = grams.values().sum();
        grams
            .into_iter()
            .map(|(g, c)| {
                let w = c / total * self.idf(n, &g);
                (g, w)
            })
            .collect()
    }

    /// `10 × mean_n cos(tfidf_n(hyp), tfidf_n(ref))`, averaged over references.
    pub fn score(&self, hypothesis: &str, references: &[String]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let h = tokenize(hypothesis);
        let mut total = 0.0;
        for r in references {
            let r = tokenize(r);
            let mut sum = 0.0;
            for n in 0..CIDER_N {
                sum += cosine(&self.vector(&h, n), &self.vector(&r, n));
            }
            total += 10.0 * sum / CIDER_N as f64;
        }
        total / references.len() as f64
    }
}

fn cosine(a: &HashMap<Vec<String>, f64>, b: &HashMap<Vec<String>, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).min(1.0)
    }
}

pub fn cider(hypothesis: &str, references: &[String], corpus: &[Vec<String>]) -> Result<f64, EvalError> {
    Ok(CiderScorer::new(corpus)?.score(hypothesis, references))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub bleu1: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextMetricsReport {
    pub per_sample: Vec<SampleScores>,
    pub mean: SampleScores,
}

/// Scores each hypothesis against its single reference; the references
/// double as the CIDEr corpus.
pub fn text_metrics(hypotheses: &[String], references: &[String]) -> Result<TextMetricsReport, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch(hypotheses.len(), references.len()));
    }
    let corpus: Vec<Vec<String>> = references.iter().map(|r| vec![r.clone()]).collect();
    let scorer = CiderScorer::new(&corpus)?;
    let per_sample: Vec<SampleScores> = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| SampleScores {
            bleu1: bleu1(h, r),
            rouge_l: rouge_l(h, r),
            meteor: meteor(h, r),
            cider: scorer.score(h, std::slice::from_ref(r)),
        })
        .collect();
    let n = per_sample.len() as f64;
    let mut mean = SampleScores::default();
    for s in &per_sample {
        mean.bleu1 += s.bleu1 / n;
        mean.rouge_l += s.rouge_l / n;
        mean.meteor += s.meteor / n;
        mean.cider += s.cider / n;
    }
    Ok(TextMetricsReport { per_sample, mean })
}
