use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::jury::{cross_evaluate, fan_out, ExpertClient, ImageRef, JurorFailure, JuryOptions, PromptSet};

/// One explanation produced by a model under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeItem {
    pub model: String,
    pub image: ImageRef,
    pub label: Label,
    pub explanation: String,
    /// Corrected reference explanation shown to the judges when present.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeBatchReport {
    /// juror → model → mean score.
    pub per_juror: BTreeMap<String, BTreeMap<String, f64>>,
    /// Mean over all juror scores of a model.
    pub per_model: BTreeMap<String, f64>,
    /// Models by descending mean score, ties by name.
    pub ranking: Vec<(String, f64)>,
    pub failures: Vec<JurorFailure>,
}

/// Every juror scores every explanation on the 1–5 scale.
pub fn judge_score_batch(
    items: &[JudgeItem],
    jurors: &[Box<dyn ExpertClient>],
    prompts: &PromptSet,
    opts: &JuryOptions,
) -> JudgeBatchReport {
    let judges: Vec<&dyn ExpertClient> = jurors.iter().map(|b| b.as_ref()).collect();
    let evals = fan_out(items, opts.parallelism, |it| {
        let shown = match &it.reference {
            Some(r) => format!("{}\nReference: {r}", it.explanation),
            None => it.explanation.clone(),
        };
        cross_evaluate(&it.image, it.label, &shown, &judges, prompts, &opts.retry)
    });
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    let mut model_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (it, ev) in items.iter().zip(evals) {
        failures.extend(ev.failures);
        for (juror, s) in ev.judge_scores {
            let e = sums.entry((juror, it.model.clone())).or_default();
            e.0 += s;
            e.1 += 1;
            let m = model_sums.entry(it.model.clone()).or_default();
            m.0 += s;
            m.1 += 1;
        }
    }
    let mut per_juror: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((juror, model), (s, n)) in sums {
        per_juror.entry(juror).or_default().insert(model, s / n as f64);
    }
    let per_model: BTreeMap<String, f64> = model_sums.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect();
    let mut ranking: Vec<(String, f64)> = per_model.iter().map(|(m, s)| (m.clone(), *s)).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    JudgeBatchReport { per_juror, per_model, ranking, failures }
}
