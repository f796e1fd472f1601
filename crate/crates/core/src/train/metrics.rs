use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ProcessedDialog;
use crate::error::{bail, Result};
use crate::model::{ActiveRules, CandidateMode, Model, TemplateCatalog};
use crate::numcore::Scalar;

/// Floor applied to the gold probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln max(p[gold], 1e-12)`.
pub fn turn_loss<F: Scalar>(distribution: &[F], gold_index: usize) -> Result<F> {
    if gold_index >= distribution.len() {
        bail!(Argument, "gold index {gold_index} outside distribution of {}", distribution.len());
    }
    Ok(-distribution[gold_index].max(F::lit(PROB_FLOOR)).ln())
}

/// Zero-based rank of the gold candidate. Candidates tied with the gold
/// score rank ahead of it when their template id is lower.
pub fn gold_rank<F: Scalar>(scores: &[F], candidates: &[usize], gold_index: usize) -> usize {
    let g = scores[gold_index];
    let gid = candidates[gold_index];
    scores
        .iter()
        .zip(candidates)
        .filter(|&(&s, &id)| s > g || (s == g && id < gid))
        .count()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: Option<String>,
    pub recall_at_1: f64,
    pub recall_at_2: f64,
    pub recall_at_5: f64,
    pub turns: usize,
}

impl EvalReport {
    /// Recall@1/2/5 from gold ranks.
    pub fn from_ranks(domain: Option<String>, ranks: &[usize]) -> Self {
        let n = ranks.len();
        let recall = |k: usize| {
            if n == 0 {
                0.0
            } else {
                ranks.iter().filter(|&&r| r < k).count() as f64 / n as f64
            }
        };
        Self { domain, recall_at_1: recall(1), recall_at_2: recall(2), recall_at_5: recall(5), turns: n }
    }
}

/// Gold ranks of every turn, dialogs processed in parallel.
pub fn gold_ranks<F: Scalar>(
    model: &Model<F>,
    dialogs: &[ProcessedDialog],
    catalog: &TemplateCatalog,
    rules: ActiveRules<'_>,
    mode: CandidateMode,
) -> Result<Vec<usize>> {
    let per_dialog: Vec<Result<Vec<usize>>> = dialogs
        .par_iter()
        .map(|d| {
            let mut session = model.session(rules);
            let steps = session.run_dialog(&d.turns, catalog, mode)?;
            Ok(steps
                .iter()
                .map(|s| gold_rank(session.tape.value(s.trace.logits), &s.candidates, s.gold_index))
                .collect())
        })
        .collect();
    let mut ranks = Vec::new();
    for r in per_dialog {
        ranks.extend(r?);
    }
    Ok(ranks)
}

pub fn evaluate<F: Scalar>(
    model: &Model<F>,
    dialogs: &[ProcessedDialog],
    catalog: &TemplateCatalog,
    rules: ActiveRules<'_>,
    mode: CandidateMode,
    domain: Option<String>,
) -> Result<EvalReport> {
    Ok(EvalReport::from_ranks(domain, &gold_ranks(model, dialogs, catalog, rules, mode)?))
}
