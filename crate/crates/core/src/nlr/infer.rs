//! Rule matching and the soft candidate preference it induces.
//!
//! For one rule set with `R` rules and `K` candidate templates:
//!
//! * `μ = softmax([cos(q, pre_i)/λ]_i ∥ b_pre)` scores rule relevance for the
//!   query `q` (previous system action for s-rules, user input for u-rules);
//! * row `i` of `ν = softmax([cos(post_i, cand_j)/λ]_j ∥ b_post)` scores
//!   candidates for rule `i`;
//! * `α_j = Σ_i μ_i ν_ij` and the output is `e = Σ_j α_j cand_j`.
//!
//! The trailing no-match entries of each softmax stand for the zero vector,
//! so any mass they receive contributes nothing to `e`.

use super::{RuleKind, RuleSet};
use crate::encoder::{tokenize, TextEncoder, Vocabulary};
use crate::error::{bail, Result};
use crate::numcore::{cosine, softmax, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

/// Embedded pre- and post-conditions of one rule set, `R × d` each.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleMemory<F> {
    pub pre_embeddings: Tensor<F>,
    pub post_embeddings: Tensor<F>,
}

impl<F: Scalar> RuleMemory<F> {
    pub fn len(&self) -> usize {
        self.pre_embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Encodes every rule's conditions with the current encoder parameters.
pub fn build_rule_memory<F: Scalar>(
    rules: &RuleSet,
    encoder: &TextEncoder,
    params: &ParamStore<F>,
    vocab: &Vocabulary,
) -> RuleMemory<F> {
    let d = encoder.dim();
    let enc = |text: &str| encoder.encode(params, vocab, &tokenize(text));
    let pre: Vec<Vec<F>> = rules.rules.iter().map(|r| enc(&r.pre)).collect();
    let post: Vec<Vec<F>> = rules.rules.iter().map(|r| enc(&r.post)).collect();
    RuleMemory {
        pre_embeddings: Tensor::from_rows(&pre, d).expect("fixed encoder width"),
        post_embeddings: Tensor::from_rows(&post, d).expect("fixed encoder width"),
    }
}

/// `softmax([cos(query, row_i)/λ]_i ∥ nomatch_bias)`; the trailing
/// `nomatch_bias.len()` entries are no-match probabilities.
pub fn match_probs<F: Scalar>(query: &[F], rows: &Tensor<F>, lambda: F, nomatch_bias: &[F]) -> Result<Vec<F>> {
    if lambda <= F::zero() {
        bail!(Argument, "matcher temperature must be positive, got {lambda}");
    }
    if rows.rows() > 0 && rows.cols() != query.len() {
        bail!(Argument, "query length {} vs memory width {}", query.len(), rows.cols());
    }
    let mut logits = Vec::with_capacity(rows.rows() + nomatch_bias.len());
    for i in 0..rows.rows() {
        logits.push(cosine(query, rows.row(i))? / lambda);
    }
    logits.extend_from_slice(nomatch_bias);
    softmax(&logits)
}

/// Rule relevance `μ` for an inferencer input.
pub fn rule_relevance<F: Scalar>(input: &[F], memory: &RuleMemory<F>, lambda: F, pre_bias: &[F]) -> Result<Vec<F>> {
    match_probs(input, &memory.pre_embeddings, lambda, pre_bias)
}

/// Rule-to-candidate affinity `ν`, one row per rule.
pub fn action_affinity<F: Scalar>(
    memory: &RuleMemory<F>,
    candidates: &Tensor<F>,
    lambda: F,
    post_bias: &[F],
) -> Result<Vec<Vec<F>>> {
    (0..memory.len())
        .map(|i| match_probs(memory.post_embeddings.row(i), candidates, lambda, post_bias))
        .collect()
}

/// `α_j = Σ_i μ_i ν_ij` over the first `k` columns of `ν`, and the mass
/// routed to the zero vector.
pub fn combine<F: Scalar>(mu: &[F], nu: &[Vec<F>], k: usize) -> Result<(Vec<F>, F)> {
    let r = nu.len();
    if mu.len() <= r {
        bail!(Argument, "μ has {} entries for {} rules; needs a no-match entry", mu.len(), r);
    }
    let mut alpha = vec![F::zero(); k];
    let mut zero_mass: F = mu[r..].iter().copied().sum();
    for (i, row) in nu.iter().enumerate() {
        if row.len() <= k {
            bail!(Argument, "ν row {i} has {} entries for {k} candidates", row.len());
        }
        for (a, &v) in alpha.iter_mut().zip(&row[..k]) {
            *a += mu[i] * v;
        }
        zero_mass += mu[i] * row[k..].iter().copied().sum::<F>();
    }
    Ok((alpha, zero_mass))
}

/// Largest deviation from the normalization identities `Σμ = 1`,
/// `Σ_j ν_ij = 1` for every rule, and `Σα + zero mass = 1`.
pub fn normalization_residual<F: Scalar>(mu: &[F], nu: &[Vec<F>], k: usize) -> f64 {
    let dev = |xs: &[F]| (xs.iter().map(|x| x.as_f64()).sum::<f64>() - 1.0).abs();
    let mut worst = dev(mu);
    for row in nu {
        worst = worst.max(dev(row));
    }
    match combine(mu, nu, k) {
        Ok((alpha, zero)) => worst.max((alpha.iter().map(|x| x.as_f64()).sum::<f64>() + zero.as_f64() - 1.0).abs()),
        Err(_) => f64::INFINITY,
    }
}

/// `Σ_j α_j · candidate_j`.
pub fn expected_action<F: Scalar>(alpha: &[F], candidates: &Tensor<F>) -> Result<Vec<F>> {
    if alpha.len() != candidates.rows() {
        bail!(Argument, "{} weights for {} candidates", alpha.len(), candidates.rows());
    }
    let mut e = vec![F::zero(); candidates.cols()];
    for (j, &a) in alpha.iter().enumerate() {
        for (x, &c) in e.iter_mut().zip(candidates.row(j)) {
            *x += a * c;
        }
    }
    Ok(e)
}

/// How many no-match logits each matching softmax carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoMatchBias {
    /// One bias per softmax: two per rule set.
    #[default]
    PerMatch,
    /// Two biases per softmax: four per rule set.
    DoublePerMatch,
}

impl NoMatchBias {
    pub fn count(self) -> usize {
        match self {
            NoMatchBias::PerMatch => 1,
            NoMatchBias::DoublePerMatch => 2,
        }
    }
}

/// Temperature and no-match biases of one rule set.
#[derive(Clone, Copy, Debug)]
pub struct MatcherParams {
    /// `ln λ`; keeps `λ` positive.
    pub log_lambda: ParamId,
    pub pre_bias: ParamId,
    pub post_bias: ParamId,
}

pub const LAMBDA_INIT: f64 = 0.1;

impl MatcherParams {
    pub fn register<F: Scalar>(params: &mut ParamStore<F>, prefix: &str, biases: NoMatchBias) -> Result<Self> {
        let n = biases.count();
        Ok(Self {
            log_lambda: params.add(format!("{prefix}.log_lambda"), Tensor::scalar(F::lit(LAMBDA_INIT.ln())))?,
            pre_bias: params.add(format!("{prefix}.pre_nomatch"), Tensor::zeros(&[n]))?,
            post_bias: params.add(format!("{prefix}.post_nomatch"), Tensor::zeros(&[n]))?,
        })
    }

    pub fn lambda<F: Scalar>(&self, params: &ParamStore<F>) -> F {
        params.value(self.log_lambda).data()[0].exp()
    }
}

/// Both rule sets' matcher parameters.
#[derive(Clone, Copy, Debug)]
pub struct NlrParams {
    pub s: MatcherParams,
    pub u: MatcherParams,
}

impl NlrParams {
    pub fn register<F: Scalar>(params: &mut ParamStore<F>, biases: NoMatchBias) -> Result<Self> {
        Ok(Self {
            s: MatcherParams::register(params, "nlr.s", biases)?,
            u: MatcherParams::register(params, "nlr.u", biases)?,
        })
    }

    pub fn get(&self, kind: RuleKind) -> &MatcherParams {
        match kind {
            RuleKind::System => &self.s,
            RuleKind::User => &self.u,
        }
    }
}

/// Rule memory as tape nodes.
#[derive(Clone, Debug, Default)]
pub struct TapeMemory {
    pub pre: Vec<Var>,
    pub post: Vec<Var>,
}

/// Tape nodes of one rule set's inference, kept for inspection.
#[derive(Clone, Debug)]
pub struct RuleSetTrace {
    pub mu: Var,
    pub nu: Vec<Var>,
    pub alpha: Var,
    pub expected: Var,
}

/// Differentiable `match_probs`. `inv_lambda` is a length-1 node holding `1/λ`.
pub fn match_on_tape<F: Scalar>(tape: &mut Tape<F>, query: Var, rows: &[Var], inv_lambda: Var, bias: Var) -> Var {
    let mut logits = Vec::with_capacity(rows.len() + 1);
    for &row in rows {
        let c = tape.cosine(query, row);
        logits.push(tape.scale(c, inv_lambda));
    }
    logits.push(bias);
    let all = tape.concat(&logits);
    tape.softmax(all)
}

/// Runs one rule set against `query` and the candidates, producing the
/// expected action embedding of width `dim`.
pub fn infer_rule_set<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamStore<F>,
    matcher: &MatcherParams,
    query: Var,
    memory: &TapeMemory,
    candidates: &[Var],
    dim: usize,
) -> RuleSetTrace {
    let log_lambda = tape.param(params, matcher.log_lambda);
    let neg = tape.neg(log_lambda);
    let inv_lambda = tape.exp(neg);
    let pre_bias = tape.param(params, matcher.pre_bias);
    let post_bias = tape.param(params, matcher.post_bias);

    let r = memory.pre.len();
    let k = candidates.len();
    let mu = match_on_tape(tape, query, &memory.pre, inv_lambda, pre_bias);
    let nu: Vec<Var> = memory
        .post
        .iter()
        .map(|&post| match_on_tape(tape, post, candidates, inv_lambda, post_bias))
        .collect();
    let mu_rules = tape.slice(mu, 0, r);
    let nu_cands: Vec<Var> = nu.iter().map(|&row| tape.slice(row, 0, k)).collect();
    let alpha = tape.weighted_sum(mu_rules, &nu_cands, k);
    let expected = tape.weighted_sum(alpha, candidates, dim);
    if cfg!(debug_assertions) {
        let nu_vals: Vec<Vec<F>> = nu.iter().map(|&v| tape.value(v).to_vec()).collect();
        let residual = normalization_residual(tape.value(mu), &nu_vals, k);
        debug_assert!(residual < 1e-9, "NLR normalization violated by {residual}");
    }
    RuleSetTrace { mu, nu, alpha, expected }
}

/// Output of the inferencer for one turn.
#[derive(Clone, Debug)]
pub struct NlrOutput {
    /// `e_s ∥ e_u`, width `2·dim`.
    pub features: Var,
    pub s: Option<RuleSetTrace>,
    pub u: Option<RuleSetTrace>,
}

/// Concatenated expected-action embeddings of both rule sets. A `None`
/// memory marks a disabled rule set whose half is a zero vector.
#[allow(clippy::too_many_arguments)]
pub fn nlr_features<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamStore<F>,
    nlr: &NlrParams,
    prev_sys: Var,
    user: Var,
    s_memory: Option<&TapeMemory>,
    u_memory: Option<&TapeMemory>,
    candidates: &[Var],
    dim: usize,
) -> NlrOutput {
    let s = s_memory.map(|m| infer_rule_set(tape, params, &nlr.s, prev_sys, m, candidates, dim));
    let u = u_memory.map(|m| infer_rule_set(tape, params, &nlr.u, user, m, candidates, dim));
    let es = match &s {
        Some(t) => t.expected,
        None => tape.zeros(dim),
    };
    let eu = match &u {
        Some(t) => t.expected,
        None => tape.zeros(dim),
    };
    let features = tape.concat(&[es, eu]);
    NlrOutput { features, s, u }
}
