//! Natural-language rule inference.

mod infer;
mod rules;

pub use infer::{
    action_affinity, build_rule_memory, combine, expected_action, infer_rule_set, match_on_tape, match_probs,
    nlr_features, normalization_residual, rule_relevance, MatcherParams, NlrOutput, NlrParams, NoMatchBias, RuleMemory, RuleSetTrace,
    TapeMemory, LAMBDA_INIT,
};
pub use rules::{load_rules, parse_rules, Rule, RuleBook, RuleKind, RuleSet};
