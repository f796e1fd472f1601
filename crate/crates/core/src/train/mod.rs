//! Optimization, evaluation, ablations and learning curves.

mod config;
mod fit;
mod harness;
mod metrics;

pub use config::{TrainConfig, UpdateMode, Variant};
pub use fit::{
    active_rules, build_vocabulary, evaluate_split, fit, fit_model, init_model, training_subset, EpochRecord, FitOutput,
    TrainHistory,
};
pub use harness::{
    ablate, history_jsonl, learning_curve, write_json, AblationReport, AblationRow, CurvePoint, CurveReport, CurveRow,
    DEFAULT_SEEDS,
};
pub use metrics::{evaluate, gold_rank, gold_ranks, turn_loss, EvalReport, PROB_FLOOR};
