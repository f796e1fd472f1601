use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, UpdateMode, Variant};
use super::metrics::{evaluate, EvalReport, PROB_FLOOR};
use crate::data::{resample_candidates, DomainDataset, ProcessedDialog, Split};
use crate::encoder::{load_word_vectors, tokenize, Vocabulary};
use crate::error::{bail, Result};
use crate::model::{ActiveRules, CandidateMode, Model};
use crate::nlr::RuleBook;
use crate::numcore::{clip_global_norm, AdamState, SeededRng, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean turn loss over the epoch.
    pub train_loss: f64,
    /// Recall@1 on the selection split.
    pub dev_recall_at_1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned parameters.
    pub best_epoch: usize,
    /// Wall time per epoch in seconds; not part of the metric files.
    #[serde(skip)]
    pub wall_seconds: Vec<f64>,
}

pub struct FitOutput {
    pub model: Model<f64>,
    pub history: TrainHistory,
    /// Fraction of vocabulary covered by the word-vector file (WE only).
    pub vector_coverage: Option<f64>,
}

pub fn active_rules(variant: Variant, rules: &RuleBook) -> ActiveRules<'_> {
    ActiveRules::select(rules, variant.uses_s(), variant.uses_u())
}

/// Vocabulary from slot placeholders, train user texts, all catalog
/// templates and all rule texts.
pub fn build_vocabulary(ds: &DomainDataset, train: &[ProcessedDialog], rules: &RuleBook) -> Result<Vocabulary> {
    let mut v = Vocabulary::with_slots(&ds.schema.slot_types)?;
    for t in train.iter().flat_map(|d| &d.turns) {
        v.extend(&tokenize(&t.user_text));
    }
    for text in ds.catalog.texts() {
        v.extend(&tokenize(text));
    }
    for text in rules.texts() {
        v.extend(&tokenize(text));
    }
    Ok(v)
}

/// Train dialogs used by `cfg`: the whole split, or the first
/// `train_size` dialogs of a seeded shuffle.
pub fn training_subset(cfg: &TrainConfig, ds: &DomainDataset) -> Result<Vec<ProcessedDialog>> {
    match cfg.train_size {
        None => Ok(ds.train.clone()),
        Some(n) if n > ds.train.len() => {
            bail!(Argument, "train size {n} exceeds the {} train dialogs", ds.train.len())
        }
        Some(n) => {
            let mut idx: Vec<usize> = (0..ds.train.len()).collect();
            idx.shuffle(&mut SeededRng::new(cfg.seed).derive("train-subset"));
            Ok(idx[..n].iter().map(|&i| ds.train[i].clone()).collect())
        }
    }
}

fn eval_mode(cfg: &TrainConfig) -> CandidateMode {
    if cfg.full_catalog {
        CandidateMode::FullCatalog
    } else {
        CandidateMode::Sampled
    }
}

/// Fresh model for `cfg`, reading word vectors for the WE encoder.
pub fn init_model(cfg: &TrainConfig, ds: &DomainDataset, train: &[ProcessedDialog], rules: &RuleBook) -> Result<(Model<f64>, Option<f64>)> {
    let vocab = build_vocabulary(ds, train, rules)?;
    let (pretrained, coverage) = match (&cfg.model.encoder, &cfg.word_vectors) {
        (crate::model::EncoderKind::WordVectors, Some(path)) => {
            let mut rng = SeededRng::new(cfg.seed).derive("word-vectors");
            let loaded = load_word_vectors(path, &vocab, cfg.model.word_dim, &mut rng)?;
            (Some(loaded.table), Some(loaded.coverage))
        }
        _ => (None, None),
    };
    let model = Model::new(cfg.model.clone(), vocab, ds.schema.slot_types.clone(), pretrained, cfg.seed)?;
    Ok((model, coverage))
}

/// Summed turn loss of one dialog on a fresh tape, with gradients
/// accumulated into the model's store. Returns (loss, turns).
fn dialog_update(model: &mut Model<f64>, dialog: &ProcessedDialog, ds: &DomainDataset, rules: ActiveRules<'_>) -> Result<(f64, usize)> {
    let mut session = model.session(rules);
    let steps = session.run_dialog(&dialog.turns, &ds.catalog, CandidateMode::Sampled)?;
    if steps.is_empty() {
        return Ok((0.0, 0));
    }
    let losses: Vec<Var> =
        steps.iter().map(|s| session.tape.neg_log_pick(s.trace.probs, s.gold_index, PROB_FLOOR)).collect();
    let total = session.tape.sum(&losses);
    let loss = session.tape.scalar(total);
    if !loss.is_finite() {
        let at = session.tape.first_non_finite();
        bail!(Numeric, "non-finite loss in dialog {:?}: first non-finite node {at:?}", dialog.id);
    }
    let tape = std::mem::take(&mut session.tape);
    drop(session);
    tape.backward(total, &mut model.params)?;
    Ok((loss, steps.len()))
}

fn turn_updates(
    model: &mut Model<f64>,
    dialog: &ProcessedDialog,
    ds: &DomainDataset,
    rules: ActiveRules<'_>,
    opt: &mut AdamState<f64>,
    clip: f64,
) -> Result<(f64, usize)> {
    let mut state = model.initial_state();
    let mut sum = 0.0;
    for t in &dialog.turns {
        let mut session = model.session(rules);
        let mut ts = session.state_from(&state);
        let trace = session.turn(&mut ts, &t.user_text, &t.mentions, &t.candidate_ids, &ds.catalog)?;
        let l = session.tape.neg_log_pick(trace.probs, t.gold_index, PROB_FLOOR);
        let loss = session.tape.scalar(l);
        if !loss.is_finite() {
            bail!(Numeric, "non-finite loss in dialog {:?} turn {}", dialog.id, t.turn_index);
        }
        state.h = session.tape.value(ts.h).to_vec();
        state.c = session.tape.value(ts.c).to_vec();
        state.entities = ts.entities;
        state.observe_system_action(&t.system_text);
        let tape = std::mem::take(&mut session.tape);
        drop(session);
        tape.backward(l, &mut model.params)?;
        clip_global_norm(model.params.trainable_grads_mut(), clip)?;
        opt.step(&mut model.params)?;
        sum += loss;
    }
    Ok((sum, dialog.turns.len()))
}

/// Trains `model` in place and restores the parameters of the best epoch.
/// `on_epoch` sees each record as it is produced.
pub fn fit_model(
    cfg: &TrainConfig,
    model: &mut Model<f64>,
    ds: &DomainDataset,
    train: &[ProcessedDialog],
    rules: &RuleBook,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    let active = active_rules(cfg.variant, rules);
    let mut train = train.to_vec();
    let mut opt = AdamState::new(&model.params, cfg.lr);
    let mut order_rng = SeededRng::new(cfg.seed).derive("epoch-order");
    let mut resample_rng = SeededRng::new(cfg.seed).derive("resample");
    let allow_small = ds.catalog.len() < crate::data::NUM_CANDIDATES;
    let select: &[ProcessedDialog] = if cfg.select_on == Split::Train { &[] } else { ds.split(cfg.select_on) };

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, crate::numcore::ParamStore<f64>)> = None;
    let mut since_best = 0usize;
    model.params.zero_grads();
    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        if cfg.resample_per_epoch && epoch > 0 {
            resample_candidates(&mut train, ds.catalog.len(), allow_small, &mut resample_rng)?;
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut turns) = (0.0, 0usize);
        for &i in &order {
            let (l, n) = match cfg.update {
                UpdateMode::Dialog => {
                    let r = dialog_update(model, &train[i], ds, active)?;
                    if r.1 > 0 {
                        clip_global_norm(model.params.trainable_grads_mut(), cfg.clip_norm)?;
                        opt.step(&mut model.params)?;
                    }
                    r
                }
                UpdateMode::Turn => turn_updates(model, &train[i], ds, active, &mut opt, cfg.clip_norm)?,
            };
            loss_sum += l;
            turns += n;
        }
        let selection = if cfg.select_on == Split::Train { &train[..] } else { select };
        let report = evaluate(model, selection, &ds.catalog, active, eval_mode(cfg), None)?;
        let record = EpochRecord {
            epoch,
            train_loss: if turns == 0 { 0.0 } else { loss_sum / turns as f64 },
            dev_recall_at_1: report.recall_at_1,
        };
        log::info!("epoch {epoch}: loss {:.4}, {} recall@1 {:.4}", record.train_loss, cfg.select_on.name(), record.dev_recall_at_1);
        on_epoch(&record);
        history.wall_seconds.push(start.elapsed().as_secs_f64());
        let improved = best.as_ref().is_none_or(|(b, _)| record.dev_recall_at_1 > *b);
        history.epochs.push(record);
        if improved {
            best = Some((history.epochs[epoch].dev_recall_at_1, model.params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params.copy_values_from(&params)?;
    }
    model.params.zero_grads();
    Ok(history)
}

/// Builds a model for `cfg` and trains it on the configured subset.
pub fn fit(cfg: &TrainConfig, ds: &DomainDataset, rules: &RuleBook) -> Result<FitOutput> {
    cfg.validate()?;
    let train = training_subset(cfg, ds)?;
    let (mut model, vector_coverage) = init_model(cfg, ds, &train, rules)?;
    let history = fit_model(cfg, &mut model, ds, &train, rules, |_| {})?;
    Ok(FitOutput { model, history, vector_coverage })
}

/// Evaluates a trained model on one split under the rules of `cfg.variant`.
pub fn evaluate_split(cfg: &TrainConfig, model: &Model<f64>, ds: &DomainDataset, rules: &RuleBook, split: Split) -> Result<EvalReport> {
    evaluate(model, ds.split(split), &ds.catalog, active_rules(cfg.variant, rules), eval_mode(cfg), ds.domain.clone())
}
