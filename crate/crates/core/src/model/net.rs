use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{entity_track, extract_entities, replace_mentions, EncoderKind, EntityMention, EntityStore, Lexicon};
use super::{ModelConfig, ScoreMode, TemplateCatalog};
use crate::data::ProcessedTurn;
use crate::encoder::{random_embeddings, tokenize, SentenceEncoder, StubEncoder, TextEncoder, Vocabulary};
use crate::error::{bail, Error, Result};
use crate::nlr::{nlr_features, NlrOutput, NlrParams, RuleBook, RuleSet, TapeMemory};
use crate::numcore::{checkpoint, xavier_uniform, LstmCell, ParamId, ParamStore, Scalar, SeededRng, Tape, Tensor, Var};

/// Initial ranking temperature `τ`.
pub const TAU_INIT: f64 = 0.1;

/// Rule sets that feed the inferencer; `None` disables a set and zeroes its
/// half of the rule features.
#[derive(Clone, Copy, Debug, Default)]
pub struct ActiveRules<'r> {
    pub s: Option<&'r RuleSet>,
    pub u: Option<&'r RuleSet>,
}

impl<'r> ActiveRules<'r> {
    pub fn none() -> Self {
        Self { s: None, u: None }
    }

    pub fn all(book: &'r RuleBook) -> Self {
        Self { s: Some(&book.s_rules), u: Some(&book.u_rules) }
    }

    pub fn select(book: &'r RuleBook, use_s: bool, use_u: bool) -> Self {
        Self { s: use_s.then_some(&book.s_rules), u: use_u.then_some(&book.u_rules) }
    }
}

/// Which templates a turn is ranked against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// The turn's sampled gold-plus-distractors set.
    #[default]
    Sampled,
    /// Every template in the catalog.
    FullCatalog,
}

impl CandidateMode {
    /// Candidate ids and position of the gold template.
    pub fn candidates(self, turn: &ProcessedTurn, catalog_size: usize) -> (Vec<usize>, usize) {
        match self {
            CandidateMode::Sampled => (turn.candidate_ids.clone(), turn.gold_index),
            CandidateMode::FullCatalog => ((0..catalog_size).collect(), turn.gold_template_id),
        }
    }
}

/// Parameter handles of a [`Model`].
#[derive(Clone, Copy, Debug)]
pub struct ModelLayout {
    pub encoder: TextEncoder,
    pub context: LstmCell,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub log_tau: ParamId,
    pub nlr: NlrParams,
}

/// Trainable dialog model: shared sentence encoder, context LSTM, response
/// projection and rule-matching parameters.
#[derive(Clone, Debug)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub slot_types: Vec<String>,
    pub params: ParamStore<F>,
    layout: ModelLayout,
}

/// Per-dialog state between turns.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
    pub entities: EntityStore,
    /// Delexicalized text of the previous system action.
    pub prev_action: Option<String>,
    pub api_features: Vec<F>,
}

impl<F: Scalar> DialogState<F> {
    pub fn new(context_hidden: usize, api_dim: usize) -> Self {
        Self {
            h: vec![F::zero(); context_hidden],
            c: vec![F::zero(); context_hidden],
            entities: EntityStore::new(),
            prev_action: None,
            api_features: vec![F::zero(); api_dim],
        }
    }

    pub fn reset(&mut self) {
        let api_dim = self.api_features.len();
        *self = Self::new(self.h.len(), api_dim);
    }

    /// Records the system action actually taken (overriding the model's
    /// own selection).
    pub fn observe_system_action(&mut self, text: &str) {
        self.prev_action = Some(text.to_string());
    }
}

/// Recurrent state as tape nodes, for multi-turn differentiation.
#[derive(Clone, Debug)]
pub struct TapeState<F> {
    pub h: Var,
    pub c: Var,
    pub entities: EntityStore,
    pub prev_action: Option<String>,
    pub api_features: Vec<F>,
}

/// Tape nodes of one turn.
#[derive(Clone, Debug)]
pub struct TurnTrace {
    pub features: Var,
    pub logits: Var,
    pub probs: Var,
    pub nlr: NlrOutput,
}

/// Plain values of the rule inference for one turn, for inspection.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NlrSummary<F> {
    /// `μ` of the s-rules (last entries are no-match), if enabled.
    pub mu_s: Option<Vec<F>>,
    pub mu_u: Option<Vec<F>>,
    pub alpha_s: Option<Vec<F>>,
    pub alpha_u: Option<Vec<F>>,
}

/// Result of [`Model::turn_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutcome<F> {
    pub candidates: Vec<usize>,
    pub distribution: Vec<F>,
    /// Template id of the selected action.
    pub selected: usize,
    pub user_text_delex: String,
    pub mentions: Vec<EntityMention>,
    pub nlr: NlrSummary<F>,
}

/// One turn of a whole-dialog forward pass.
#[derive(Clone, Debug)]
pub struct TurnStep {
    pub trace: TurnTrace,
    pub candidates: Vec<usize>,
    pub gold_index: usize,
}

impl<F: Scalar> Model<F> {
    /// Fresh model. `pretrained` replaces the random word-embedding
    /// initialization and must have one row per vocabulary entry.
    pub fn new(
        config: ModelConfig,
        vocab: Vocabulary,
        slot_types: Vec<String>,
        pretrained: Option<Tensor<F>>,
        seed: u64,
    ) -> Result<Self> {
        if config.sentence_hidden == 0 || config.context_hidden == 0 || config.word_dim == 0 {
            bail!(Config, "model dimensions must be positive");
        }
        let mut rng = SeededRng::new(seed).derive("model-init");
        let mut params = ParamStore::new();
        let d_s = config.sentence_dim();
        let encoder = match config.encoder {
            EncoderKind::Stub => TextEncoder::Stub(StubEncoder { dim: d_s }),
            kind => {
                let table = match pretrained {
                    Some(t) => {
                        if t.shape() != [vocab.len(), config.word_dim] {
                            bail!(
                                Config,
                                "pretrained embeddings have shape {:?}, expected [{}, {}]",
                                t.shape(),
                                vocab.len(),
                                config.word_dim
                            );
                        }
                        t
                    }
                    None => random_embeddings(vocab.len(), config.word_dim, &mut rng),
                };
                let trainable = !(kind == EncoderKind::WordVectors && config.freeze_word_vectors);
                TextEncoder::Recurrent(SentenceEncoder::register(
                    &mut params,
                    table,
                    config.sentence_hidden,
                    trainable,
                    &mut rng,
                )?)
            }
        };
        let input = config.feature_dim(slot_types.len());
        let context = LstmCell::register(&mut params, "context", input, config.context_hidden, &mut rng)?;
        let proj_w = params.add("proj.w", xavier_uniform(config.context_hidden, d_s, &mut rng)?)?;
        let proj_b = params.add("proj.b", Tensor::zeros(&[d_s]))?;
        let log_tau = params.add("proj.log_tau", Tensor::scalar(F::lit(TAU_INIT.ln())))?;
        let nlr = NlrParams::register(&mut params, config.nomatch_bias)?;
        let layout = ModelLayout { encoder, context, proj_w, proj_b, log_tau, nlr };
        Ok(Self { config, vocab, slot_types, params, layout })
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn encoder(&self) -> &TextEncoder {
        &self.layout.encoder
    }

    pub fn sentence_dim(&self) -> usize {
        self.config.sentence_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim(self.slot_types.len())
    }

    pub fn initial_state(&self) -> DialogState<F> {
        DialogState::new(self.config.context_hidden, self.config.api_dim)
    }

    /// Plain-value embedding of a text.
    pub fn embed(&self, text: &str) -> Vec<F> {
        self.layout.encoder.encode(&self.params, &self.vocab, &tokenize(text))
    }

    pub fn session<'a>(&'a self, rules: ActiveRules<'a>) -> Session<'a, F> {
        Session::new(self, rules)
    }

    /// One turn from raw user text: entity extraction, delexicalization,
    /// scoring and greedy selection. The selected template becomes the
    /// previous action.
    pub fn turn_forward(
        &self,
        state: &mut DialogState<F>,
        user_text: &str,
        lexicon: &Lexicon,
        candidates: &[usize],
        catalog: &TemplateCatalog,
        rules: ActiveRules<'_>,
    ) -> Result<TurnOutcome<F>> {
        let mentions = extract_entities(user_text, lexicon);
        let delex = replace_mentions(user_text, &mentions);
        self.turn_forward_delex(state, &delex, &mentions, candidates, catalog, rules)
    }

    /// [`Model::turn_forward`] for text that is already delexicalized.
    pub fn turn_forward_delex(
        &self,
        state: &mut DialogState<F>,
        user_text: &str,
        mentions: &[EntityMention],
        candidates: &[usize],
        catalog: &TemplateCatalog,
        rules: ActiveRules<'_>,
    ) -> Result<TurnOutcome<F>> {
        let mut session = self.session(rules);
        let mut ts = session.state_from(state);
        let trace = session.turn(&mut ts, user_text, mentions, candidates, catalog)?;
        let tape = &session.tape;
        if let Some((idx, op)) = tape.first_non_finite() {
            bail!(Numeric, "non-finite value from {op} at node {idx}");
        }
        let distribution = tape.value(trace.probs).to_vec();
        let selected = select_candidate(&distribution, candidates);
        let summary = |t: &Option<crate::nlr::RuleSetTrace>| -> (Option<Vec<F>>, Option<Vec<F>>) {
            match t {
                Some(t) => (Some(tape.value(t.mu).to_vec()), Some(tape.value(t.alpha).to_vec())),
                None => (None, None),
            }
        };
        let (mu_s, alpha_s) = summary(&trace.nlr.s);
        let (mu_u, alpha_u) = summary(&trace.nlr.u);
        state.h = tape.value(ts.h).to_vec();
        state.c = tape.value(ts.c).to_vec();
        state.entities = ts.entities;
        state.prev_action = Some(catalog.text(selected).to_string());
        Ok(TurnOutcome {
            candidates: candidates.to_vec(),
            distribution,
            selected,
            user_text_delex: user_text.to_string(),
            mentions: mentions.to_vec(),
            nlr: NlrSummary { mu_s, mu_u, alpha_s, alpha_u },
        })
    }
}

/// Contents of `model.json` in a checkpoint directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub config: ModelConfig,
    pub slot_types: Vec<String>,
    pub catalog_size: usize,
    pub catalog_fingerprint: u64,
}

impl<F: Scalar> Model<F> {
    /// Writes `params.bin`, `vocab.txt` and `model.json` into `dir`.
    pub fn save(&self, dir: &Path, catalog: &TemplateCatalog) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = ModelManifest {
            config: self.config.clone(),
            slot_types: self.slot_types.clone(),
            catalog_size: catalog.len(),
            catalog_fingerprint: catalog.fingerprint(),
        };
        crate::data::write_atomic(&dir.join("params.bin"), &checkpoint::to_bytes(&self.params)?)?;
        crate::data::write_atomic(&dir.join("vocab.txt"), self.vocab.to_text().as_bytes())?;
        crate::data::write_atomic(&dir.join("model.json"), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())
    }

    /// Loads a checkpoint directory written by [`Model::save`].
    pub fn load(dir: &Path) -> Result<(Self, ModelManifest)> {
        let path = dir.join("model.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ModelManifest = serde_json::from_str(&text)?;
        let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
        let mut model = Self::new(manifest.config.clone(), vocab, manifest.slot_types.clone(), None, 0)?;
        let stored = checkpoint::load::<F>(&dir.join("params.bin"))?;
        model.params.copy_values_from(&stored)?;
        Ok((model, manifest))
    }

    /// Fails unless `catalog` is the one the model was trained with.
    pub fn check_catalog(manifest: &ModelManifest, catalog: &TemplateCatalog) -> Result<()> {
        if manifest.catalog_size != catalog.len() || manifest.catalog_fingerprint != catalog.fingerprint() {
            bail!(
                Validation,
                "catalog mismatch: checkpoint expects {} templates (fingerprint {:016x}), got {} ({:016x})",
                manifest.catalog_size,
                manifest.catalog_fingerprint,
                catalog.len(),
                catalog.fingerprint()
            );
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn select_action<F: Scalar>(distribution: &[F]) -> usize {
    let mut best = 0;
    for (i, &p) in distribution.iter().enumerate() {
        if p > distribution[best] {
            best = i;
        }
    }
    best
}

/// Template id of the most probable candidate; ties go to the lowest
/// template id.
pub fn select_candidate<F: Scalar>(distribution: &[F], candidates: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..distribution.len() {
        let (p, q) = (distribution[i], distribution[best]);
        if p > q || (p == q && candidates[i] < candidates[best]) {
            best = i;
        }
    }
    candidates[best]
}

/// Forward pass over one or more turns on a shared tape. Text embeddings
/// and rule memories are computed once per session.
pub struct Session<'a, F> {
    model: &'a Model<F>,
    rules: ActiveRules<'a>,
    pub tape: Tape<F>,
    cache: HashMap<String, Var>,
    memories: Option<(Option<TapeMemory>, Option<TapeMemory>)>,
}

impl<'a, F: Scalar> Session<'a, F> {
    pub fn new(model: &'a Model<F>, rules: ActiveRules<'a>) -> Self {
        Self { model, rules, tape: Tape::new(), cache: HashMap::new(), memories: None }
    }

    pub fn model(&self) -> &'a Model<F> {
        self.model
    }

    pub fn embed(&mut self, text: &str) -> Var {
        if let Some(&v) = self.cache.get(text) {
            return v;
        }
        let m = self.model;
        let v = m.layout.encoder.encode_tokens(&mut self.tape, &m.params, &m.vocab, &tokenize(text));
        self.cache.insert(text.to_string(), v);
        v
    }

    fn memory_of(&mut self, set: Option<&RuleSet>) -> Option<TapeMemory> {
        let set = set?;
        let mut mem = TapeMemory::default();
        for r in &set.rules {
            mem.pre.push(self.embed(&r.pre));
            mem.post.push(self.embed(&r.post));
        }
        Some(mem)
    }

    fn memories(&mut self) -> (Option<TapeMemory>, Option<TapeMemory>) {
        if self.memories.is_none() {
            let s = self.memory_of(self.rules.s);
            let u = self.memory_of(self.rules.u);
            self.memories = Some((s, u));
        }
        self.memories.clone().expect("memories built")
    }

    pub fn initial_state(&mut self) -> TapeState<F> {
        let cfg = &self.model.config;
        TapeState {
            h: self.tape.zeros(cfg.context_hidden),
            c: self.tape.zeros(cfg.context_hidden),
            entities: EntityStore::new(),
            prev_action: None,
            api_features: vec![F::zero(); cfg.api_dim],
        }
    }

    /// Tape copy of a plain state; gradients do not flow into it.
    pub fn state_from(&mut self, state: &DialogState<F>) -> TapeState<F> {
        TapeState {
            h: self.tape.constant(state.h.clone()),
            c: self.tape.constant(state.c.clone()),
            entities: state.entities.clone(),
            prev_action: state.prev_action.clone(),
            api_features: state.api_features.clone(),
        }
    }

    /// Scores `candidates` for one user turn and advances the context
    /// recurrence. The previous action is left for the caller to update.
    pub fn turn(
        &mut self,
        state: &mut TapeState<F>,
        user_text: &str,
        mentions: &[EntityMention],
        candidates: &[usize],
        catalog: &TemplateCatalog,
    ) -> Result<TurnTrace> {
        if candidates.is_empty() {
            bail!(Argument, "turn needs at least one candidate");
        }
        if let Some(&bad) = candidates.iter().find(|&&c| c >= catalog.len()) {
            bail!(Argument, "candidate id {bad} outside catalog of {}", catalog.len());
        }
        let model = self.model;
        let cfg = &model.config;
        if state.api_features.len() != cfg.api_dim {
            bail!(Config, "API feature length {} vs configured {}", state.api_features.len(), cfg.api_dim);
        }
        let d_s = cfg.sentence_dim();

        let user = self.embed(user_text);
        let flags = entity_track::<F>(&mut state.entities, mentions, &model.slot_types);
        let flags = self.tape.constant(flags);
        let prev_text = state.prev_action.clone().unwrap_or_default();
        let prev = self.embed(&prev_text);
        let cands: Vec<Var> = candidates.iter().map(|&id| self.embed(catalog.text(id))).collect();
        let (s_mem, u_mem) = self.memories();
        let nlr = nlr_features(
            &mut self.tape,
            &model.params,
            &model.layout.nlr,
            prev,
            user,
            s_mem.as_ref(),
            u_mem.as_ref(),
            &cands,
            d_s,
        );
        let api = self.tape.constant(state.api_features.clone());
        let features = self.tape.concat(&[user, flags, prev, nlr.features, api]);

        let (h, c) = model.layout.context.step(&mut self.tape, &model.params, features, state.h, state.c);
        state.h = h;
        state.c = c;

        let tape = &mut self.tape;
        let response = tape.affine(&model.params, model.layout.proj_w, Some(model.layout.proj_b), h);
        let scores: Vec<Var> = match cfg.score {
            ScoreMode::Cosine => {
                let log_tau = tape.param(&model.params, model.layout.log_tau);
                let neg = tape.neg(log_tau);
                let inv_tau = tape.exp(neg);
                cands
                    .iter()
                    .map(|&a| {
                        let cos = tape.cosine(response, a);
                        tape.scale(cos, inv_tau)
                    })
                    .collect()
            }
            ScoreMode::Dot => cands.iter().map(|&a| tape.dot(response, a)).collect(),
        };
        let logits = tape.concat(&scores);
        let probs = tape.softmax(logits);
        Ok(TurnTrace { features, logits, probs, nlr })
    }

    /// Runs a whole dialog, feeding each turn's gold system response as the
    /// next turn's previous action.
    pub fn run_dialog(
        &mut self,
        turns: &[ProcessedTurn],
        catalog: &TemplateCatalog,
        mode: CandidateMode,
    ) -> Result<Vec<TurnStep>> {
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(turns.len());
        for turn in turns {
            let (candidates, gold_index) = mode.candidates(turn, catalog.len());
            let trace = self.turn(&mut state, &turn.user_text, &turn.mentions, &candidates, catalog)?;
            state.prev_action = Some(turn.system_text.clone());
            steps.push(TurnStep { trace, candidates, gold_index });
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_fixture;
    use crate::nlr::{Rule, RuleKind};
    use crate::numcore::{check_param_gradients, GRAD_CHECK_FLOOR};

    fn small_config(encoder: EncoderKind) -> ModelConfig {
        ModelConfig { word_dim: 4, sentence_hidden: 3, context_hidden: 5, encoder, ..ModelConfig::default() }
    }

    fn vocab_for(texts: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::with_slots(&["cuisine", "location"]).unwrap();
        for t in texts {
            v.extend(&tokenize(t));
        }
        v
    }

    fn fixture_model(encoder: EncoderKind, seed: u64) -> (Model<f64>, crate::data::DomainDataset, RuleBook) {
        let f = make_fixture(seed);
        let ds = f.dataset(seed).unwrap();
        let mut texts: Vec<String> = ds.catalog.texts().iter().map(|s| s.to_string()).collect();
        texts.extend(f.rules.texts().map(str::to_string));
        texts.extend(ds.train.iter().flat_map(|d| d.turns.iter().map(|t| t.user_text.clone())));
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let model = Model::new(small_config(encoder), vocab_for(&refs), ds.schema.slot_types.clone(), None, seed).unwrap();
        (model, ds, f.rules)
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let (a, _, _) = fixture_model(EncoderKind::Scratch, 3);
        let (b, _, _) = fixture_model(EncoderKind::Scratch, 3);
        let (c, _, _) = fixture_model(EncoderKind::Scratch, 4);
        let vals = |m: &Model<f64>| m.params.iter().map(|p| p.value.clone()).collect::<Vec<_>>();
        assert_eq!(vals(&a), vals(&b));
        assert_ne!(vals(&a), vals(&c));
        let names: Vec<&str> = a.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(&names[..3], &["encoder.embeddings", "encoder.fwd.w", "encoder.fwd.b"]);
        assert!(names.contains(&"proj.log_tau") && names.contains(&"nlr.u.log_lambda"));
    }

    #[test]
    fn distributions_sum_to_one() {
        let (m, ds, rules) = fixture_model(EncoderKind::Scratch, 1);
        let mut session = m.session(ActiveRules::all(&rules));
        for d in &ds.train {
            for step in session.run_dialog(&d.turns, &ds.catalog, CandidateMode::Sampled).unwrap() {
                let p = session.tape.value(step.trace.probs);
                assert_eq!(p.len(), step.candidates.len());
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(session.tape.dim(step.trace.features), m.feature_dim());
            }
        }
    }

    #[test]
    fn u_rule_raises_named_candidate() {
        let catalog = TemplateCatalog::from_texts(&["first reply", "second reply", "third reply"]);
        let vocab = vocab_for(&["where is lunch", "first reply second reply third reply"]);
        let cfg = ModelConfig { encoder: EncoderKind::Stub, ..small_config(EncoderKind::Stub) };
        let m: Model<f64> = Model::new(cfg, vocab, vec!["cuisine".into()], None, 11).unwrap();
        let mut book = RuleBook::default();
        let empty = m.turn_forward_delex(&mut m.initial_state(), "where is lunch", &[], &[0, 1, 2], &catalog, ActiveRules::all(&book)).unwrap();
        for j in 0..3 {
            book.u_rules = RuleSet {
                kind: RuleKind::User,
                rules: vec![Rule { pre: "where is lunch".into(), post: catalog.text(j).into() }],
            };
            let ruled = m
                .turn_forward_delex(&mut m.initial_state(), "where is lunch", &[], &[0, 1, 2], &catalog, ActiveRules::all(&book))
                .unwrap();
            let mu = ruled.nlr.mu_u.as_ref().unwrap();
            assert!(mu[0] > 0.99, "{mu:?}");
            let alpha = ruled.nlr.alpha_u.as_ref().unwrap();
            assert_eq!(select_action(alpha), j);
            assert_ne!(ruled.distribution[j], empty.distribution[j]);
        }
    }

    #[test]
    fn empty_rules_match_disabled_rules_bitwise() {
        let (m, ds, _) = fixture_model(EncoderKind::Scratch, 2);
        let book = RuleBook::default();
        let run = |rules: ActiveRules<'_>| {
            let mut s = m.session(rules);
            let steps = s.run_dialog(&ds.train[0].turns, &ds.catalog, CandidateMode::Sampled).unwrap();
            steps.iter().map(|st| s.tape.value(st.trace.probs).to_vec()).collect::<Vec<_>>()
        };
        assert_eq!(run(ActiveRules::none()), run(ActiveRules::all(&book)));
    }

    #[test]
    fn turn_by_turn_equals_whole_dialog() {
        let (m, ds, rules) = fixture_model(EncoderKind::Scratch, 5);
        let active = ActiveRules::all(&rules);
        for d in &ds.train {
            let mut session = m.session(active);
            let steps = session.run_dialog(&d.turns, &ds.catalog, CandidateMode::Sampled).unwrap();
            let mut state = m.initial_state();
            for (t, step) in d.turns.iter().zip(&steps) {
                let out = m.turn_forward_delex(&mut state, &t.user_text, &t.mentions, &t.candidate_ids, &ds.catalog, active).unwrap();
                state.observe_system_action(&t.system_text);
                for (a, b) in out.distribution.iter().zip(session.tape.value(step.trace.probs)) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    fn dialog_loss(m: &Model<f64>, params: Option<&ParamStore<f64>>, rules: &RuleBook, ds: &crate::data::DomainDataset) -> (Tape<f64>, Var) {
        let owned;
        let model = match params {
            Some(p) => {
                let mut c = m.clone();
                c.params = p.clone();
                owned = c;
                &owned
            }
            None => m,
        };
        let mut s = model.session(ActiveRules::all(rules));
        let steps = s.run_dialog(&ds.train[0].turns[..2], &ds.catalog, CandidateMode::Sampled).unwrap();
        let losses: Vec<Var> = steps.iter().map(|st| s.tape.neg_log_pick(st.trace.probs, st.gold_index, 1e-12)).collect();
        let total = s.tape.sum(&losses);
        (s.tape, total)
    }

    #[test]
    fn dialog_loss_gradients() {
        let (mut m, ds, rules) = fixture_model(EncoderKind::Scratch, 8);
        let (tape, loss) = dialog_loss(&m, None, &rules, &ds);
        m.params.zero_grads();
        tape.backward(loss, &mut m.params).unwrap();
        let (worst, at) = check_param_gradients(&m.params, 1e-5, GRAD_CHECK_FLOOR, |p| {
            let (t, l) = dialog_loss(&m, Some(p), &rules, &ds);
            Ok(t.scalar(l))
        })
        .unwrap();
        assert!(worst < 1e-4, "{worst} at {at}");
    }

    #[test]
    fn ties_go_to_lowest_template_id() {
        assert_eq!(select_candidate(&[0.5, 0.5], &[7, 3]), 3);
        assert_eq!(select_candidate(&[0.2, 0.4, 0.4], &[1, 9, 4]), 4);
        assert_eq!(select_action(&[0.1, 0.3, 0.3]), 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (m, ds, rules) = fixture_model(EncoderKind::Scratch, 6);
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path(), &ds.catalog).unwrap();
        let (back, manifest) = Model::<f64>::load(dir.path()).unwrap();
        Model::<f64>::check_catalog(&manifest, &ds.catalog).unwrap();
        assert!(Model::<f64>::check_catalog(&manifest, &TemplateCatalog::from_texts(&["x"])).is_err());
        let t = &ds.test[0].turns[0];
        let run = |m: &Model<f64>| {
            m.turn_forward_delex(&mut m.initial_state(), &t.user_text, &t.mentions, &t.candidate_ids, &ds.catalog, ActiveRules::all(&rules))
                .unwrap()
        };
        assert_eq!(run(&m), run(&back));
    }
}
