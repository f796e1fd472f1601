use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use teachbot::data::{write_atomic, DomainDataset, PreprocessOptions, Split};
use teachbot::encoder::{tokenize, StubEncoder, TextEncoder, Vocabulary};
use teachbot::model::{Model, TemplateCatalog};
use teachbot::nlr::{load_rules, RuleBook};
use teachbot::numcore::{cosine, ParamStore};
use teachbot::train::{
    self, active_rules, evaluate_split, fit_model, history_jsonl, init_model, training_subset, write_json, TrainConfig,
    Variant,
};
use teachbot::Error;

use crate::{CurveArgs, EvalArgs, HarnessArgs, PreprocessArgs, RulesCheckArgs, TrainArgs, TrainOpts};

pub(crate) fn validation(msg: impl Into<String>) -> anyhow::Error {
    Error::Validation(msg.into()).into()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    let opts = PreprocessOptions { domain: a.domain, seed: a.seed, allow_small_catalog: a.allow_small_catalog };
    let ds = DomainDataset::from_raw_dir(&a.data_dir, &opts)?;
    ds.validate()?;
    let stats = ds.stats();
    ds.save(&a.out_dir)?;
    write_json(&a.out_dir.join("stats.json"), &stats)?;
    println!("{stats}");
    Ok(())
}

/// Rules named by the flag or the config; an empty book when neither.
pub(crate) fn read_rules(path: Option<&Path>) -> Result<RuleBook> {
    Ok(match path {
        Some(p) => load_rules(p)?,
        None => RuleBook::default(),
    })
}

fn build_config(opts: &TrainOpts, variant: Option<Variant>, train_size: Option<usize>) -> Result<TrainConfig> {
    let mut cfg = match &opts.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(r) = &opts.rules {
        cfg.rules = Some(r.clone());
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(e) = opts.encoder {
        cfg.model.encoder = e;
    }
    if let Some(w) = &opts.word_vectors {
        cfg.word_vectors = Some(w.clone());
    }
    if let Some(u) = opts.update {
        cfg.update = u;
    }
    if let Some(m) = opts.max_epochs {
        cfg.max_epochs = m;
    }
    if let Some(p) = opts.patience {
        cfg.patience = p;
    }
    if train_size.is_some() {
        cfg.train_size = train_size;
    }
    cfg.resample_per_epoch |= opts.resample_per_epoch;
    cfg.full_catalog |= opts.full_catalog;
    cfg.validate()?;
    Ok(cfg)
}

/// Config, rules and dataset, all validated before any training starts.
fn load_inputs(opts: &TrainOpts, variant: Option<Variant>, train_size: Option<usize>) -> Result<(TrainConfig, RuleBook, DomainDataset)> {
    let cfg = build_config(opts, variant, train_size)?;
    let rules = read_rules(cfg.rules.as_deref())?;
    let ds = DomainDataset::load(&opts.data_dir)?;
    if let Some(n) = cfg.train_size {
        if n > ds.train.len() {
            return Err(validation(format!("train size {n} exceeds the {} train dialogs", ds.train.len())));
        }
    }
    Ok((cfg, rules, ds))
}

#[derive(Serialize)]
struct TrainReport {
    variant: Variant,
    seed: u64,
    best_epoch: usize,
    epochs: usize,
    dev: train::EvalReport,
    test: train::EvalReport,
    vector_coverage: Option<f64>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (cfg, rules, ds) = load_inputs(&a.opts, a.variant, a.train_size)?;
    let out = &a.opts.out_dir;
    create_dir(out)?;
    let subset = training_subset(&cfg, &ds)?;
    let (mut model, coverage) = init_model(&cfg, &ds, &subset, &rules)?;
    if let Some(c) = coverage {
        println!("word-vector coverage: {:.2}%", 100.0 * c);
    }
    let history = fit_model(&cfg, &mut model, &ds, &subset, &rules, |e| {
        println!("epoch {:>3}  loss {:.4}  {} recall@1 {:.4}", e.epoch, e.train_loss, cfg.select_on.name(), e.dev_recall_at_1);
    })?;
    let ckpt = out.join("checkpoint");
    model.save(&ckpt, &ds.catalog)?;
    write_json(&ckpt.join("train.json"), &cfg)?;
    write_atomic(&out.join("metrics.jsonl"), history_jsonl(&history)?.as_bytes())?;
    write_json(&out.join("timings.json"), &history.wall_seconds)?;
    let report = TrainReport {
        variant: cfg.variant,
        seed: cfg.seed,
        best_epoch: history.best_epoch,
        epochs: history.epochs.len(),
        dev: evaluate_split(&cfg, &model, &ds, &rules, Split::Dev)?,
        test: evaluate_split(&cfg, &model, &ds, &rules, Split::Test)?,
        vector_coverage: coverage,
    };
    write_json(&out.join("report.json"), &report)?;
    println!(
        "best epoch {}: dev recall@1 {:.4}, test recall@1 {:.4}",
        report.best_epoch, report.dev.recall_at_1, report.test.recall_at_1
    );
    Ok(())
}

/// Model, its training config and the dataset, with the catalog checked.
pub(crate) fn load_checkpoint(dir: &Path, catalog: &TemplateCatalog) -> Result<(Model<f64>, TrainConfig)> {
    let (model, manifest) = Model::<f64>::load(dir)?;
    Model::<f64>::check_catalog(&manifest, catalog)?;
    let cfg_path = dir.join("train.json");
    let cfg = if cfg_path.is_file() { TrainConfig::load(&cfg_path)? } else { TrainConfig::default() };
    Ok((model, cfg))
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.name() == s)
        .ok_or_else(|| validation(format!("unknown split {s:?} (expected train, dev or test)")))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    let ds = DomainDataset::load(&a.data_dir)?;
    let (model, mut cfg) = load_checkpoint(&a.checkpoint, &ds.catalog)?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(r) = a.rules {
        cfg.rules = Some(r);
    }
    cfg.full_catalog |= a.full_catalog;
    let rules = read_rules(cfg.rules.as_deref())?;
    if cfg.variant.needs_rules() && cfg.rules.is_none() {
        return Err(validation(format!("variant {} needs --rules", cfg.variant)));
    }
    let report = evaluate_split(&cfg, &model, &ds, &rules, split)?;
    println!(
        "{} recall@1 {:.4}  recall@2 {:.4}  recall@5 {:.4}  ({} turns)",
        split.name(),
        report.recall_at_1,
        report.recall_at_2,
        report.recall_at_5,
        report.turns
    );
    if let Some(out) = a.out_dir {
        create_dir(&out)?;
        write_json(&out.join("eval.json"), &report)?;
    }
    Ok(())
}

pub fn ablate(a: HarnessArgs) -> Result<()> {
    let (cfg, rules, ds) = load_inputs(&a.opts, Some(Variant::Nlr), None)?;
    create_dir(&a.opts.out_dir)?;
    let report = train::ablate(&cfg, &ds, &rules, &a.seeds)?;
    let table = report.to_table();
    write_json(&a.opts.out_dir.join("ablation.json"), &report)?;
    write_atomic(&a.opts.out_dir.join("ablation.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn curve(a: CurveArgs) -> Result<()> {
    let h = &a.harness;
    let needs_rules = a.variants.iter().any(|v| v.needs_rules());
    let variant = if needs_rules { Variant::Nlr } else { Variant::NoSu };
    let (cfg, rules, ds) = load_inputs(&h.opts, Some(variant), None)?;
    if let Some(&s) = a.sizes.iter().find(|&&s| s == 0 || s > ds.train.len()) {
        return Err(validation(format!("curve size {s} outside 1..={} train dialogs", ds.train.len())));
    }
    create_dir(&h.opts.out_dir)?;
    let report = train::learning_curve(&cfg, &ds, &rules, &a.sizes, &h.seeds, &a.variants)?;
    write_atomic(&h.opts.out_dir.join("curve.csv"), report.to_csv().as_bytes())?;
    write_atomic(&h.opts.out_dir.join("curve_summary.csv"), report.summary_csv().as_bytes())?;
    print!("{}", report.summary_csv());
    Ok(())
}

fn catalog_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("catalog.json")
    } else {
        p.to_path_buf()
    }
}

pub fn rules_check(a: RulesCheckArgs) -> Result<()> {
    let rules = load_rules(&a.rules)?;
    let catalog = TemplateCatalog::load(&catalog_path(&a.catalog))?;
    let (encoder, params, vocab) = match &a.checkpoint {
        Some(dir) => {
            let (model, _) = load_checkpoint(dir, &catalog)?;
            (*model.encoder(), model.params.clone(), model.vocab.clone())
        }
        None => (TextEncoder::Stub(StubEncoder { dim: 200 }), ParamStore::new(), Vocabulary::new()),
    };
    let embed = |t: &str| encoder.encode::<f64>(&params, &vocab, &tokenize(t));
    let templates: Vec<Vec<f64>> = catalog.texts().iter().map(|t| embed(t)).collect();
    let mut warnings = 0;
    for (kind, set) in [("s_rules", &rules.s_rules), ("u_rules", &rules.u_rules)] {
        for (i, r) in set.rules.iter().enumerate() {
            let post = embed(&r.post);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (j, t) in templates.iter().enumerate() {
                let c = cosine(&post, t)?;
                if c > best.0 {
                    best = (c, j);
                }
            }
            if best.0 < a.threshold {
                warnings += 1;
                let near = if templates.is_empty() { String::new() } else { format!(" (closest: {:?})", catalog.text(best.1)) };
                println!("warning: {kind}[{i}] post-condition {:?} best catalog cosine {:.3}{near}", r.post, best.0.max(-1.0));
            }
        }
    }
    println!(
        "{} rules validated ({} s-rules, {} u-rules), {warnings} warnings",
        rules.len(),
        rules.s_rules.len(),
        rules.u_rules.len()
    );
    Ok(())
}

/// Rule sets in force for a variant; used by chat.
pub(crate) fn rules_for(variant: Variant, rules: &RuleBook) -> teachbot::model::ActiveRules<'_> {
    active_rules(variant, rules)
}
