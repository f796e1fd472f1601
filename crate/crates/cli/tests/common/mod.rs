#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use teachbot::data::{make_fixture, DomainDataset};
use teachbot::model::{EncoderKind, Model, ModelConfig};
use teachbot::train::build_vocabulary;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_teachbot"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("TEACHBOT_DATA").stdin(Stdio::null()).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Raw fixture corpus plus `rules.json` in `root/raw`, preprocessed into
/// `root/data`.
pub fn prepared(root: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let raw = root.join("raw");
    let data = root.join("data");
    make_fixture(seed).write(&raw).unwrap();
    run_ok(&["preprocess", "--data-dir", s(&raw), "--out-dir", s(&data), "--seed", &seed.to_string(), "--allow-small-catalog"]);
    (raw, data)
}

pub const SMALL_CONFIG: &str =
    r#"{"model": {"word_dim": 8, "sentence_hidden": 8, "context_hidden": 12}, "max_epochs": 4, "lr": 0.01}"#;

pub fn small_config(root: &Path) -> PathBuf {
    let p = root.join("config.json");
    std::fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

/// Hand-set stub-encoder model that copies the u-rule expected action to
/// its response, so exact rule matches rank the named template first.
pub fn oracle_checkpoint(data: &Path, rules_path: &Path, dir: &Path) {
    let ds = DomainDataset::load(data).unwrap();
    let rules = teachbot::nlr::load_rules(rules_path).unwrap();
    let vocab = build_vocabulary(&ds, &ds.train, &rules).unwrap();
    let cfg = ModelConfig { encoder: EncoderKind::Stub, sentence_hidden: 100, context_hidden: 200, ..Default::default() };
    let mut m: Model<f64> = Model::new(cfg, vocab, ds.schema.slot_types.clone(), None, 0).unwrap();
    let d = m.sentence_dim();
    let h = m.config.context_hidden;
    let input = m.feature_dim();
    let eu = 3 * d + ds.schema.slot_types.len();
    let w = m.params.id("context.w").unwrap();
    let b = m.params.id("context.b").unwrap();
    let wt = &mut m.params.get_mut(w).value;
    wt.fill(0.0);
    for j in 0..h {
        wt.row_mut(3 * h + j)[eu + j] = 5.0;
    }
    let bt = m.params.get_mut(b).value.data_mut();
    for j in 0..h {
        bt[j] = 10.0;
        bt[h + j] = -10.0;
        bt[2 * h + j] = 10.0;
        bt[3 * h + j] = 0.0;
    }
    let pw = m.params.id("proj.w").unwrap();
    let pt = &mut m.params.get_mut(pw).value;
    pt.fill(0.0);
    for j in 0..d {
        pt.row_mut(j)[j] = 1.0;
    }
    assert_eq!(input, m.config.feature_dim(ds.schema.slot_types.len()));
    m.save(dir, &ds.catalog).unwrap();
    let train_cfg = teachbot::train::TrainConfig { rules: Some(rules_path.to_path_buf()), ..Default::default() };
    std::fs::write(dir.join("train.json"), train_cfg.to_json()).unwrap();
}
