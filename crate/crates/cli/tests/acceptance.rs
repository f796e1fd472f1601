//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Environment:
//! * `TEACHBOT_DATA`: directory holding the three `kvret_*_public.json`
//!   files; enables the real-data pipeline check.
//! * `TEACHBOT_EXTENDED=1` with `TEACHBOT_DATA` and `TEACHBOT_RULES` (a
//!   directory of `{domain}.json` rule files): runs the multi-hour
//!   replication on real data.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use teachbot::data::{make_candidates, make_fixture, DomainDataset, PreprocessOptions, Split};
use teachbot::encoder::{random_embeddings, tokenize, SentenceEncoder, StubEncoder};
use teachbot::model::{ActiveRules, CandidateMode, Model, ModelConfig};
use teachbot::nlr::{
    action_affinity, combine, expected_action, match_on_tape, match_probs, nlr_features, normalization_residual,
    rule_relevance, NlrParams, NoMatchBias, RuleMemory, TapeMemory,
};
use teachbot::numcore::{check_param_gradients, LstmCell, ParamStore, SeededRng, Tape, Tensor, Var, GRAD_CHECK_FLOOR};
use teachbot::train::{build_vocabulary, evaluate_split, fit, TrainConfig, Variant};

use common::{run_ok, s, SMALL_CONFIG};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

type Criterion = (&'static str, fn() -> Outcome);
type GradInstance = (&'static str, fn(u64) -> (f64, String));

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 10;

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient suite", gradient_suite),
        ("NLR oracle equivalence", nlr_oracle),
        ("closed-form matcher", closed_form_matcher),
        ("data pipeline statistics", data_pipeline),
        ("overfit sanity", overfit_sanity),
        ("directional ablation", directional_ablation),
        ("desk-scale replication", replication),
        ("determinism", determinism),
        ("candidate sampling statistics", candidate_statistics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {}: {name} ({secs:.1}s): {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn randomize(params: &mut ParamStore<f64>, rng: &mut SeededRng, scale: f64) {
    for id in params.ids().collect::<Vec<_>>() {
        for x in params.get_mut(id).value.data_mut() {
            *x += rng.uniform(-scale, scale);
        }
    }
}

fn random_rows(rng: &mut SeededRng, n: usize, d: usize) -> Tensor<f64> {
    Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

/// Backpropagates `build` once, then compares against finite differences.
fn grad_check(mut params: ParamStore<f64>, build: impl Fn(&ParamStore<f64>, &mut Tape<f64>) -> Var) -> (f64, String) {
    let mut tape = Tape::new();
    let root = build(&params, &mut tape);
    params.zero_grads();
    tape.backward(root, &mut params).unwrap();
    check_param_gradients(&params, 1e-5, GRAD_CHECK_FLOOR, |p| {
        let mut t = Tape::new();
        let r = build(p, &mut t);
        Ok(t.scalar(r))
    })
    .unwrap()
}

fn lstm_instance(seed: u64) -> (f64, String) {
    let mut rng = SeededRng::new(seed);
    let mut params = ParamStore::new();
    let cell = LstmCell::register(&mut params, "cell", 3, 2, &mut rng).unwrap();
    randomize(&mut params, &mut rng, 0.5);
    params.add("x", random_rows(&mut rng, 1, 3)).unwrap();
    params.add("hc", random_rows(&mut rng, 2, 2)).unwrap();
    let w = random_rows(&mut rng, 1, 4).data().to_vec();
    grad_check(params, |p, tape| {
        let x = tape.row(p, p.id("x").unwrap(), 0);
        let hc = p.id("hc").unwrap();
        let (mut h, mut c) = (tape.row(p, hc, 0), tape.row(p, hc, 1));
        for _ in 0..2 {
            (h, c) = cell.step(tape, p, x, h, c);
        }
        let hc = tape.concat(&[h, c]);
        let wv = tape.constant(w.clone());
        tape.dot(hc, wv)
    })
}

fn encoder_instance(seed: u64) -> (f64, String) {
    let mut rng = SeededRng::new(seed);
    let mut params = ParamStore::new();
    let table = random_embeddings(7, 3, &mut rng);
    let enc = SentenceEncoder::register(&mut params, table, 2, true, &mut rng).unwrap();
    randomize(&mut params, &mut rng, 0.3);
    let ids = [2, 3, 1, 6, 4];
    let t = random_rows(&mut rng, 1, 4).data().to_vec();
    grad_check(params, |p, tape| {
        let e = enc.encode(tape, p, &ids);
        let tv = tape.constant(t.clone());
        let sq = tape.mul(e, e);
        let lin = tape.sum(&[sq, e]);
        tape.dot(lin, tv)
    })
}

fn nlr_instance(seed: u64) -> (f64, String) {
    let mut rng = SeededRng::new(seed);
    let d = 3;
    let mut params = ParamStore::new();
    let nlr = NlrParams::register(&mut params, NoMatchBias::PerMatch).unwrap();
    randomize(&mut params, &mut rng, 0.5);
    let (r_s, r_u, k) = (2, 3, 4);
    for (name, n) in [("s.pre", r_s), ("s.post", r_s), ("u.pre", r_u), ("u.post", r_u), ("cand", k), ("q", 2)] {
        params.add(name, random_rows(&mut rng, n, d)).unwrap();
    }
    let w = random_rows(&mut rng, 1, 2 * d).data().to_vec();
    grad_check(params, |p, tape| {
        let rows = |tape: &mut Tape<f64>, name: &str, n: usize| -> Vec<Var> {
            let id = p.id(name).unwrap();
            (0..n).map(|i| tape.row(p, id, i)).collect()
        };
        let s_mem = TapeMemory { pre: rows(tape, "s.pre", r_s), post: rows(tape, "s.post", r_s) };
        let u_mem = TapeMemory { pre: rows(tape, "u.pre", r_u), post: rows(tape, "u.post", r_u) };
        let cands = rows(tape, "cand", k);
        let q = rows(tape, "q", 2);
        let out = nlr_features(tape, p, &nlr, q[0], q[1], Some(&s_mem), Some(&u_mem), &cands, d);
        let wv = tape.constant(w.clone());
        let sq = tape.mul(out.features, out.features);
        let lin = tape.sum(&[sq, out.features]);
        tape.dot(lin, wv)
    })
}

/// `r = W h + b`, cosine scores scaled by `exp(-log τ)`, NLL of the gold.
fn projection_instance(seed: u64) -> (f64, String) {
    let mut rng = SeededRng::new(seed);
    let (ctx, ds, k) = (4, 3, 5);
    let mut params = ParamStore::new();
    params.add("w", random_rows(&mut rng, ds, ctx)).unwrap();
    params.add("b", Tensor::from_vec(&[ds], random_rows(&mut rng, 1, ds).data().to_vec()).unwrap()).unwrap();
    params.add("log_tau", Tensor::scalar(0.1f64.ln() + rng.uniform(-0.5, 0.5))).unwrap();
    params.add("h", random_rows(&mut rng, 1, ctx)).unwrap();
    params.add("cand", random_rows(&mut rng, k, ds)).unwrap();
    let gold = (seed as usize) % k;
    grad_check(params, |p, tape| {
        let id = |n: &str| p.id(n).unwrap();
        let h = tape.row(p, id("h"), 0);
        let r = tape.affine(p, id("w"), Some(id("b")), h);
        let lt = tape.param(p, id("log_tau"));
        let neg = tape.neg(lt);
        let inv_tau = tape.exp(neg);
        let scores: Vec<Var> = (0..k)
            .map(|j| {
                let a = tape.row(p, id("cand"), j);
                let c = tape.cosine(r, a);
                tape.scale(c, inv_tau)
            })
            .collect();
        let logits = tape.concat(&scores);
        let probs = tape.softmax(logits);
        tape.neg_log_pick(probs, gold, 1e-12)
    })
}

fn turn_loss_instance(seed: u64) -> (f64, String) {
    let f = make_fixture(seed);
    let ds = f.dataset(seed).unwrap();
    let vocab = build_vocabulary(&ds, &ds.train, &f.rules).unwrap();
    let cfg = ModelConfig { word_dim: 3, sentence_hidden: 2, context_hidden: 3, ..Default::default() };
    let model: Model<f64> = Model::new(cfg, vocab, ds.schema.slot_types.clone(), None, seed).unwrap();
    let turns = &ds.train[seed as usize % ds.train.len()].turns[..2];
    let base = model.clone();
    grad_check(model.params.clone(), |p, tape| {
        let mut m = base.clone();
        m.params = p.clone();
        let mut session = m.session(ActiveRules::all(&f.rules));
        let steps = session.run_dialog(turns, &ds.catalog, CandidateMode::Sampled).unwrap();
        let losses: Vec<Var> =
            steps.iter().map(|st| session.tape.neg_log_pick(st.trace.probs, st.gold_index, 1e-12)).collect();
        let total = session.tape.sum(&losses);
        // Move the recorded graph into the caller's tape.
        std::mem::swap(tape, &mut session.tape);
        total
    })
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let ops: [GradInstance; 5] = [
        ("lstm", lstm_instance),
        ("sentence encoder", encoder_instance),
        ("nlr", nlr_instance),
        ("projection", projection_instance),
        ("turn loss", turn_loss_instance),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, f) in ops {
        let results: Vec<(u64, f64, String)> = (0..GRAD_SEEDS)
            .into_par_iter()
            .map(|seed| {
                let (e, at) = f(seed);
                (seed, e, at)
            })
            .collect();
        let worst = results.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        ok &= worst.1 < GRAD_TOL;
        parts.push(format!("{name} worst {:.1e} (seed {} {})", worst.1, worst.0, worst.2));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    verdict(ok, format!("{} seeds per op; {}", GRAD_SEEDS, parts.join("; ")))
}

fn naive_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

#[allow(clippy::needless_range_loop)]
fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Expected action embedding by explicit loops over rules, candidates and
/// dimensions.
#[allow(clippy::needless_range_loop)]
fn naive_inference(q: &[f64], pre: &Tensor<f64>, post: &Tensor<f64>, cand: &Tensor<f64>, lambda: f64, b_pre: f64, b_post: f64) -> Vec<f64> {
    let (r, k, d) = (pre.rows(), cand.rows(), q.len());
    let mut mu_logits: Vec<f64> = (0..r).map(|i| naive_cos(q, pre.row(i)) / lambda).collect();
    mu_logits.push(b_pre);
    let mu = naive_softmax(&mu_logits);
    let mut e = vec![0.0; d];
    for i in 0..r {
        let mut nu_logits: Vec<f64> = (0..k).map(|j| naive_cos(post.row(i), cand.row(j)) / lambda).collect();
        nu_logits.push(b_post);
        let nu = naive_softmax(&nu_logits);
        for j in 0..k {
            for x in 0..d {
                e[x] += mu[i] * nu[j] * cand.row(j)[x];
            }
        }
    }
    e
}

fn nlr_oracle() -> Outcome {
    let d = 4;
    let mut worst: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut runs = 0;
    for seed in 0..100u64 {
        for r in 0..=5 {
            for k in 1..=5 {
                let mut rng = SeededRng::new(seed).derive(&format!("{r}x{k}"));
                let mut params = ParamStore::<f64>::new();
                let nlr = NlrParams::register(&mut params, NoMatchBias::PerMatch).unwrap();
                randomize(&mut params, &mut rng, 1.0);
                let pre = random_rows(&mut rng, r, d);
                let post = random_rows(&mut rng, r, d);
                let cand = random_rows(&mut rng, k, d);
                let q = random_rows(&mut rng, 1, d).data().to_vec();
                let m = &nlr.u;
                let lambda = params.value(m.log_lambda).data()[0].exp();
                let (bp, bq) = (params.value(m.pre_bias).data()[0], params.value(m.post_bias).data()[0]);
                let expect = naive_inference(&q, &pre, &post, &cand, lambda, bp, bq);

                let mut tape = Tape::new();
                let rows = |tape: &mut Tape<f64>, t: &Tensor<f64>| -> Vec<Var> {
                    (0..t.rows()).map(|i| tape.constant(t.row(i).to_vec())).collect()
                };
                let mem = TapeMemory { pre: rows(&mut tape, &pre), post: rows(&mut tape, &post) };
                let cands = rows(&mut tape, &cand);
                let qv = tape.constant(q.clone());
                let out = nlr_features(&mut tape, &params, &nlr, qv, qv, None, Some(&mem), &cands, d);
                let got = &tape.value(out.features)[d..];

                let memory = RuleMemory { pre_embeddings: pre.clone(), post_embeddings: post.clone() };
                let mu = rule_relevance(&q, &memory, lambda, &[bp]).unwrap();
                let nu = action_affinity(&memory, &cand, lambda, &[bq]).unwrap();
                let (alpha, _) = combine(&mu, &nu, k).unwrap();
                let plain = expected_action(&alpha, &cand).unwrap();

                for x in 0..d {
                    worst = worst.max((got[x] - expect[x]).abs()).max((plain[x] - expect[x]).abs());
                }
                worst_norm = worst_norm.max(normalization_residual(&mu, &nu, k));
                runs += 1;
            }
        }
    }
    verdict(
        worst < 1e-10 && worst_norm < 1e-12,
        format!("{runs} instances, max deviation {worst:.1e}, normalization residual {worst_norm:.1e}"),
    )
}

fn closed_form_matcher() -> Outcome {
    let stub = StubEncoder { dim: 128 };
    let mut texts: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 0.. {
        let tokens = tokenize(&format!("sentence number {i}"));
        let b = stub.basis_index(&tokens).unwrap();
        if texts.iter().all(|(c, _)| *c != b) {
            texts.push((b, stub.embed(&tokens)));
        }
        if texts.len() == 11 {
            break;
        }
    }
    let query = texts[0].1.clone();
    let mut worst: f64 = 0.0;
    for n in 1..=10usize {
        // The exact match plus `n - 1` orthogonal rows; the no-match entry
        // makes `n` competitors with logit 0.
        let rows: Vec<Vec<f64>> = texts[..n].iter().map(|(_, v)| v.clone()).collect();
        let mem = Tensor::from_rows(&rows, stub.dim).unwrap();
        let expect = 10f64.exp() / (10f64.exp() + n as f64);
        let p = match_probs(&query, &mem, 0.1, &[0.0]).unwrap();
        let mut tape = Tape::new();
        let q = tape.constant(query.clone());
        let rv: Vec<Var> = rows.iter().map(|r| tape.constant(r.clone())).collect();
        let inv = tape.constant(vec![(-(0.1f64.ln())).exp()]);
        let bias = tape.constant(vec![0.0]);
        let probs = match_on_tape(&mut tape, q, &rv, inv, bias);
        worst = worst.max((p[0] - expect).abs()).max((tape.value(probs)[0] - expect).abs());
    }
    verdict(worst < 1e-9, format!("N = 1..10, max deviation {worst:.1e}"))
}

struct ReferenceDomain {
    name: &'static str,
    splits: [usize; 3],
    templates: usize,
    avg_turns: f64,
    sc_recall: f64,
}

const REFERENCE: [ReferenceDomain; 3] = [
    ReferenceDomain { name: "weather", splits: [797, 99, 100], templates: 187, avg_turns: 5.40, sc_recall: 0.4207 },
    ReferenceDomain { name: "navigate", splits: [800, 100, 100], templates: 259, avg_turns: 6.56, sc_recall: 0.3519 },
    ReferenceDomain { name: "schedule", splits: [828, 103, 104], templates: 158, avg_turns: 7.32, sc_recall: 0.3831 },
];

fn data_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("TEACHBOT_DATA")?);
    Split::ALL.iter().all(|s| dir.join(s.raw_file()).is_file()).then_some(dir)
}

fn data_pipeline() -> Outcome {
    let Some(dir) = data_dir() else {
        return Skip("TEACHBOT_DATA not set or incomplete; the public in-car dialog data is not bundled".into());
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for p in &REFERENCE {
        let opts = PreprocessOptions { domain: Some(p.name.into()), seed: 0, allow_small_catalog: false };
        let st = match DomainDataset::from_raw_dir(&dir, &opts) {
            Ok(ds) => ds.stats(),
            Err(e) => return Fail(format!("{}: {e}", p.name)),
        };
        let splits = [st.train_dialogs, st.dev_dialogs, st.test_dialogs];
        let tmpl_ok = (st.templates as f64 - p.templates as f64).abs() <= 0.05 * p.templates as f64;
        let turns_ok = (st.avg_turns - p.avg_turns).abs() <= 0.5;
        ok &= splits == p.splits && tmpl_ok && turns_ok;
        parts.push(format!("{} {:?} {} templates {:.2} turns", p.name, splits, st.templates, st.avg_turns));
    }
    verdict(ok, parts.join("; "))
}

fn fixture_config(variant: Variant, seed: u64) -> TrainConfig {
    TrainConfig { variant, seed, rules: Some("rules.json".into()), ..Default::default() }
}

fn overfit_sanity() -> Outcome {
    let f = make_fixture(0);
    let ds = f.dataset(0).unwrap();
    let cfg = TrainConfig {
        select_on: Split::Train,
        max_epochs: 200,
        patience: 10,
        ..fixture_config(Variant::Nlr, 0)
    };
    let start = Instant::now();
    let out = fit(&cfg, &ds, &f.rules).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let best = evaluate_split(&cfg, &out.model, &ds, &f.rules, Split::Train).unwrap().recall_at_1;
    let reached = out.history.epochs.iter().position(|e| e.dev_recall_at_1 >= 0.95);
    verdict(
        best >= 0.95 && reached.is_some() && secs < 300.0,
        format!(
            "train recall@1 {best:.3}, first reached 0.95 at epoch {}, {secs:.1}s",
            reached.map_or("never".to_string(), |e| (e + 1).to_string())
        ),
    )
}

fn directional_ablation() -> Outcome {
    let rows: Vec<(u64, f64, f64)> = (0..3u64)
        .into_par_iter()
        .map(|seed| {
            let f = make_fixture(seed);
            let ds = f.dataset(seed).unwrap();
            let score = |v: Variant| {
                let cfg = fixture_config(v, seed);
                let out = fit(&cfg, &ds, &f.rules).unwrap();
                evaluate_split(&cfg, &out.model, &ds, &f.rules, Split::Test).unwrap().recall_at_1
            };
            (seed, score(Variant::Nlr), score(Variant::NoSu))
        })
        .collect();
    let ok = rows.iter().all(|&(_, a, b)| a > b);
    let detail = rows.iter().map(|(s, a, b)| format!("seed {s}: NLR {a:.3} vs NLR-SU {b:.3}")).collect::<Vec<_>>();
    verdict(ok, detail.join("; "))
}

fn replication() -> Outcome {
    if std::env::var("TEACHBOT_EXTENDED").as_deref() != Ok("1") {
        return Skip("extended suite disabled (set TEACHBOT_EXTENDED=1; needs real data and rules, hours of CPU)".into());
    }
    let (Some(dir), Some(rules_dir)) = (data_dir(), std::env::var_os("TEACHBOT_RULES").map(PathBuf::from)) else {
        return Skip("TEACHBOT_DATA or TEACHBOT_RULES missing".into());
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for p in &REFERENCE {
        let rules_path = rules_dir.join(format!("{}.json", p.name));
        let Ok(rules) = teachbot::nlr::load_rules(&rules_path) else {
            return Skip(format!("no rules at {}", rules_path.display()));
        };
        let opts = PreprocessOptions { domain: Some(p.name.into()), seed: 0, allow_small_catalog: false };
        let ds = match DomainDataset::from_raw_dir(&dir, &opts) {
            Ok(ds) => ds,
            Err(e) => return Fail(format!("{}: {e}", p.name)),
        };
        let mean = |v: Variant| -> f64 {
            let scores: Vec<f64> = (0..3u64)
                .into_par_iter()
                .map(|seed| {
                    let cfg = TrainConfig { variant: v, seed, rules: Some(rules_path.clone()), ..Default::default() };
                    let out = fit(&cfg, &ds, &rules).unwrap();
                    evaluate_split(&cfg, &out.model, &ds, &rules, Split::Test).unwrap().recall_at_1
                })
                .collect();
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        let (nlr, base) = (mean(Variant::Nlr), mean(Variant::NoSu));
        ok &= (nlr - p.sc_recall).abs() <= 0.10 && nlr > base;
        parts.push(format!("{} NLR {nlr:.3} (reference {:.3}) NLR-SU {base:.3}", p.name, p.sc_recall));
    }
    verdict(ok, parts.join("; "))
}

fn cli_pipeline(root: &Path) -> Vec<(String, Vec<u8>)> {
    let raw = root.join("raw");
    let data = root.join("data");
    make_fixture(4).write(&raw).unwrap();
    let cfg = root.join("config.json");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let rules = raw.join("rules.json");
    let run_dir = root.join("run");
    run_ok(&["preprocess", "--data-dir", s(&raw), "--out-dir", s(&data), "--seed", "4", "--allow-small-catalog"]);
    let common = ["--data-dir", s(&data), "--config", s(&cfg), "--rules", s(&rules)];
    run_ok(&[&["train", "--out-dir", s(&run_dir), "--seed", "2"][..], &common].concat());
    run_ok(&["eval", "--checkpoint", s(&run_dir.join("checkpoint")), "--data-dir", s(&data), "--out-dir", s(&run_dir)]);
    run_ok(&[&["ablate", "--out-dir", s(&root.join("ablate")), "--seeds", "0,1"][..], &common].concat());
    run_ok(&[&["curve", "--out-dir", s(&root.join("curve")), "--seeds", "0", "--sizes", "3,6"][..], &common].concat());
    let files = [
        "data/train.jsonl",
        "data/dev.jsonl",
        "data/test.jsonl",
        "data/catalog.json",
        "data/splits.json",
        "data/stats.json",
        "run/metrics.jsonl",
        "run/report.json",
        "run/eval.json",
        "run/checkpoint/params.bin",
        "ablate/ablation.json",
        "curve/curve.csv",
        "curve/curve_summary.csv",
    ];
    files.iter().map(|f| (f.to_string(), fs::read(root.join(f)).unwrap())).collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (x, y) = (cli_pipeline(a.path()), cli_pipeline(b.path()));
    let differing: Vec<&str> = x.iter().zip(&y).filter(|(p, q)| p.1 != q.1).map(|(p, _)| p.0.as_str()).collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} output files byte-identical across two runs", x.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn candidate_statistics() -> Outcome {
    let (size, draws, gold) = (187usize, 10_000usize, 42usize);
    let mut rng = SeededRng::new(7).derive("acceptance-candidates");
    let mut counts = vec![0usize; size];
    let mut positions = [0usize; 10];
    for _ in 0..draws {
        let (ids, g) = make_candidates(gold, size, &mut rng).unwrap();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != 10 || ids[g] != gold || ids.iter().filter(|&&i| i == gold).count() != 1 {
            return Fail(format!("malformed candidate set {ids:?}"));
        }
        positions[g] += 1;
        for (j, &id) in ids.iter().enumerate() {
            if j != g {
                counts[id] += 1;
            }
        }
    }
    let expected = draws as f64 * 9.0 / (size - 1) as f64;
    let chi: f64 = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != gold)
        .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
        .sum();
    let df = (size - 2) as f64;
    let pos_expected = draws as f64 / 10.0;
    let pos_chi: f64 = positions.iter().map(|&c| (c as f64 - pos_expected).powi(2) / pos_expected).sum();
    let ok = (chi - df).abs() <= 3.0 * (2.0 * df).sqrt() && (pos_chi - 9.0).abs() <= 3.0 * 18f64.sqrt();
    verdict(ok, format!("distractor chi-square {chi:.1} (df {df}), gold position chi-square {pos_chi:.1} (df 9)"))
}
