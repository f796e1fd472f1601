use teachbot::data::{make_fixture, DomainDataset, Split};
use teachbot::model::ModelConfig;
use teachbot::nlr::RuleBook;
use teachbot::train::*;

fn small(variant: Variant, seed: u64) -> TrainConfig {
    TrainConfig {
        variant,
        seed,
        rules: Some("rules.json".into()),
        model: ModelConfig { word_dim: 8, sentence_hidden: 8, context_hidden: 12, ..Default::default() },
        max_epochs: 12,
        lr: 1e-2,
        ..Default::default()
    }
}

fn fixture(seed: u64) -> (DomainDataset, RuleBook) {
    let f = make_fixture(seed);
    (f.dataset(seed).unwrap(), f.rules)
}

#[test]
fn early_stopping_contract() {
    let (ds, rules) = fixture(1);
    for patience in [0, 2] {
        let cfg = TrainConfig { patience, max_epochs: 40, ..small(Variant::Nlr, 3) };
        let out = fit(&cfg, &ds, &rules).unwrap();
        let h = &out.history;
        let recalls: Vec<f64> = h.epochs.iter().map(|e| e.dev_recall_at_1).collect();
        let best = recalls.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(h.best_epoch, recalls.iter().position(|&r| r == best).unwrap());
        if h.epochs.len() < cfg.max_epochs {
            // Stops exactly `patience + 1` epochs after the last improvement.
            assert_eq!(h.epochs.len(), h.best_epoch + patience + 2);
        }
        let rep = evaluate_split(&cfg, &out.model, &ds, &rules, Split::Dev).unwrap();
        assert_eq!(rep.recall_at_1, best, "returned parameters are the best epoch's");
    }
}

#[test]
fn seeded_training_is_deterministic() {
    let (ds, rules) = fixture(2);
    let cfg = small(Variant::Nlr, 5);
    let a = fit(&cfg, &ds, &rules).unwrap();
    let b = fit(&cfg, &ds, &rules).unwrap();
    assert_eq!((&a.history.epochs, a.history.best_epoch), (&b.history.epochs, b.history.best_epoch));
    assert_eq!(history_jsonl(&a.history).unwrap(), history_jsonl(&b.history).unwrap());
    for (p, q) in a.model.params.iter().zip(b.model.params.iter()) {
        assert_eq!(p.value, q.value, "{}", p.name);
    }
}

#[test]
fn turn_updates_and_resampling_train() {
    let (ds, rules) = fixture(0);
    for cfg in [
        TrainConfig { update: UpdateMode::Turn, ..small(Variant::NoS, 1) },
        TrainConfig { resample_per_epoch: true, ..small(Variant::NoU, 1) },
    ] {
        let out = fit(&cfg, &ds, &rules).unwrap();
        let first = out.history.epochs.first().unwrap().train_loss;
        let last = out.history.epochs.last().unwrap().train_loss;
        assert!(last < first, "{cfg:?}: {first} -> {last}");
    }
}

#[test]
fn harness_shapes() {
    let (ds, rules) = fixture(4);
    let base = TrainConfig { max_epochs: 2, ..small(Variant::Nlr, 0) };
    let abl = ablate(&base, &ds, &rules, &[0, 1]).unwrap();
    assert_eq!(abl.rows.iter().map(|r| r.variant).collect::<Vec<_>>(), Variant::ALL.to_vec());
    for r in &abl.rows {
        assert_eq!(r.recall_at_1.len(), 2);
        assert!((0.0..=1.0).contains(&r.mean));
    }
    assert_eq!(abl.to_table().lines().count(), 5);

    let curve = learning_curve(&base, &ds, &rules, &[2, 6], &[0, 1], &[Variant::Nlr, Variant::NoSu]).unwrap();
    assert_eq!(curve.rows.len(), 8);
    assert_eq!(curve.points.len(), 4);
    assert_eq!(curve.to_csv().lines().count(), 9);
    assert!(curve.rows.iter().all(|r| (0.0..=1.0).contains(&r.recall1)));
    assert!(learning_curve(&base, &ds, &rules, &[7], &[0], &[Variant::Nlr]).is_err());
}

#[test]
fn subset_and_validation() {
    let (ds, rules) = fixture(0);
    let cfg = TrainConfig { train_size: Some(3), ..small(Variant::NoSu, 9) };
    let sub = training_subset(&cfg, &ds).unwrap();
    assert_eq!(sub.len(), 3);
    assert_eq!(sub, training_subset(&cfg, &ds).unwrap());
    let too_many = TrainConfig { train_size: Some(7), ..cfg.clone() };
    assert!(fit(&too_many, &ds, &rules).is_err());
    let no_rules = TrainConfig { rules: None, ..small(Variant::Nlr, 0) };
    assert!(fit(&no_rules, &ds, &rules).is_err());
}
