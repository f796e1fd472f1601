use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, Variant};
use super::fit::{evaluate_split, fit, TrainHistory};
use crate::data::{write_atomic, DomainDataset, Split};
use crate::error::{bail, Result};
use crate::nlr::RuleBook;

/// Seeds used by ablations and curves unless overridden.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Test recall@1 per seed, in seed order.
    pub recall_at_1: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    /// NLR, NLR-S, NLR-U, NLR-SU in that order.
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> &AblationRow {
        self.rows.iter().find(|r| r.variant == v).expect("all variants present")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("variant  mean    per-seed\n");
        for r in &self.rows {
            let seeds: Vec<String> = r.recall_at_1.iter().map(|x| format!("{x:.4}")).collect();
            let _ = writeln!(s, "{:<8} {:.4}  {}", r.variant.name(), r.mean, seeds.join(" "));
        }
        s
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (0 for fewer than two values).
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One training run per cell, in parallel; results keep cell order.
fn run_cells(cells: &[TrainConfig], ds: &DomainDataset, rules: &RuleBook) -> Result<Vec<(f64, TrainHistory)>> {
    cells
        .par_iter()
        .map(|cfg| {
            let out = fit(cfg, ds, rules)?;
            let report = evaluate_split(cfg, &out.model, ds, rules, Split::Test)?;
            Ok((report.recall_at_1, out.history))
        })
        .collect()
}

/// Trains every variant with every seed on identical data and reports test
/// recall@1.
pub fn ablate(base: &TrainConfig, ds: &DomainDataset, rules: &RuleBook, seeds: &[u64]) -> Result<AblationReport> {
    if seeds.is_empty() {
        bail!(Argument, "ablation needs at least one seed");
    }
    let mut cells = Vec::new();
    for v in Variant::ALL {
        for &seed in seeds {
            let cfg = TrainConfig { variant: v, seed, ..base.clone() };
            cfg.validate()?;
            cells.push(cfg);
        }
    }
    let results = run_cells(&cells, ds, rules)?;
    let rows = Variant::ALL
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let recall_at_1: Vec<f64> = results[i * seeds.len()..(i + 1) * seeds.len()].iter().map(|r| r.0).collect();
            AblationRow { variant, mean: mean(&recall_at_1), recall_at_1 }
        })
        .collect();
    Ok(AblationReport { seeds: seeds.to_vec(), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub size: usize,
    pub seed: u64,
    pub variant: Variant,
    pub recall1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub variant: Variant,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub rows: Vec<CurveRow>,
    pub points: Vec<CurvePoint>,
}

impl CurveReport {
    /// `size,seed,variant,recall1` with one line per run.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("size,seed,variant,recall1\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.size, r.seed, r.variant.name(), r.recall1);
        }
        s
    }

    /// `size,variant,mean,std` with one line per curve point.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("size,variant,mean,std\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.size, p.variant.name(), p.mean, p.std);
        }
        s
    }
}

/// Test recall@1 after training on the first `size` dialogs of a seeded
/// shuffle, for every size, seed and variant.
pub fn learning_curve(
    base: &TrainConfig,
    ds: &DomainDataset,
    rules: &RuleBook,
    sizes: &[usize],
    seeds: &[u64],
    variants: &[Variant],
) -> Result<CurveReport> {
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > ds.train.len()) {
        bail!(Argument, "curve size {s} outside 1..={} train dialogs", ds.train.len());
    }
    if seeds.is_empty() || variants.is_empty() {
        bail!(Argument, "curve needs at least one seed and one variant");
    }
    let mut cells = Vec::new();
    let mut keys = Vec::new();
    for &size in sizes {
        for &variant in variants {
            for &seed in seeds {
                let cfg = TrainConfig { variant, seed, train_size: Some(size), ..base.clone() };
                cfg.validate()?;
                cells.push(cfg);
                keys.push((size, seed, variant));
            }
        }
    }
    let results = run_cells(&cells, ds, rules)?;
    let rows: Vec<CurveRow> =
        keys.iter().zip(&results).map(|(&(size, seed, variant), r)| CurveRow { size, seed, variant, recall1: r.0 }).collect();
    let mut points = Vec::new();
    for &size in sizes {
        for &variant in variants {
            let xs: Vec<f64> = rows.iter().filter(|r| r.size == size && r.variant == variant).map(|r| r.recall1).collect();
            points.push(CurvePoint { size, variant, mean: mean(&xs), std: std_dev(&xs) });
        }
    }
    Ok(CurveReport { rows, points })
}

/// One JSON object per epoch.
pub fn history_jsonl(history: &TrainHistory) -> Result<String> {
    let mut s = String::new();
    for e in &history.epochs {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}
