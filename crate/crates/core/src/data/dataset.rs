use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::candidates::candidate_set;
use super::delex::{delexicalize, dialog_lexicon, slot_name};
use super::kvret::{load_kvret, merge_same_speaker, RawDialog, Speaker};
use crate::encoder::tokenize;
use crate::error::{bail, Error, Result};
use crate::model::{DomainSchema, EntityMention, TemplateCatalog};
use crate::numcore::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// File name of the split in the public corpus.
    pub fn raw_file(self) -> String {
        format!("kvret_{}_public.json", self.name())
    }
}

/// One user turn paired with the system response that followed it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedTurn {
    pub dialog_id: String,
    pub turn_index: usize,
    pub user_text: String,
    pub user_text_raw: String,
    pub mentions: Vec<EntityMention>,
    pub system_text: String,
    pub system_text_raw: String,
    pub system_mentions: Vec<EntityMention>,
    pub gold_template_id: usize,
    pub candidate_ids: Vec<usize>,
    pub gold_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedDialog {
    pub id: String,
    /// Utterances after merging same-speaker runs.
    pub utterances: usize,
    pub turns: Vec<ProcessedTurn>,
}

/// Preprocessed dialogs of one domain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainDataset {
    pub domain: Option<String>,
    pub train: Vec<ProcessedDialog>,
    pub dev: Vec<ProcessedDialog>,
    pub test: Vec<ProcessedDialog>,
    pub catalog: TemplateCatalog,
    pub schema: DomainSchema,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Keep only dialogs of this domain (`None` keeps all).
    pub domain: Option<String>,
    pub seed: u64,
    /// Rank small catalogs in full instead of failing.
    pub allow_small_catalog: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train_dialogs: usize,
    pub dev_dialogs: usize,
    pub test_dialogs: usize,
    pub templates: usize,
    pub avg_turns: f64,
    pub avg_user_tokens: f64,
    pub avg_system_tokens: f64,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "train dialogs: {}", self.train_dialogs)?;
        writeln!(f, "dev dialogs: {}", self.dev_dialogs)?;
        writeln!(f, "test dialogs: {}", self.test_dialogs)?;
        writeln!(f, "action templates: {}", self.templates)?;
        writeln!(f, "avg turns per dialog: {:.2}", self.avg_turns)?;
        writeln!(f, "avg tokens per user turn: {:.2}", self.avg_user_tokens)?;
        write!(f, "avg tokens per system turn: {:.2}", self.avg_system_tokens)
    }
}

struct DelexDialog {
    id: String,
    utterances: usize,
    turns: Vec<DelexTurn>,
}

struct DelexTurn {
    user_text: String,
    user_text_raw: String,
    mentions: Vec<EntityMention>,
    system_text: String,
    system_text_raw: String,
    system_mentions: Vec<EntityMention>,
}

fn delex_dialog(d: &RawDialog) -> DelexDialog {
    let lex = dialog_lexicon(d);
    let merged = merge_same_speaker(&d.turns);
    let mut turns = Vec::new();
    let mut pending: Option<&str> = None;
    for t in &merged {
        match t.speaker {
            Speaker::Driver => pending = Some(&t.utterance),
            Speaker::Assistant => {
                let user_raw = pending.take().unwrap_or("");
                let (user_text, mentions) = delexicalize(user_raw, &lex);
                let (system_text, system_mentions) = delexicalize(&t.utterance, &lex);
                turns.push(DelexTurn {
                    user_text,
                    user_text_raw: user_raw.to_string(),
                    mentions,
                    system_text,
                    system_text_raw: t.utterance.clone(),
                    system_mentions,
                });
            }
        }
    }
    DelexDialog { id: d.id.clone(), utterances: merged.len(), turns }
}

fn schema_of(raw: &[&RawDialog]) -> DomainSchema {
    let mut lexicon: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in raw {
        let rows = d.turns.iter().map(|t| &t.slots).chain(d.kb.iter());
        for row in rows {
            for (slot, value) in row {
                let v = value.trim().to_lowercase();
                let set = lexicon.entry(slot_name(slot)).or_default();
                if !v.is_empty() {
                    set.insert(v);
                }
            }
        }
    }
    DomainSchema {
        slot_types: lexicon.keys().cloned().collect(),
        lexicon: lexicon.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
    }
}

impl DomainDataset {
    /// Delexicalizes the three splits, builds the corpus-wide catalog in
    /// train, dev, test order and samples candidate sets.
    pub fn build(raw: [&[RawDialog]; 3], opts: &PreprocessOptions) -> Result<Self> {
        let keep = |d: &&RawDialog| opts.domain.as_deref().is_none_or(|dom| d.domain.eq_ignore_ascii_case(dom));
        let filtered: Vec<Vec<&RawDialog>> = raw.iter().map(|s| s.iter().filter(keep).collect()).collect();
        if filtered[0].is_empty() {
            match &opts.domain {
                Some(dom) => bail!(Validation, "no training dialogs in domain {dom:?}"),
                None => bail!(Validation, "training split has no dialogs"),
            }
        }

        let mut seen = HashSet::new();
        for d in filtered.iter().flatten() {
            if !seen.insert(d.id.as_str()) {
                bail!(Validation, "dialog id {:?} appears more than once", d.id);
            }
        }

        let delexed: Vec<Vec<DelexDialog>> =
            filtered.iter().map(|s| s.par_iter().map(|d| delex_dialog(d)).collect()).collect();

        let mut catalog = TemplateCatalog::new();
        let golds: Vec<Vec<Vec<usize>>> = delexed
            .iter()
            .map(|s| s.iter().map(|d| d.turns.iter().map(|t| catalog.observe(&t.system_text)).collect()).collect())
            .collect();

        let mut rng = SeededRng::new(opts.seed).derive("candidates");
        let mut splits: Vec<Vec<ProcessedDialog>> = Vec::with_capacity(3);
        for (dialogs, golds) in delexed.into_iter().zip(golds) {
            let mut out = Vec::with_capacity(dialogs.len());
            for (d, gold_ids) in dialogs.into_iter().zip(golds) {
                let mut turns = Vec::with_capacity(d.turns.len());
                for (i, (t, gold)) in d.turns.into_iter().zip(gold_ids).enumerate() {
                    let (candidate_ids, gold_index) =
                        candidate_set(gold, catalog.len(), &mut rng, opts.allow_small_catalog)?;
                    turns.push(ProcessedTurn {
                        dialog_id: d.id.clone(),
                        turn_index: i,
                        user_text: t.user_text,
                        user_text_raw: t.user_text_raw,
                        mentions: t.mentions,
                        system_text: t.system_text,
                        system_text_raw: t.system_text_raw,
                        system_mentions: t.system_mentions,
                        gold_template_id: gold,
                        candidate_ids,
                        gold_index,
                    });
                }
                out.push(ProcessedDialog { id: d.id, utterances: d.utterances, turns });
            }
            splits.push(out);
        }
        let test = splits.pop().unwrap_or_default();
        let dev = splits.pop().unwrap_or_default();
        let train = splits.pop().unwrap_or_default();
        let all: Vec<&RawDialog> = filtered.into_iter().flatten().collect();
        Ok(Self {
            domain: opts.domain.clone(),
            train,
            dev,
            test,
            catalog,
            schema: schema_of(&all),
            seed: opts.seed,
        })
    }

    /// Loads the three corpus files from `raw_dir`. Every file is read and
    /// validated before anything is returned.
    pub fn from_raw_dir(raw_dir: &Path, opts: &PreprocessOptions) -> Result<Self> {
        let mut loaded = Vec::with_capacity(3);
        for split in Split::ALL {
            let path = raw_dir.join(split.raw_file());
            if !path.is_file() {
                bail!(Validation, "missing {} split file {}", split.name(), path.display());
            }
            loaded.push(load_kvret(&path)?);
        }
        Self::build([&loaded[0], &loaded[1], &loaded[2]], opts)
    }

    pub fn split(&self, split: Split) -> &[ProcessedDialog] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<ProcessedDialog> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn stats(&self) -> DatasetStats {
        dataset_stats(self)
    }

    /// Checks the candidate, catalog and split invariants.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for split in Split::ALL {
            for d in self.split(split) {
                if !ids.insert(d.id.as_str()) {
                    bail!(Validation, "dialog {:?} appears in more than one split", d.id);
                }
                for t in &d.turns {
                    let n = t.candidate_ids.len();
                    if t.gold_index >= n || t.candidate_ids[t.gold_index] != t.gold_template_id {
                        bail!(Validation, "{} turn {}: gold not at gold_index", d.id, t.turn_index);
                    }
                    if t.candidate_ids.iter().filter(|&&c| c == t.gold_template_id).count() != 1 {
                        bail!(Validation, "{} turn {}: gold not present exactly once", d.id, t.turn_index);
                    }
                    let distinct: HashSet<_> = t.candidate_ids.iter().collect();
                    if distinct.len() != n || t.candidate_ids.iter().any(|&c| c >= self.catalog.len()) {
                        bail!(Validation, "{} turn {}: invalid candidate ids", d.id, t.turn_index);
                    }
                    if self.catalog.text(t.gold_template_id) != t.system_text {
                        bail!(Validation, "{} turn {}: gold template text mismatch", d.id, t.turn_index);
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes `{train,dev,test}.jsonl`, `splits.json`, `catalog.json` and
    /// `schema.json`. Each file is written to a temporary name and renamed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(PathBuf, String)> = Vec::new();
        let mut manifest = Manifest { domain: self.domain.clone(), seed: self.seed, splits: BTreeMap::new() };
        for split in Split::ALL {
            let mut text = String::new();
            let mut entries = Vec::new();
            for d in self.split(split) {
                entries.push(ManifestDialog { id: d.id.clone(), utterances: d.utterances });
                for t in &d.turns {
                    text.push_str(&serde_json::to_string(t)?);
                    text.push('\n');
                }
            }
            manifest.splits.insert(split, entries);
            files.push((dir.join(format!("{}.jsonl", split.name())), text));
        }
        files.push((dir.join("splits.json"), serde_json::to_string_pretty(&manifest)? + "\n"));
        files.push((dir.join("catalog.json"), self.catalog.to_json()));
        files.push((dir.join("schema.json"), serde_json::to_string_pretty(&self.schema)? + "\n"));
        for (path, text) in files {
            write_atomic(&path, text.as_bytes())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let manifest: Manifest = serde_json::from_str(&read("splits.json")?)?;
        let catalog = TemplateCatalog::from_json(&read("catalog.json")?)?;
        let schema: DomainSchema = serde_json::from_str(&read("schema.json")?)?;
        let mut ds = DomainDataset { domain: manifest.domain.clone(), catalog, schema, seed: manifest.seed, ..Default::default() };
        for split in Split::ALL {
            let name = format!("{}.jsonl", split.name());
            let path = dir.join(&name);
            let mut by_id: HashMap<String, Vec<ProcessedTurn>> = HashMap::new();
            for (i, line) in read(&name)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let t: ProcessedTurn = serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
                by_id.entry(t.dialog_id.clone()).or_default().push(t);
            }
            let entries = manifest.splits.get(&split).cloned().unwrap_or_default();
            let dialogs: Vec<ProcessedDialog> = entries
                .into_iter()
                .map(|m| ProcessedDialog { turns: by_id.remove(&m.id).unwrap_or_default(), id: m.id, utterances: m.utterances })
                .collect();
            if let Some(stray) = by_id.keys().next() {
                bail!(Validation, "{}: dialog {stray:?} is not listed in splits.json", path.display());
            }
            *ds.split_mut(split) = dialogs;
        }
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    domain: Option<String>,
    seed: u64,
    splits: BTreeMap<Split, Vec<ManifestDialog>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct ManifestDialog {
    id: String,
    utterances: usize,
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn mean(sum: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Corpus statistics over all three splits. Turns per dialog count merged
/// utterances of both speakers.
pub fn dataset_stats(ds: &DomainDataset) -> DatasetStats {
    let all: Vec<&ProcessedDialog> = Split::ALL.iter().flat_map(|&s| ds.split(s)).collect();
    let utterances: usize = all.iter().map(|d| d.utterances).sum();
    let (mut user_tokens, mut user_turns, mut sys_tokens, mut sys_turns) = (0, 0, 0, 0);
    for t in all.iter().flat_map(|d| &d.turns) {
        if !t.user_text_raw.trim().is_empty() {
            user_tokens += tokenize(&t.user_text_raw).len();
            user_turns += 1;
        }
        sys_tokens += tokenize(&t.system_text_raw).len();
        sys_turns += 1;
    }
    DatasetStats {
        train_dialogs: ds.train.len(),
        dev_dialogs: ds.dev.len(),
        test_dialogs: ds.test.len(),
        templates: ds.catalog.len(),
        avg_turns: mean(utterances, all.len()),
        avg_user_tokens: mean(user_tokens, user_turns),
        avg_system_tokens: mean(sys_tokens, sys_turns),
    }
}

/// Replaces every turn's candidate set with a fresh sample.
pub fn resample_candidates(dialogs: &mut [ProcessedDialog], catalog_size: usize, allow_small: bool, rng: &mut SeededRng) -> Result<()> {
    for t in dialogs.iter_mut().flat_map(|d| d.turns.iter_mut()) {
        let (ids, pos) = candidate_set(t.gold_template_id, catalog_size, rng, allow_small)?;
        t.candidate_ids = ids;
        t.gold_index = pos;
    }
    Ok(())
}
