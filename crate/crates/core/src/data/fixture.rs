use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::dataset::{write_atomic, DomainDataset, PreprocessOptions, Split};
use super::kvret::{to_kvret_json, RawDialog, RawTurn, Speaker};
use crate::error::{Error, Result};
use crate::nlr::{Rule, RuleBook, RuleKind, RuleSet};
use crate::numcore::SeededRng;

pub const FIXTURE_DOMAIN: &str = "restaurant";
const CUISINES: [&str; 4] = ["French", "Italian", "Thai", "Korean"];
const LOCATIONS: [&str; 3] = ["downtown", "uptown", "the harbor"];

/// User phrasings per intent: two for training, one for dev, one for test.
/// `{c}` and `{l}` stand for a cuisine and a location.
const USER: [[&str; 4]; 6] = [
    ["hi there", "hello", "good evening friend", "hey anybody around"],
    ["i am hungry", "i want to eat", "find me a meal please", "my stomach is growling"],
    ["{c} food please", "i like {c}", "maybe some {c} dishes", "craving {c} tonight"],
    ["in {l}", "somewhere {l}", "near {l} would be good", "close to {l} works"],
    ["thank you", "thanks a lot", "much appreciated", "cheers mate"],
    ["bye", "goodbye", "see you later", "farewell for now"],
];

const SYSTEM: [&str; 6] = [
    "Hello, how can I help you?",
    "What kind of food would you like?",
    "OK, {c} it is. Which area?",
    "Searching near {l} now.",
    "You are welcome!",
    "Have a nice day.",
];

/// Delexicalized form of a fixture text.
fn delex(text: &str) -> String {
    crate::encoder::tokenize(&text.replace("{c}", "<cuisine>").replace("{l}", "<location>")).join(" ")
}

/// Synthetic restaurant domain: 10 dialogs (6/2/2), 6 templates and the
/// slots `cuisine` and `location`. Dev and test dialogs use phrasings never
/// seen in training; the u-rules name every phrasing's gold response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fixture {
    pub train: Vec<RawDialog>,
    pub dev: Vec<RawDialog>,
    pub test: Vec<RawDialog>,
    pub rules: RuleBook,
}

fn make_dialog(id: String, phrasing: usize, rng: &mut SeededRng) -> RawDialog {
    // The cuisine intent is always followed by the location intent.
    let mut units: Vec<Vec<usize>> = vec![vec![0], vec![1], vec![2, 3], vec![4], vec![5]];
    units.shuffle(rng);
    let intents: Vec<usize> = units.into_iter().flatten().take(4).collect();
    let cuisine = CUISINES[rng.gen_range(0..CUISINES.len())];
    let location = LOCATIONS[rng.gen_range(0..LOCATIONS.len())];
    let fill = |s: &str| s.replace("{c}", cuisine).replace("{l}", location);
    let mut turns = Vec::new();
    for i in intents {
        let p = if phrasing == 0 { rng.gen_range(0..2) } else { phrasing };
        turns.push(RawTurn { speaker: Speaker::Driver, utterance: fill(USER[i][p]), slots: BTreeMap::new() });
        let mut slots = BTreeMap::new();
        if SYSTEM[i].contains("{c}") {
            slots.insert("cuisine".to_string(), cuisine.to_string());
        }
        if SYSTEM[i].contains("{l}") {
            slots.insert("location".to_string(), location.to_string());
        }
        turns.push(RawTurn { speaker: Speaker::Assistant, utterance: fill(SYSTEM[i]), slots });
    }
    let kb = CUISINES
        .iter()
        .flat_map(|c| {
            LOCATIONS.iter().map(move |l| {
                BTreeMap::from([("cuisine".to_string(), c.to_string()), ("location".to_string(), l.to_string())])
            })
        })
        .collect();
    RawDialog { id, domain: FIXTURE_DOMAIN.to_string(), turns, kb }
}

fn fixture_rules() -> RuleBook {
    let mut u = Vec::new();
    for (i, phrasings) in USER.iter().enumerate() {
        for p in phrasings {
            u.push(Rule { pre: delex(p), post: delex(SYSTEM[i]) });
        }
    }
    let s = vec![Rule { pre: delex(SYSTEM[2]), post: delex(SYSTEM[3]) }];
    RuleBook { s_rules: RuleSet { kind: RuleKind::System, rules: s }, u_rules: RuleSet { kind: RuleKind::User, rules: u } }
}

/// Deterministic fixture for `seed`.
pub fn make_fixture(seed: u64) -> Fixture {
    let mut rng = SeededRng::new(seed).derive("fixture");
    let mut split = |name: &str, n: usize, phrasing: usize| -> Vec<RawDialog> {
        (0..n).map(|i| make_dialog(format!("{name}-{i}"), phrasing, &mut rng)).collect()
    };
    let train = split("train", 6, 0);
    let dev = split("dev", 2, 2);
    let test = split("test", 2, 3);
    Fixture { train, dev, test, rules: fixture_rules() }
}

impl Fixture {
    pub fn options(seed: u64) -> PreprocessOptions {
        PreprocessOptions { domain: None, seed, allow_small_catalog: true }
    }

    /// Preprocessed fixture with candidates sampled from `seed`.
    pub fn dataset(&self, seed: u64) -> Result<DomainDataset> {
        DomainDataset::build([&self.train, &self.dev, &self.test], &Self::options(seed))
    }

    /// Writes the three corpus files and `rules.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (split, dialogs) in Split::ALL.iter().zip([&self.train, &self.dev, &self.test]) {
            let text = serde_json::to_string_pretty(&to_kvret_json(dialogs))?;
            write_atomic(&dir.join(split.raw_file()), text.as_bytes())?;
        }
        write_atomic(&dir.join("rules.json"), self.rules.to_json().as_bytes())
    }
}
