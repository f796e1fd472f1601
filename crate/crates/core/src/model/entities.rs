use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::placeholder_len;
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Slot types of a domain and the knowledge-base values of each.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSchema {
    pub slot_types: Vec<String>,
    #[serde(default)]
    pub lexicon: BTreeMap<String, Vec<String>>,
}

impl DomainSchema {
    pub fn lexicon(&self) -> Lexicon {
        let mut lex = Lexicon::new();
        for (slot, values) in &self.lexicon {
            for v in values {
                lex.add(slot, v);
            }
        }
        lex
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One entity occurrence; `start..end` are character offsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub slot: String,
    pub value: String,
    #[serde(default)]
    pub start: usize,
    #[serde(default)]
    pub end: usize,
}

fn lower(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Case-insensitive dictionary of slot values.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    entries: Vec<(Vec<char>, String)>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` under `slot`. The first slot registered for a value
    /// keeps it.
    pub fn add(&mut self, slot: &str, value: &str) {
        let key: Vec<char> = value.trim().chars().map(lower).collect();
        if key.is_empty() || self.entries.iter().any(|(k, _)| *k == key) {
            return;
        }
        self.entries.push((key, slot.to_string()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Leftmost-longest, non-overlapping, case-insensitive matches of lexicon
/// values that start and end on word boundaries.
pub fn extract_entities(text: &str, lexicon: &Lexicon) -> Vec<EntityMention> {
    let chars: Vec<char> = text.chars().collect();
    let low: Vec<char> = chars.iter().map(|&c| lower(c)).collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i > 0 && is_word_char(chars[i - 1]) && is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let mut best: Option<(usize, &str)> = None;
        for (key, slot) in &lexicon.entries {
            let len = key.len();
            if i + len > n || low[i..i + len] != key[..] {
                continue;
            }
            let end = i + len;
            if end < n && is_word_char(chars[end]) && is_word_char(chars[end - 1]) {
                continue;
            }
            if best.is_none_or(|(l, _)| len > l) {
                best = Some((len, slot));
            }
        }
        match best {
            Some((len, slot)) => {
                out.push(EntityMention {
                    slot: slot.to_string(),
                    value: chars[i..i + len].iter().collect(),
                    start: i,
                    end: i + len,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Replaces every mention span with its `<slot>` placeholder.
pub fn replace_mentions(text: &str, mentions: &[EntityMention]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for m in mentions {
        out.extend(&chars[pos..m.start]);
        out.push('<');
        out.push_str(&m.slot);
        out.push('>');
        pos = m.end;
    }
    out.extend(&chars[pos..]);
    out
}

/// Grounded slot values of a dialog.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntityStore {
    values: BTreeMap<String, String>,
}

impl EntityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, slot: &str, value: &str) {
        self.values.insert(slot.to_string(), value.to_string());
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.values.get(slot).map(String::as_str)
    }

    pub fn is_present(&self, slot: &str) -> bool {
        self.values.contains_key(slot)
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    /// One flag per slot type in schema order: 1 when a value is set.
    pub fn flags<F: Scalar>(&self, slot_types: &[String]) -> Vec<F> {
        slot_types.iter().map(|s| if self.is_present(s) { F::one() } else { F::zero() }).collect()
    }
}

/// Stores the new mentions (later mentions overwrite a slot) and returns
/// the presence flags.
pub fn entity_track<F: Scalar>(store: &mut EntityStore, mentions: &[EntityMention], slot_types: &[String]) -> Vec<F> {
    for m in mentions {
        store.set(&m.slot, &m.value);
    }
    store.flags(slot_types)
}

/// Fills `<slot>` placeholders from the store; unknown slots stay verbatim.
pub fn entity_output(template: &str, store: &EntityStore) -> String {
    let chars: Vec<char> = template.chars().collect();
    let mut out = String::with_capacity(template.len());
    let mut i = 0;
    while i < chars.len() {
        if let Some(len) = placeholder_len(&chars[i..]) {
            let slot: String = chars[i + 1..i + len - 1].iter().collect();
            match store.get(&slot) {
                Some(v) => out.push_str(v),
                None => out.extend(&chars[i..i + len]),
            }
            i += len;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(pairs: &[(&str, &str)]) -> Lexicon {
        let mut l = Lexicon::new();
        for (s, v) in pairs {
            l.add(s, v);
        }
        l
    }

    #[test]
    fn extraction_examples() {
        let l = lex(&[("city", "Seattle")]);
        let m = extract_entities("5 miles away in Seattle", &l);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].slot.as_str(), m[0].value.as_str()), ("city", "Seattle"));
        assert!(extract_entities("nothing here", &l).is_empty());

        let l = lex(&[("city", "york"), ("city", "new york")]);
        let m = extract_entities("fly to New York tomorrow", &l);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].value, "New York");
    }

    #[test]
    fn word_boundaries_respected() {
        let l = lex(&[("day", "mon")]);
        assert!(extract_entities("monday", &l).is_empty());
        assert_eq!(extract_entities("mon, tue", &l).len(), 1);
        assert_eq!(replace_mentions("see you mon!", &extract_entities("see you mon!", &l)), "see you <day>!");
    }

    #[test]
    fn tracking_and_output() {
        let slots = vec!["city".to_string(), "date".to_string()];
        let mut store = EntityStore::new();
        let m = vec![EntityMention { slot: "city".into(), value: "Seattle".into(), start: 0, end: 7 }];
        assert_eq!(entity_track::<f64>(&mut store, &m, &slots), vec![1.0, 0.0]);
        let m2 = vec![EntityMention { slot: "city".into(), value: "Boston".into(), start: 0, end: 6 }];
        assert_eq!(entity_track::<f64>(&mut store, &m2, &slots), vec![1.0, 0.0]);
        assert_eq!(store.get("city"), Some("Boston"));

        let mut store = EntityStore::new();
        store.set("city", "Seattle");
        assert_eq!(entity_output("<city>, right?", &store), "Seattle, right?");
        assert_eq!(entity_output("no slots here", &store), "no slots here");
        assert_eq!(entity_output("<date> it is", &EntityStore::new()), "<date> it is");
    }
}
