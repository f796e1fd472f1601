use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// A delexicalized system response or API call; the unit being ranked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTemplate {
    pub id: usize,
    pub text: String,
    pub is_api: bool,
    #[serde(default)]
    pub count: usize,
}

/// Distinct action templates with dense ids in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TemplateCatalog {
    templates: Vec<ActionTemplate>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    templates: Vec<ActionTemplate>,
}

pub fn is_api_text(text: &str) -> bool {
    text.trim_start().starts_with("api_call")
}

impl TemplateCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one occurrence of `text`, returning its id.
    pub fn observe(&mut self, text: &str) -> usize {
        if let Some(&id) = self.index.get(text) {
            self.templates[id].count += 1;
            return id;
        }
        let id = self.templates.len();
        self.templates.push(ActionTemplate { id, text: text.to_string(), is_api: is_api_text(text), count: 1 });
        self.index.insert(text.to_string(), id);
        id
    }

    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut c = Self::new();
        for t in texts {
            c.observe(t.as_ref());
        }
        c
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&ActionTemplate> {
        self.templates.get(id)
    }

    pub fn text(&self, id: usize) -> &str {
        &self.templates[id].text
    }

    pub fn id_of(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionTemplate> {
        self.templates.iter()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.templates.iter().map(|t| t.text.as_str()).collect()
    }

    /// Hash of the ordered template texts; checkpoints record it so a model
    /// is never paired with a different catalog.
    pub fn fingerprint(&self) -> u64 {
        let joined = self.templates.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n");
        crate::fnv1a(joined.as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CatalogFile { templates: self.templates.clone() }).expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CatalogFile = serde_json::from_str(text)?;
        let mut c = Self::new();
        for (i, t) in file.templates.into_iter().enumerate() {
            if t.id != i {
                bail!(Format, "catalog ids must be dense and ordered; entry {i} has id {}", t.id);
            }
            if c.index.contains_key(&t.text) {
                bail!(Format, "duplicate template text {:?}", t.text);
            }
            c.index.insert(t.text.clone(), i);
            c.templates.push(t);
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_order() {
        let c = TemplateCatalog::from_texts(&["b", "a", "b", "api_call x"]);
        assert_eq!(c.len(), 3);
        assert_eq!(c.id_of("b"), Some(0));
        assert_eq!(c.get(0).unwrap().count, 2);
        assert!(c.get(2).unwrap().is_api);
        assert_eq!(TemplateCatalog::from_json(&c.to_json()).unwrap(), c);
    }
}
