use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{bail, Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map. Indices 0 and 1 are reserved for padding and unknown
/// tokens; slot placeholders follow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        v
    }

    /// Vocabulary with a `<slot>` placeholder for each slot type.
    pub fn with_slots<S: AsRef<str>>(slot_types: &[S]) -> Result<Self> {
        let mut v = Self::new();
        for slot in slot_types {
            let token = format!("<{}>", slot.as_ref());
            if token == PAD_TOKEN || token == UNK_TOKEN {
                bail!(Config, "slot name {:?} clashes with a reserved token", slot.as_ref());
            }
            v.insert(&token);
        }
        Ok(v)
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn extend<'a>(&mut self, tokens: impl IntoIterator<Item = &'a String>) {
        for t in tokens {
            self.insert(t);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// One token per line; the line number is the index.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for (n, line) in text.lines().enumerate() {
            if v.index.contains_key(line) {
                bail!(Format, "duplicate vocabulary token {line:?} on line {}", n + 1);
            }
            v.insert(line);
        }
        if v.get(PAD_TOKEN) != Some(PAD) || v.get(UNK_TOKEN) != Some(UNK) {
            bail!(Format, "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}");
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
