use super::kvret::RawDialog;
use crate::encoder::{is_placeholder, tokenize};
use crate::model::{extract_entities, replace_mentions, EntityMention, Lexicon};

/// Lowercase slot name restricted to `[a-z0-9_]`.
pub fn slot_name(raw: &str) -> String {
    raw.trim()
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Values to delexicalize in one dialog: slot annotations of every turn
/// first, then scenario knowledge-base values.
pub fn dialog_lexicon(dialog: &RawDialog) -> Lexicon {
    let mut lex = Lexicon::new();
    for t in &dialog.turns {
        for (slot, value) in &t.slots {
            lex.add(&slot_name(slot), value);
        }
    }
    for row in &dialog.kb {
        for (col, value) in row {
            lex.add(&slot_name(col), value);
        }
    }
    lex
}

/// Normalized text with every lexicon value replaced by `<slot>`; tokens
/// are lowercased and space-separated.
pub fn delexicalize(text: &str, lexicon: &Lexicon) -> (String, Vec<EntityMention>) {
    let mentions = extract_entities(text, lexicon);
    let delex = tokenize(&replace_mentions(text, &mentions)).join(" ");
    (delex, mentions)
}

/// Substitutes mention values for placeholders in order of appearance.
/// Surplus placeholders stay verbatim.
pub fn relexicalize(delex: &str, mentions: &[EntityMention]) -> String {
    let mut values = mentions.iter();
    let out: Vec<String> = delex
        .split(' ')
        .map(|tok| match is_placeholder(tok).then(|| values.next()).flatten() {
            Some(m) => m.value.to_lowercase(),
            None => tok.to_string(),
        })
        .collect();
    out.join(" ")
}
