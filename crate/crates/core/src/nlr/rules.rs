use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoder::placeholder_len;
use crate::error::{bail, Error, Result};

/// Which inferencer input a rule set is matched against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    /// Pre-conditions are previous system actions.
    #[serde(rename = "s")]
    System,
    /// Pre-conditions are user inputs.
    #[serde(rename = "u")]
    User,
}

impl RuleKind {
    pub fn key(self) -> &'static str {
        match self {
            RuleKind::System => "s_rules",
            RuleKind::User => "u_rules",
        }
    }
}

/// A (pre-condition, post-condition) pair of natural-language texts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub pre: String,
    pub post: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub kind: RuleKind,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn empty(kind: RuleKind) -> Self {
        Self { kind, rules: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Both rule sets of a domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleBook {
    pub s_rules: RuleSet,
    pub u_rules: RuleSet,
}

impl Default for RuleBook {
    fn default() -> Self {
        Self { s_rules: RuleSet::empty(RuleKind::System), u_rules: RuleSet::empty(RuleKind::User) }
    }
}

#[derive(Serialize)]
struct RuleFileOut<'a> {
    s_rules: &'a [Rule],
    u_rules: &'a [Rule],
}

impl RuleBook {
    pub fn get(&self, kind: RuleKind) -> &RuleSet {
        match kind {
            RuleKind::System => &self.s_rules,
            RuleKind::User => &self.u_rules,
        }
    }

    pub fn len(&self) -> usize {
        self.s_rules.len() + self.u_rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every condition text of both sets.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.s_rules
            .rules
            .iter()
            .chain(&self.u_rules.rules)
            .flat_map(|r| [r.pre.as_str(), r.post.as_str()])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RuleFileOut { s_rules: &self.s_rules.rules, u_rules: &self.u_rules.rules })
            .expect("rules serialize")
    }
}

/// Reads and validates a rule file
/// `{"s_rules": [{"pre": …, "post": …}, …], "u_rules": […]}`.
pub fn load_rules(path: &Path) -> Result<RuleBook> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&text)
}

pub fn parse_rules(text: &str) -> Result<RuleBook> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(map) = value else {
        bail!(Validation, "rule file must be a JSON object");
    };
    let mut book = RuleBook::default();
    for (key, list) in &map {
        let kind = match key.as_str() {
            "s_rules" => RuleKind::System,
            "u_rules" => RuleKind::User,
            other => bail!(Validation, "unknown rule kind {other:?}"),
        };
        let Value::Array(items) = list else {
            bail!(Validation, "{key} must be a list");
        };
        let mut rules = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            rules.push(parse_rule(item).map_err(|msg| Error::Validation(format!("{key}[{i}]: {msg}")))?);
        }
        match kind {
            RuleKind::System => book.s_rules.rules = rules,
            RuleKind::User => book.u_rules.rules = rules,
        }
    }
    Ok(book)
}

fn parse_rule(item: &Value) -> std::result::Result<Rule, String> {
    let Value::Object(obj) = item else {
        return Err("rule must be an object".into());
    };
    if let Some(extra) = obj.keys().find(|k| *k != "pre" && *k != "post") {
        return Err(format!("unexpected field {extra:?}"));
    }
    let field = |name: &str| -> std::result::Result<String, String> {
        match obj.get(name) {
            None => Err(format!("missing field {name:?}")),
            Some(Value::String(s)) => {
                if s.trim().is_empty() {
                    Err(format!("empty {name}-condition"))
                } else {
                    check_placeholders(s).map_err(|m| format!("{name}-condition: {m}"))?;
                    Ok(s.trim().to_string())
                }
            }
            Some(_) => Err(format!("field {name:?} must be a string")),
        }
    };
    Ok(Rule { pre: field("pre")?, post: field("post")? })
}

fn check_placeholders(text: &str) -> std::result::Result<(), String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '<' => match placeholder_len(&chars[i..]) {
                Some(n) => i += n,
                None => return Err(format!("malformed placeholder at character {i}")),
            },
            '>' => return Err(format!("unmatched '>' at character {i}")),
            _ => i += 1,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_kinds() {
        let book = parse_rules(
            r#"{"u_rules": [{"pre": "actually i want <cuisine> food", "post": "sure, is there anything else to update?"}],
                "s_rules": [{"pre": "what kind of food would you like?", "post": "what area of town should I search?"}]}"#,
        )
        .unwrap();
        assert_eq!(book.u_rules.kind, RuleKind::User);
        assert_eq!(book.u_rules.rules[0].pre, "actually i want <cuisine> food");
        assert_eq!(book.s_rules.kind, RuleKind::System);
        assert_eq!(book.s_rules.rules[0].post, "what area of town should I search?");
        assert_eq!(parse_rules(&book.to_json()).unwrap(), book);
    }

    #[test]
    fn validation_errors_name_the_rule() {
        let err = parse_rules(r#"{"u_rules": [{"pre": "a", "post": "b"}, {"pre": "hi", "post": "  "}]}"#).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("u_rules[1]: empty post-condition"), "{err}");
        let err = parse_rules(r#"{"s_rules": [{"pre": "a"}]}"#).unwrap_err();
        assert!(err.to_string().contains("s_rules[0]: missing field \"post\""), "{err}");
        let err = parse_rules(r#"{"x_rules": []}"#).unwrap_err();
        assert!(err.to_string().contains("unknown rule kind"), "{err}");
        let err = parse_rules(r#"{"u_rules": [{"pre": "i want <cui sine> food", "post": "ok"}]}"#).unwrap_err();
        assert!(err.to_string().contains("malformed placeholder"), "{err}");
    }

    #[test]
    fn missing_sets_are_empty() {
        let book = parse_rules("{}").unwrap();
        assert!(book.is_empty());
    }
}
