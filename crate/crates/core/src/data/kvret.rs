use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Driver,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub speaker: Speaker,
    pub utterance: String,
    /// Slot annotations (slot type → surface value).
    #[serde(default)]
    pub slots: BTreeMap<String, String>,
}

/// One dialog of the in-car assistant corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDialog {
    pub id: String,
    pub domain: String,
    pub turns: Vec<RawTurn>,
    /// Scenario knowledge base rows (column → value).
    pub kb: Vec<BTreeMap<String, String>>,
}

fn schema(path: &Path, index: usize, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("{}: dialog {index}: {msg}", path.display()))
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn string_map(v: Option<&Value>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let Some(Value::Object(m)) = v {
        for (k, v) in m {
            if let Some(s) = scalar_text(v) {
                out.insert(k.clone(), s);
            }
        }
    }
    out
}

fn parse_dialog(path: &Path, index: usize, d: &Value) -> Result<RawDialog> {
    let obj = d.as_object().ok_or_else(|| schema(path, index, "not an object"))?;
    let dialogue = obj
        .get("dialogue")
        .ok_or_else(|| schema(path, index, "missing \"dialogue\""))?
        .as_array()
        .ok_or_else(|| schema(path, index, "\"dialogue\" is not a list"))?;
    let scenario = obj.get("scenario").ok_or_else(|| schema(path, index, "missing \"scenario\""))?;
    let domain = scenario
        .pointer("/task/intent")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(path, index, "missing \"scenario.task.intent\""))?
        .to_string();
    let id = scenario
        .get("uuid")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("{}#{index}", path.file_name().and_then(|s| s.to_str()).unwrap_or("dialogs")));

    let mut turns = Vec::with_capacity(dialogue.len());
    for (t, turn) in dialogue.iter().enumerate() {
        let speaker = match turn.get("turn").and_then(Value::as_str) {
            Some("driver") => Speaker::Driver,
            Some("assistant") => Speaker::Assistant,
            Some(other) => return Err(schema(path, index, format!("turn {t}: unknown speaker {other:?}"))),
            None => return Err(schema(path, index, format!("turn {t}: missing \"turn\""))),
        };
        let data = turn.get("data").ok_or_else(|| schema(path, index, format!("turn {t}: missing \"data\"")))?;
        let utterance = data
            .get("utterance")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(path, index, format!("turn {t}: missing \"data.utterance\"")))?
            .to_string();
        turns.push(RawTurn { speaker, utterance, slots: string_map(data.get("slots")) });
    }

    let kb = match scenario.pointer("/kb/items") {
        Some(Value::Array(rows)) => rows.iter().map(|r| string_map(Some(r))).collect(),
        _ => Vec::new(),
    };
    Ok(RawDialog { id, domain, turns, kb })
}

/// Parses the corpus JSON; `path` only labels errors.
pub fn parse_kvret(text: &str, path: &Path) -> Result<Vec<RawDialog>> {
    if text.trim().is_empty() {
        return Err(Error::Schema(format!("{}: empty file", path.display())));
    }
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let dialogs = value
        .as_array()
        .ok_or_else(|| Error::Schema(format!("{}: top level is not a list of dialogs", path.display())))?;
    dialogs.iter().enumerate().map(|(i, d)| parse_dialog(path, i, d)).collect()
}

pub fn load_kvret(path: &Path) -> Result<Vec<RawDialog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kvret(&text, path)
}

/// Serializes dialogs in the corpus format.
pub fn to_kvret_json(dialogs: &[RawDialog]) -> Value {
    let items: Vec<Value> = dialogs
        .iter()
        .map(|d| {
            let turns: Vec<Value> = d
                .turns
                .iter()
                .map(|t| {
                    let speaker = match t.speaker {
                        Speaker::Driver => "driver",
                        Speaker::Assistant => "assistant",
                    };
                    let mut data = Map::new();
                    data.insert("utterance".into(), json!(t.utterance));
                    if !t.slots.is_empty() {
                        data.insert("slots".into(), json!(t.slots));
                    }
                    json!({"turn": speaker, "data": data})
                })
                .collect();
            let columns: Vec<&String> = d.kb.first().map(|r| r.keys().collect()).unwrap_or_default();
            json!({
                "dialogue": turns,
                "scenario": {
                    "kb": {"items": d.kb, "column_names": columns},
                    "task": {"intent": d.domain},
                    "uuid": d.id,
                }
            })
        })
        .collect();
    Value::Array(items)
}

/// Joins consecutive turns of the same speaker with a single space; slot
/// annotations are merged (later turns win).
pub fn merge_same_speaker(turns: &[RawTurn]) -> Vec<RawTurn> {
    let mut out: Vec<RawTurn> = Vec::with_capacity(turns.len());
    for t in turns {
        match out.last_mut() {
            Some(prev) if prev.speaker == t.speaker => {
                let extra = t.utterance.trim();
                if !extra.is_empty() {
                    if !prev.utterance.trim().is_empty() {
                        prev.utterance.push(' ');
                    }
                    prev.utterance.push_str(extra);
                }
                prev.slots.extend(t.slots.clone());
            }
            _ => out.push(t.clone()),
        }
    }
    out
}
