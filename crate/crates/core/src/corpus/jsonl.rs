use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use super::pair::{BimodalPair, Scenario};
use super::CorpusError;

const FIELDS: [&str; 6] = ["id", "comment", "code", "scenario", "label", "meta"];

/// Parses one JSONL record. `line` is 1-based and only used in errors.
pub fn parse_pair_line(text: &str, line: usize) -> Result<BimodalPair, CorpusError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::Parse { line, message: "expected a JSON object".into() });
    };
    let field = |name: &'static str| obj.get(name).ok_or(CorpusError::MissingField { line, field: name });
    let string = |name: &'static str| -> Result<String, CorpusError> {
        field(name)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CorpusError::Parse { line, message: format!("`{name}` must be a string") })
    };
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(CorpusError::Parse { line, message: format!("unknown field `{extra}`") });
    }
    let scenario: Scenario =
        string("scenario")?.parse().map_err(|message| CorpusError::Parse { line, message })?;
    let label = match field("label")?.as_u64() {
        Some(l @ (0 | 1)) => l as u8,
        _ => return Err(CorpusError::Parse { line, message: "`label` must be 0 or 1".into() }),
    };
    let meta = match field("meta")? {
        Value::Object(m) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                _ => Err(CorpusError::Parse { line, message: format!("meta `{k}` must be a string") }),
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?,
        _ => return Err(CorpusError::Parse { line, message: "`meta` must be an object".into() }),
    };
    let pair = BimodalPair {
        id: string("id")?,
        comment: string("comment")?,
        code: string("code")?,
        scenario,
        label,
        meta,
    };
    pair.validate().map_err(|reason| CorpusError::InvalidRecord { line, reason })?;
    Ok(pair)
}

/// Reads a JSONL corpus; blank lines are skipped.
pub fn load_jsonl(path: &Path) -> Result<Vec<BimodalPair>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_pair_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn to_jsonl_line(pair: &BimodalPair) -> String {
    serde_json::to_string(pair).expect("pair serializes")
}

pub fn save_jsonl(corpus: &[BimodalPair], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in corpus {
        writeln!(w, "{}", to_jsonl_line(p)).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}
