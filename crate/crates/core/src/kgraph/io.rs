//! Triples JSON-Lines import/export and knowledge-corpus export.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{normalize_name, Entity, EntityType, KgError, RelationType, Triple};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    name: String,
    #[serde(rename = "type")]
    etype: String,
    #[serde(default)]
    desc: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleRecord {
    h: EntityRecord,
    r: String,
    t: EntityRecord,
    strength: Value,
    source_doc: String,
}

fn entity_from(rec: EntityRecord, line: usize) -> Result<Entity, KgError> {
    let etype = EntityType::parse(&rec.etype).ok_or_else(|| KgError::MalformedTriple {
        line,
        reason: format!("unknown entity type {:?}", rec.etype),
    })?;
    let name = normalize_name(&rec.name);
    if name.is_empty() {
        return Err(KgError::MalformedTriple { line, reason: "empty entity name".into() });
    }
    Ok(Entity { name, etype, description: rec.desc })
}

/// Parse triples JSON Lines. Blank lines are skipped; line numbers are 1-based.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>, KgError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripleRecord = serde_json::from_str(line)
            .map_err(|e| KgError::MalformedTriple { line: line_no, reason: e.to_string() })?;
        let relation = RelationType::from_label(&rec.r)
            .ok_or_else(|| KgError::UnknownRelation { line: line_no, value: rec.r.clone() })?;
        let strength = rec.strength.as_i64().ok_or_else(|| KgError::MalformedTriple {
            line: line_no,
            reason: format!("strength {} is not an integer", rec.strength),
        })?;
        if !(1..=5).contains(&strength) {
            return Err(KgError::StrengthOutOfRange { line: line_no, value: strength });
        }
        let head = entity_from(rec.h, line_no)?;
        let tail = entity_from(rec.t, line_no)?;
        let triple = Triple::new(head, relation, tail, strength as u8, rec.source_doc)
            .map_err(|e| KgError::MalformedTriple { line: line_no, reason: e.to_string() })?;
        out.push(triple);
    }
    Ok(out)
}

/// Load externally produced triples, validating every record.
pub fn import_triples(path: impl AsRef<Path>) -> Result<Vec<Triple>, KgError> {
    parse_triples(&fs::read_to_string(path)?)
}

pub fn triple_to_json(t: &Triple) -> String {
    let ent = |e: &Entity| EntityRecord {
        name: e.name.clone(),
        etype: e.etype.as_str().to_string(),
        desc: e.description.clone(),
    };
    serde_json::to_string(&TripleRecord {
        h: ent(&t.head),
        r: t.relation.label().to_string(),
        t: ent(&t.tail),
        strength: Value::from(t.strength),
        source_doc: t.source_doc.clone(),
    })
    .expect("triple serializes")
}

pub fn export_triples<'a>(
    path: impl AsRef<Path>,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> Result<(), KgError> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&triple_to_json(t));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Plain text, one sentence per line.
pub fn write_knowledge_corpus(path: impl AsRef<Path>, sentences: &[String]) -> Result<(), KgError> {
    let mut out = sentences.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
