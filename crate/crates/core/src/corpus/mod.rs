//! Patent documents, tokenization, splits and the derived SFT / preference
//! datasets.

mod datasets;
mod tokenizer;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed};

pub use datasets::{
    abstract_query, claims_answer, claims_query, make_preference_triples, make_sft_pairs,
    title_query, write_jsonl, CorruptionKind, CorruptionSpec, DialoguePair, PreferenceTriple,
    TaskKind,
};
pub use tokenizer::{
    build_vocab, normalize, pieces, words, Piece, TokenSeq, Vocab, VocabBuilder, BOS, EOS,
    FIRST_WORD_ID, MIN_WORD_CAP, NUM_SPECIALS, PAD, SEP,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: invalid IPC section {value:?}")]
    InvalidIpc { line: usize, value: String },
    #[error("corpus contributes no tokens")]
    EmptyCorpus,
    #[error("vocabulary cap {0} is below the minimum of 16")]
    CapTooSmall(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios((f64, f64, f64)),
    #[error("IPC section {section} has {count} docs; stratified split needs at least 3")]
    InsufficientDocs { section: IpcSection, count: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The eight top-level International Patent Classification sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IpcSection {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl IpcSection {
    pub const ALL: [IpcSection; 8] = [
        IpcSection::A,
        IpcSection::B,
        IpcSection::C,
        IpcSection::D,
        IpcSection::E,
        IpcSection::F,
        IpcSection::G,
        IpcSection::H,
    ];

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn description(self) -> &'static str {
        match self {
            IpcSection::A => "Human Necessities",
            IpcSection::B => "Performing Operations; Transporting",
            IpcSection::C => "Chemistry; Metallurgy",
            IpcSection::D => "Textiles; Paper",
            IpcSection::E => "Fixed Constructions",
            IpcSection::F => "Mechanical Engineering; Lighting; Heating; Weapons; Blasting",
            IpcSection::G => "Physics",
            IpcSection::H => "Electricity",
        }
    }
}

impl fmt::Display for IpcSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for IpcSection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c @ 'A'..='H'), None) => Ok(IpcSection::ALL[(c as u8 - b'A') as usize]),
            _ => Err(s.to_string()),
        }
    }
}

/// One patent record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatentDoc {
    pub id: String,
    pub ipc_section: IpcSection,
    pub title: String,
    pub abstract_text: String,
    pub claims: Vec<String>,
}

impl PatentDoc {
    /// Title, abstract and claims as one pre-training text.
    pub fn full_text(&self) -> String {
        let mut parts = vec![self.title.clone()];
        if !self.abstract_text.trim().is_empty() {
            parts.push(self.abstract_text.clone());
        }
        if !self.claims.is_empty() {
            parts.push(claims_answer(&self.claims));
        }
        parts.join("\n")
    }

    fn validate(&self) -> Result<(), String> {
        if self.title.trim().is_empty() {
            return Err("title is empty".into());
        }
        if let Some(i) = self.claims.iter().position(|c| c.trim().is_empty()) {
            return Err(format!("claim {} is empty", i + 1));
        }
        Ok(())
    }
}

/// On-disk record shape. Unknown keys are rejected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRecord {
    id: String,
    ipc: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    claims: Vec<String>,
}

pub fn parse_corpus(text: &str) -> Result<Vec<PatentDoc>, CorpusError> {
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let ipc_section = rec
            .ipc
            .parse()
            .map_err(|value| CorpusError::InvalidIpc { line: line_no, value })?;
        let doc = PatentDoc {
            id: rec.id,
            ipc_section,
            title: rec.title,
            abstract_text: rec.abstract_text,
            claims: rec.claims,
        };
        doc.validate()
            .map_err(|reason| CorpusError::MalformedRecord { line: line_no, reason })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Load a JSON-Lines patent corpus, preserving file order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<PatentDoc>, CorpusError> {
    parse_corpus(&fs::read_to_string(path)?)
}

pub fn doc_to_json(doc: &PatentDoc) -> String {
    serde_json::to_string(&DocRecord {
        id: doc.id.clone(),
        ipc: doc.ipc_section.to_string(),
        title: doc.title.clone(),
        abstract_text: doc.abstract_text.clone(),
        claims: doc.claims.clone(),
    })
    .expect("doc serializes")
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[PatentDoc]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&doc_to_json(d));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<PatentDoc>,
    pub val: Vec<PatentDoc>,
    pub test: Vec<PatentDoc>,
}

fn floor_count(n: usize, frac: f64) -> usize {
    (n as f64 * frac + 1e-9).floor() as usize
}

/// Deterministically split docs. With `stratify`, every IPC section is split
/// by the same ratios and rounding leftovers go to train. Each output list
/// keeps the input order.
pub fn split_corpus(
    docs: &[PatentDoc],
    ratios: (f64, f64, f64),
    seed: u64,
    stratify: bool,
) -> Result<Split, CorpusError> {
    let (tr, va, te) = ratios;
    if tr < 0.0 || va < 0.0 || te < 0.0 || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(ratios));
    }
    let groups: Vec<Vec<usize>> = if stratify {
        let mut groups = Vec::new();
        for section in IpcSection::ALL {
            let idx: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].ipc_section == section).collect();
            if idx.is_empty() {
                continue;
            }
            if idx.len() < 3 {
                return Err(CorpusError::InsufficientDocs { section, count: idx.len() });
            }
            groups.push(idx);
        }
        groups
    } else {
        vec![(0..docs.len()).collect()]
    };

    // 0 = train, 1 = val, 2 = test
    let mut assignment = vec![0u8; docs.len()];
    for (g, mut idx) in groups.into_iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("split/{g}")));
        idx.shuffle(&mut rng);
        let n_val = floor_count(idx.len(), va);
        let n_test = floor_count(idx.len(), te);
        for &i in &idx[..n_val] {
            assignment[i] = 1;
        }
        for &i in &idx[n_val..n_val + n_test] {
            assignment[i] = 2;
        }
    }
    let mut split = Split::default();
    for (doc, a) in docs.iter().zip(assignment) {
        match a {
            0 => split.train.push(doc.clone()),
            1 => split.val.push(doc.clone()),
            _ => split.test.push(doc.clone()),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, ipc: IpcSection) -> PatentDoc {
        PatentDoc {
            id: id.into(),
            ipc_section: ipc,
            title: format!("Title {id}"),
            abstract_text: "An abstract.".into(),
            claims: vec!["A claim.".into()],
        }
    }

    #[test]
    fn parses_single_record() {
        let docs = parse_corpus(
            r#"{"id":"p1","ipc":"A","title":"T","abstract":"x","claims":["c"]}"#,
        )
        .unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].ipc_section, IpcSection::A);
    }

    #[test]
    fn rejects_bad_ipc_and_unknown_keys() {
        let err = parse_corpus(r#"{"id":"p","ipc":"Z","title":"T","abstract":"","claims":[]}"#)
            .unwrap_err();
        assert!(matches!(err, CorpusError::InvalidIpc { line: 1, .. }));
        let err = parse_corpus(
            "\n{\"id\":\"p\",\"ipc\":\"A\",\"title\":\"T\",\"abstract\":\"\",\"claims\":[],\"x\":1}",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 2, .. }));
        let err = parse_corpus(r#"{"id":"p","ipc":"A","title":"  ","abstract":"","claims":[]}"#)
            .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { .. }));
        let err = parse_corpus(r#"{"id":"p","ipc":"A","title":"T","abstract":"","claims":[""]}"#)
            .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { .. }));
    }

    #[test]
    fn split_is_deterministic() {
        let docs: Vec<_> = (0..10).map(|i| doc(&i.to_string(), IpcSection::B)).collect();
        let a = split_corpus(&docs, (0.8, 0.1, 0.1), 7, true).unwrap();
        let b = split_corpus(&docs, (0.8, 0.1, 0.1), 7, true).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (8, 1, 1));
    }

    #[test]
    fn degenerate_ratio_keeps_everything_in_train() {
        let docs: Vec<_> = (0..10).map(|i| doc(&i.to_string(), IpcSection::C)).collect();
        let s = split_corpus(&docs, (1.0, 0.0, 0.0), 3, false).unwrap();
        assert_eq!(s.train, docs);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn stratified_counts_per_section() {
        let docs: Vec<_> = IpcSection::ALL
            .iter()
            .flat_map(|&s| (0..10).map(move |i| doc(&format!("{s}{i}"), s)))
            .collect();
        let split = split_corpus(&docs, (0.8, 0.1, 0.1), 11, true).unwrap();
        for s in IpcSection::ALL {
            let count = |v: &[PatentDoc]| v.iter().filter(|d| d.ipc_section == s).count();
            assert_eq!((count(&split.train), count(&split.val), count(&split.test)), (8, 1, 1));
        }
    }

    #[test]
    fn stratification_needs_three_per_section() {
        let docs = vec![doc("a", IpcSection::A), doc("b", IpcSection::A)];
        assert!(matches!(
            split_corpus(&docs, (0.8, 0.1, 0.1), 1, true),
            Err(CorpusError::InsufficientDocs { count: 2, .. })
        ));
        assert!(matches!(
            split_corpus(&docs, (0.8, 0.3, 0.1), 1, false),
            Err(CorpusError::InvalidRatios(_))
        ));
    }
}
