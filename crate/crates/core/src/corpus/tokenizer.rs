//! Word/punctuation tokenizer with byte-level fallback.
//!
//! Text is normalized by collapsing whitespace runs into single spaces and
//! trimming. The normalized text is then cut into pieces: maximal runs of
//! alphanumeric characters, or single symbol characters. Spaces are not
//! tokens. Instead, a joining rule decides whether a space sits between two
//! pieces; a piece that is in the vocabulary and agrees with the joining rule
//! costs one id, anything else is spelled out as raw bytes (including its
//! leading space, if any), so every string is encodable and
//! `decode(encode(x)) == normalize(x)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, PatentDoc};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;
pub const NUM_BYTES: u32 = 256;
/// First id available to word pieces.
pub const FIRST_WORD_ID: u32 = NUM_SPECIALS + NUM_BYTES;
pub const MIN_WORD_CAP: usize = 16;

const SPECIAL_NAMES: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<sep>"];

/// Collapse whitespace runs to a single space and trim both ends.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// A piece of normalized text together with whether a space precedes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: &'a str,
    pub space_before: bool,
}

/// Split text into word and symbol pieces. Input need not be normalized;
/// any whitespace between pieces counts as a single space.
pub fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut space = false;
    let mut iter = text.char_indices().peekable();
    while let Some((start, c)) = iter.next() {
        if c.is_whitespace() {
            space = true;
            continue;
        }
        let mut end = start + c.len_utf8();
        if is_word_char(c) {
            while let Some(&(i, n)) = iter.peek() {
                if !is_word_char(n) {
                    break;
                }
                end = i + n.len_utf8();
                iter.next();
            }
        }
        out.push(Piece {
            text: &text[start..end],
            space_before: space && !out.is_empty(),
        });
        space = false;
    }
    out
}

/// Piece strings without spacing information; the token unit used by the
/// evaluation metrics.
pub fn words(text: &str) -> Vec<String> {
    pieces(text).into_iter().map(|p| p.text.to_string()).collect()
}

/// Whether a space is implied between output ending in `prev` and `piece`.
fn default_space(prev: Option<char>, piece: &str) -> bool {
    let Some(prev) = prev else { return false };
    let first = piece.chars().next().unwrap_or(' ');
    if matches!(first, '.' | ',' | ';' | ':' | '!' | '?' | ')' | ']' | '}' | '%' | '-' | '/') {
        return false;
    }
    !matches!(prev, '(' | '[' | '{' | '-' | '/')
}

/// An encoded token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub source_len_chars: usize,
}

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids, source_len_chars: 0 }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Token vocabulary: four specials, 256 byte tokens, then word pieces ranked
/// by corpus frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
}

impl Vocab {
    /// Build from an already ranked list of word pieces.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        id_to_token.extend((0..NUM_BYTES).map(|b| format!("<0x{b:02X}>")));
        let mut token_to_id: HashMap<String, u32> = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for w in words {
            let w = w.into();
            if token_to_id.contains_key(&w) {
                continue;
            }
            token_to_id.insert(w.clone(), id_to_token.len() as u32);
            id_to_token.push(w);
        }
        Self { token_to_id, id_to_token }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Number of word-piece entries (excludes specials and bytes).
    pub fn word_count(&self) -> usize {
        self.len() - FIRST_WORD_ID as usize
    }

    pub fn word_id(&self, piece: &str) -> Option<u32> {
        self.token_to_id.get(piece).copied().filter(|&id| id >= FIRST_WORD_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_token[FIRST_WORD_ID as usize..]
    }

    pub fn is_special(id: u32) -> bool {
        id < NUM_SPECIALS
    }

    pub fn byte_id(b: u8) -> u32 {
        NUM_SPECIALS + b as u32
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        let norm = normalize(text);
        let mut ids = Vec::new();
        let mut prev: Option<char> = None;
        for piece in pieces(&norm) {
            match self.word_id(piece.text) {
                Some(id) if default_space(prev, piece.text) == piece.space_before => ids.push(id),
                _ => {
                    if piece.space_before {
                        ids.push(Self::byte_id(b' '));
                    }
                    ids.extend(piece.text.bytes().map(Self::byte_id));
                }
            }
            prev = piece.text.chars().last();
        }
        TokenSeq { ids, source_len_chars: text.chars().count() }
    }

    /// Decode ids back into text. Special ids and unknown ids are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        let mut raw: Vec<u8> = Vec::new();
        let flush = |out: &mut String, raw: &mut Vec<u8>| {
            if !raw.is_empty() {
                out.push_str(&String::from_utf8_lossy(raw));
                raw.clear();
            }
        };
        for &id in ids {
            if Self::is_special(id) || id as usize >= self.len() {
                continue;
            }
            if id < FIRST_WORD_ID {
                raw.push((id - NUM_SPECIALS) as u8);
                continue;
            }
            flush(&mut out, &mut raw);
            let tok = &self.id_to_token[id as usize];
            if default_space(out.chars().last(), tok) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        flush(&mut out, &mut raw);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&VocabFile { words: self.words().to_vec() })
            .expect("vocab serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let file: VocabFile = serde_json::from_str(json)?;
        Ok(Self::from_words(file.words))
    }
}

/// Count word pieces over arbitrary texts and rank them.
#[derive(Debug, Default, Clone)]
pub struct VocabBuilder {
    counts: HashMap<String, u64>,
}

impl VocabBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_text(&mut self, text: &str) -> &mut Self {
        for p in pieces(text) {
            *self.counts.entry(p.text.to_string()).or_default() += 1;
        }
        self
    }

    pub fn add_doc(&mut self, doc: &PatentDoc) -> &mut Self {
        self.add_text(&doc.title);
        self.add_text(&doc.abstract_text);
        for c in &doc.claims {
            self.add_text(c);
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Keep the `cap` most frequent pieces; ties go to the lexicographically
    /// smaller piece.
    pub fn build(&self, cap: usize) -> Result<Vocab, CorpusError> {
        if cap < MIN_WORD_CAP {
            return Err(CorpusError::CapTooSmall(cap));
        }
        if self.counts.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut ranked: Vec<(&String, &u64)> = self.counts.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Vocab::from_words(ranked.into_iter().take(cap).map(|(w, _)| w.clone())))
    }
}

/// Build a vocabulary from the title, abstract and claims of `docs`.
pub fn build_vocab(docs: &[PatentDoc], cap: usize) -> Result<Vocab, CorpusError> {
    let mut builder = VocabBuilder::new();
    for d in docs {
        builder.add_doc(d);
    }
    builder.build(cap)
}
