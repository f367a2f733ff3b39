//! Overlap and embedding metrics over token lists.

use std::collections::HashMap;

use super::EvalError;
use crate::corpus::Vocab;
use crate::lm::ModelState;

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Candidate n-grams matched against the reference, each clipped at its
/// reference count.
fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> usize {
    let refc = ngram_counts(reference, n);
    ngram_counts(candidate, n).into_iter().map(|(g, c)| c.min(refc.get(g).copied().unwrap_or(0))).sum()
}

/// Recall-form ROUGE-N: clipped matches over the number of reference n-grams.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Result<f64, EvalError> {
    if n == 0 || reference.len() < n {
        return Err(EvalError::ReferenceTooShort { len: reference.len(), n });
    }
    let total = reference.len() + 1 - n;
    Ok(clipped_matches(candidate, reference, n) as f64 / total as f64)
}

/// Length of the longest common subsequence (O(|a|·|b|) dynamic programme).
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // Short inputs (the common case for titles) stay off the heap.
    const STACK: usize = 32;
    if b.len() < STACK {
        let (mut prev, mut cur) = ([0usize; STACK], [0usize; STACK]);
        return lcs_rows(a, b, &mut prev[..=b.len()], &mut cur[..=b.len()]);
    }
    lcs_rows(a, b, &mut vec![0; b.len() + 1], &mut vec![0; b.len() + 1])
}

fn lcs_rows<'r, T: PartialEq>(a: &[T], b: &[T], mut prev: &'r mut [usize], mut cur: &'r mut [usize]) -> usize {
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with `R = lcs / |reference|`, `P = lcs / |candidate|`
/// and `beta` weighting recall against precision.
pub fn rouge_l(candidate: &[String], reference: &[String], beta: f64) -> Result<f64, EvalError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let r = lcs / reference.len() as f64;
    let p = lcs / candidate.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * r * p / (b2 * r + p))
}

pub const BLEU_FLOOR: f64 = 1e-9;

/// Sentence BLEU with four uniformly weighted clipped precisions, each
/// floored at [`BLEU_FLOOR`], and brevity penalty `1` if `c > r` else
/// `exp(1 - r / c)`. An empty candidate scores 0.
pub fn bleu4(candidate: &[String], reference: &[String]) -> f64 {
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let r = reference.len();
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let p = if c >= n { clipped_matches(candidate, reference, n) as f64 / (c + 1 - n) as f64 } else { 0.0 };
        log_sum += 0.25 * p.max(BLEU_FLOOR).ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_sum.exp()
}

/// Token embedding provider for [`bert_score`].
pub trait Embedder: Sync {
    fn embed(&self, token: &str) -> Vec<f64>;
}

impl<F> Embedder for F
where
    F: Fn(&str) -> Vec<f64> + Sync,
{
    fn embed(&self, token: &str) -> Vec<f64> {
        self(token)
    }
}

/// Mean of a model's input-embedding rows over the token's encoding.
pub struct StaticEmbedder<'a> {
    pub model: &'a ModelState,
    pub vocab: &'a Vocab,
}

impl Embedder for StaticEmbedder<'_> {
    fn embed(&self, token: &str) -> Vec<f64> {
        let d = self.model.config.d_model;
        let ids = self.vocab.encode(token).ids;
        let mut out = vec![0.0; d];
        for &id in &ids {
            for (o, x) in out.iter_mut().zip(self.model.params.tok_emb.row(id as usize)) {
                *o += x;
            }
        }
        let n = ids.len().max(1) as f64;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }
}

/// Mean final-layer hidden state of the token encoded in isolation.
pub struct HiddenStateEmbedder<'a> {
    pub model: &'a ModelState,
    pub vocab: &'a Vocab,
}

impl Embedder for HiddenStateEmbedder<'_> {
    fn embed(&self, token: &str) -> Vec<f64> {
        let d = self.model.config.d_model;
        let mut ids = vec![crate::corpus::BOS];
        ids.extend(self.vocab.encode(token).ids);
        ids.truncate(self.model.config.max_seq);
        let Ok(out) = self.model.forward(&ids) else { return vec![0.0; d] };
        let rows = ids.len() - 1;
        let mut v = vec![0.0; d];
        for r in 1..ids.len() {
            for (o, x) in v.iter_mut().zip(out.hidden.row(r)) {
                *o += x;
            }
        }
        v.iter_mut().for_each(|x| *x /= rows.max(1) as f64);
        v
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn distinct(tokens: &[String]) -> Vec<&String> {
    let mut seen = std::collections::HashSet::new();
    tokens.iter().filter(|t| seen.insert(*t)).collect()
}

/// Candidate-side greedy matching: the mean over distinct candidate tokens
/// of the best cosine against any distinct reference token. Identical
/// token strings count as similarity 1.
pub fn bert_score(candidate: &[String], reference: &[String], embedder: &dyn Embedder) -> Result<f64, EvalError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let cand = distinct(candidate);
    let refs = distinct(reference);
    let ref_emb: Vec<Vec<f64>> = refs.iter().map(|t| embedder.embed(t)).collect();
    let mut total = 0.0;
    for t in &cand {
        let e = embedder.embed(t);
        let best = refs
            .iter()
            .zip(&ref_emb)
            .map(|(r, re)| if r == t { 1.0 } else { cosine(&e, re) })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    Ok(total / cand.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn rouge_worked_examples() {
        let c = toks("the cat sat");
        let r = toks("the cat sat on the mat");
        assert_eq!(rouge_n(&c, &r, 1).unwrap(), 0.5);
        assert_eq!(rouge_n(&c, &r, 2).unwrap(), 0.4);
        assert!((rouge_l(&c, &r, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l(&toks("x y"), &r, 1.0).unwrap(), 0.0);
        assert!(matches!(rouge_n(&c, &toks("a"), 2), Err(EvalError::ReferenceTooShort { .. })));
        assert!(matches!(rouge_l(&[], &r, 1.0), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn bleu_worked_examples() {
        let r = toks("a b c d e");
        assert_eq!(bleu4(&r, &r), 1.0);
        assert!((bleu4(&toks("a b c d"), &r) - (-0.25f64).exp()).abs() < 1e-12);
        assert!(bleu4(&toks("a b c"), &r) < 1e-2);
        assert_eq!(bleu4(&[], &r), 0.0);
    }

    #[test]
    fn bert_hand_example() {
        let table = |t: &str| -> Vec<f64> {
            match t {
                "a" => vec![1.0, 0.0],
                "b" => vec![0.0, 1.0],
                "c" => vec![1.0, 1.0],
                "d" => vec![3.0, 4.0],
                "e" => vec![-1.0, 0.0],
                _ => vec![0.0, 0.0],
            }
        };
        // candidate {a, b, e} vs reference {c, d, d, e}
        let s = bert_score(&toks("a b e"), &toks("c d d e"), &table).unwrap();
        let a = (1.0 / 2f64.sqrt()).max(3.0 / 5.0);
        let b = (1.0 / 2f64.sqrt()).max(4.0 / 5.0);
        let e = 1.0;
        assert!((s - (a + b + e) / 3.0).abs() < 1e-12);
        let orth = |t: &str| if t == "x" { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
        assert_eq!(bert_score(&toks("x"), &toks("y z"), &orth).unwrap(), 0.0);
    }

    #[test]
    fn lcs_small() {
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[2, 4, 3]), 2);
        assert_eq!(lcs_len::<u8>(&[], &[1]), 0);
    }
}
