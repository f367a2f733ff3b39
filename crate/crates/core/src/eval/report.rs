//! Metric bundles, model evaluation and the six-row stage comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{bert_score, bleu4, rouge_l, rouge_n, Embedder};
use super::EvalError;
use crate::corpus::{words, DialoguePair, Vocab, BOS, SEP};
use crate::lm::{generate, GenerationConfig, ModelState};
use crate::seed::derive_seed;

/// All values in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub bert_score: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

pub const METRIC_NAMES: [&str; 5] = ["Bert Score", "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L"];

impl MetricReport {
    pub fn values(&self) -> [f64; 5] {
        [self.bert_score, self.bleu4, self.rouge1, self.rouge2, self.rouge_l]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self { bert_score: v[0], bleu4: v[1], rouge1: v[2], rouge2: v[3], rouge_l: v[4] }
    }

    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let mut acc = [0.0; 5];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        let n = reports.len().max(1) as f64;
        MetricReport::from_values(acc.map(|a| a / n))
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// All five metrics for one candidate/reference text pair, scaled by 100.
/// An empty candidate scores 0 on every metric.
pub fn score_pair(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<MetricReport, EvalError> {
    let c = words(candidate);
    let r = words(reference);
    if r.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if c.is_empty() {
        return Ok(MetricReport::default());
    }
    let rouge2 = if r.len() >= 2 { rouge_n(&c, &r, 2)? } else { 0.0 };
    Ok(MetricReport {
        bert_score: 100.0 * bert_score(&c, &r, embedder)?,
        bleu4: 100.0 * bleu4(&c, &r),
        rouge1: 100.0 * rouge_n(&c, &r, 1)?,
        rouge2: 100.0 * rouge2,
        rouge_l: 100.0 * rouge_l(&c, &r, 1.0)?,
    })
}

/// Mean report over `(candidate, reference)` pairs (ordered reduction).
pub fn evaluate_outputs(pairs: &[(String, String)], embedder: &dyn Embedder) -> Result<MetricReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let reports = pairs
        .par_iter()
        .map(|(c, r)| score_pair(c, r, embedder))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricReport::mean(&reports))
}

/// `BOS query SEP`.
pub fn prompt_tokens(vocab: &Vocab, query: &str) -> Vec<u32> {
    let mut t = vec![BOS];
    t.extend(vocab.encode(query).ids);
    t.push(SEP);
    t
}

/// Sample an answer to `query` and decode it (stop tokens dropped).
pub fn generate_answer(
    model: &ModelState,
    vocab: &Vocab,
    query: &str,
    gen: &GenerationConfig,
) -> Result<String, EvalError> {
    let ids = generate(model, &prompt_tokens(vocab, query), gen)?;
    let kept: Vec<u32> = ids.into_iter().filter(|t| !gen.stop_tokens.contains(t)).collect();
    Ok(vocab.decode(&kept))
}

/// Generate one answer per test query and score against the gold answers.
pub fn evaluate_model(
    model: &ModelState,
    vocab: &Vocab,
    testset: &[DialoguePair],
    embedder: &dyn Embedder,
    gen: &GenerationConfig,
) -> Result<MetricReport, EvalError> {
    evaluate_outputs(&generate_outputs(model, vocab, testset, gen)?, embedder)
}

/// `(generated, gold)` for every test query; the i-th answer is sampled
/// with a seed derived from `gen.seed` and i.
pub fn generate_outputs(
    model: &ModelState,
    vocab: &Vocab,
    testset: &[DialoguePair],
    gen: &GenerationConfig,
) -> Result<Vec<(String, String)>, EvalError> {
    if testset.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    testset
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let g = GenerationConfig { seed: derive_seed(gen.seed, &format!("eval/{i}")), ..gen.clone() };
            Ok((generate_answer(model, vocab, &p.query, &g)?, p.answer.clone()))
        })
        .collect()
}

/// Row labels in table order; the last one is the full method.
pub const ABLATION_ROWS: [&str; 6] = ["PT", "PT + SFT", "PT + SFT + RLHF", "KPT", "KPT + SFT", "KPT + SFT + RLHF"];
pub const FULL_ROW: &str = "KPT + SFT + RLHF";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub report: MetricReport,
    /// `(row - full) / full` per metric, in percent.
    pub deltas: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Relative change in percent; 0 when the full value is 0.
pub fn percent_delta(row: f64, full: f64) -> f64 {
    if full == 0.0 {
        0.0
    } else {
        (row - full) / full * 100.0
    }
}

/// `"(-78.61 %)"` style, two decimals, explicit sign except for zero.
pub fn format_delta(pct: f64) -> String {
    let r = (pct * 100.0).round() / 100.0;
    if r == 0.0 {
        "(0.00 %)".to_string()
    } else if r > 0.0 {
        format!("(+{r:.2} %)")
    } else {
        format!("({r:.2} %)")
    }
}

impl AblationTable {
    /// Builds the table from exactly the six labelled rows (any order).
    pub fn from_rows(rows: &[(String, MetricReport)]) -> Result<Self, EvalError> {
        let find = |label: &str| {
            rows.iter()
                .find(|(l, _)| l == label)
                .map(|(_, r)| *r)
                .ok_or_else(|| EvalError::MissingStage(label.to_string()))
        };
        let full = find(FULL_ROW)?;
        let rows = ABLATION_ROWS
            .iter()
            .map(|&label| {
                let report = find(label)?;
                let deltas = std::array::from_fn(|i| percent_delta(report.values()[i], full.values()[i]));
                Ok(AblationRow { label: label.to_string(), report, deltas })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(Self { rows })
    }

    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for m in METRIC_NAMES {
            s.push_str(&format!(",{m}"));
        }
        for m in METRIC_NAMES {
            s.push_str(&format!(",{m} delta %"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.label);
            for v in r.report.values() {
                s.push_str(&format!(",{v:.3}"));
            }
            for d in r.deltas {
                s.push_str(&format!(",{d:.2}"));
            }
            s.push('\n');
        }
        s
    }

    /// Aligned Markdown: a value line per row with its deltas beneath.
    pub fn to_markdown(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![std::iter::once("Method".to_string())
            .chain(METRIC_NAMES.iter().map(|s| s.to_string()))
            .collect()];
        for r in &self.rows {
            cells.push(std::iter::once(r.label.clone()).chain(r.report.values().iter().map(|v| format!("{v:.3}"))).collect());
            cells.push(std::iter::once(String::new()).chain(r.deltas.iter().map(|&d| format_delta(d))).collect());
        }
        markdown_table(&cells)
    }
}

/// Rows of a metric table (Table-4/5 layout) as CSV.
pub fn metrics_csv(rows: &[(String, MetricReport)]) -> String {
    let mut s = String::from("method");
    for m in METRIC_NAMES {
        s.push_str(&format!(",{m}"));
    }
    s.push('\n');
    for (label, r) in rows {
        s.push_str(label);
        for v in r.values() {
            s.push_str(&format!(",{v:.3}"));
        }
        s.push('\n');
    }
    s
}

pub fn metrics_markdown(rows: &[(String, MetricReport)]) -> String {
    let mut cells: Vec<Vec<String>> =
        vec![std::iter::once("Method".to_string()).chain(METRIC_NAMES.iter().map(|s| s.to_string())).collect()];
    for (label, r) in rows {
        cells.push(std::iter::once(label.clone()).chain(r.values().iter().map(|v| format!("{v:.3}"))).collect());
    }
    markdown_table(&cells)
}

fn markdown_table(cells: &[Vec<String>]) -> String {
    let cols = cells[0].len();
    let widths: Vec<usize> =
        (0..cols).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0).max(3)).collect();
    let line = |row: &[String]| {
        let parts: Vec<String> = row.iter().zip(&widths).map(|(v, &w)| format!("{v:<w$}")).collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut s = line(&cells[0]);
    let sep: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    s.push_str(&format!("|-{}-|\n", sep.join("-|-")));
    for row in &cells[1..] {
        s.push_str(&line(row));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_format() {
        assert_eq!(format_delta(percent_delta(9.705, 45.360)), "(-78.60 %)");
        assert_eq!(format_delta(-78.6111), "(-78.61 %)");
        assert_eq!(format_delta(0.0), "(0.00 %)");
        assert_eq!(format_delta(12.346), "(+12.35 %)");
    }

    #[test]
    fn missing_row_is_reported() {
        let rows = vec![("PT".to_string(), MetricReport::default())];
        assert!(matches!(AblationTable::from_rows(&rows), Err(EvalError::MissingStage(_))));
    }
}
