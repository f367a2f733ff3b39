//! Evaluation: overlap and embedding metrics, rareness, multiple-choice
//! benchmarking, structural reasonability and stage-comparison reports.

pub mod mcq;
pub mod metrics;
pub mod rareness;
pub mod reasonability;
pub mod report;

use thiserror::Error;

use crate::corpus::{DialoguePair, Vocab};
use crate::lm::{GenerationConfig, LmError, ModelState};

pub use mcq::{load_mcq, parse_mcq, run_mcq, BenchResult, McqItem};
pub use metrics::{
    bert_score, bleu4, cosine, lcs_len, rouge_l, rouge_n, Embedder, HiddenStateEmbedder, StaticEmbedder,
};
pub use rareness::{rareness, rareness_report, PairStats, RarenessReport, RarenessScore};
pub use reasonability::{
    parse_claims, reasonability_check, Draft, ExternalVerdicts, Judge, ReasonabilityVerdict, Rule,
    StructuralJudge, Verdict,
};
pub use report::{
    evaluate_model, evaluate_outputs, format_delta, generate_answer, generate_outputs, metrics_csv, metrics_markdown,
    percent_delta, prompt_tokens, score_pair, AblationRow, AblationTable, MetricReport, ABLATION_ROWS,
    FULL_ROW,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference has {len} tokens, fewer than n = {n}")]
    ReferenceTooShort { len: usize, n: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("knowledge graph is empty")]
    EmptyGraph,
    #[error("choice sequence of {len} tokens exceeds max_seq {max}")]
    ChoiceTooLong { len: usize, max: usize },
    #[error("malformed item at line {line}: {reason}")]
    MalformedItem { line: usize, reason: String },
    #[error("missing stage row {0:?}")]
    MissingStage(String),
    #[error("no external verdict for draft {0:?}")]
    MissingVerdict(String),
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// exp of the mean next-token NLL over all predicted positions of all
/// sequences (token-weighted).
pub fn perplexity(model: &ModelState, sequences: &[Vec<u32>]) -> Result<f64, EvalError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in sequences.iter().filter(|s| s.len() >= 2) {
        let lp = model.token_logprobs(seq)?;
        total -= lp.iter().sum::<f64>();
        count += lp.len();
    }
    if count == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok((total / count as f64).exp())
}

/// Evaluate each labelled checkpoint with a shared embedder and assemble
/// the six-row comparison table.
pub fn ablation_report(
    models: &[(String, &ModelState)],
    vocab: &Vocab,
    testset: &[DialoguePair],
    embedder: &dyn Embedder,
    gen: &GenerationConfig,
) -> Result<AblationTable, EvalError> {
    for label in ABLATION_ROWS {
        if !models.iter().any(|(l, _)| l == label) {
            return Err(EvalError::MissingStage(label.to_string()));
        }
    }
    let rows = models
        .iter()
        .map(|(label, m)| Ok((label.clone(), evaluate_model(m, vocab, testset, embedder, gen)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    AblationTable::from_rows(&rows)
}
