//! Greedy decoding and accuracy metrics.

use super::model::Model;
use crate::encoding::EncodedSentence;
use crate::error::Result;

/// Sentences decoded together per batch.
const DECODE_BATCH: usize = 64;

/// Greedy decoding of every source; hypotheses exclude the end symbol.
/// Output length is capped at `2 * source length + 10`.
pub fn greedy_decode(model: &Model, sources: &[EncodedSentence]) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(DECODE_BATCH) {
        let refs: Vec<&EncodedSentence> = chunk.iter().collect();
        let max_len = chunk.iter().map(|s| 2 * s.len() + 10).max().unwrap_or(10);
        out.extend(model.greedy_decode_batch(&refs, max_len)?);
    }
    Ok(out)
}

/// Position-wise matches over `Σ max(|hyp|, |ref|)`. Two empty corpora
/// score 1.
pub fn token_accuracy<T: PartialEq>(hyps: &[Vec<T>], refs: &[Vec<T>]) -> f64 {
    assert_eq!(hyps.len(), refs.len(), "hypothesis and reference counts differ");
    let mut correct = 0usize;
    let mut total = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        correct += h.iter().zip(r).filter(|(a, b)| a == b).count();
        total += h.len().max(r.len());
    }
    if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    }
}

/// Fraction of exact sentence matches. An empty corpus scores 1.
pub fn sequence_accuracy<T: PartialEq>(hyps: &[Vec<T>], refs: &[Vec<T>]) -> f64 {
    assert_eq!(hyps.len(), refs.len(), "hypothesis and reference counts differ");
    if hyps.is_empty() {
        return 1.0;
    }
    hyps.iter().zip(refs).filter(|(h, r)| h == r).count() as f64 / hyps.len() as f64
}
