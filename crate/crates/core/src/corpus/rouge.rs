use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// ROUGE-1 and ROUGE-L precision of a summary against its source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougePrecision {
    pub rouge1: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y { prev[j] + 1 } else { curr[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Clipped unigram precision and LCS precision of `summary` w.r.t. `source`.
pub fn rouge_precision(summary: &str, source: &str) -> Result<RougePrecision, CorpusError> {
    let summary = rouge_tokens(summary);
    if summary.is_empty() {
        return Err(CorpusError::EmptySummary);
    }
    let source = rouge_tokens(source);

    let mut available: HashMap<&str, usize> = HashMap::new();
    for token in &source {
        *available.entry(token.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for token in &summary {
        if let Some(left) = available.get_mut(token.as_str()) {
            if *left > 0 {
                *left -= 1;
                overlap += 1;
            }
        }
    }

    let len = summary.len() as f64;
    Ok(RougePrecision {
        rouge1: overlap as f64 / len,
        rouge_l: lcs_len(&summary, &source) as f64 / len,
    })
}
