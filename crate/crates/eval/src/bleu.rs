//! Sentence-level BLEU with modified n-gram precision.
//!
//! Conventions, fixed here and mirrored by the oracle in the acceptance
//! suite: add-one smoothing replaces a zero match count with
//! `1 / (total + 1)`; an empty candidate scores 0; corpus scores are the
//! unweighted mean over turns.

use std::collections::HashMap;

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-`max_n` of one candidate against one reference.
pub fn bleu(candidate: &[u32], reference: &[u32], max_n: usize) -> f64 {
    assert!(max_n >= 1, "BLEU needs at least unigrams");
    if candidate.is_empty() {
        return 0.0;
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        let matched: usize =
            cand.iter().map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0))).sum();
        let p = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    brevity * (log_sum / max_n as f64).exp()
}

/// Macro-average over (candidate, reference) turn pairs.
pub fn bleu_corpus(pairs: &[(Vec<u32>, Vec<u32>)], max_n: usize) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(c, r)| bleu(c, r, max_n)).sum::<f64>() / pairs.len() as f64
}
