//! Distinct-n: corpus-level n-gram diversity.

use std::collections::HashSet;

/// Pooled counts over every turn; n-grams never cross turn boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distinct {
    pub distinct: usize,
    pub total: usize,
    /// Set when the pool had no n-grams at all; the value is pinned to 0.
    pub degenerate: bool,
}

impl Distinct {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.distinct as f64 / self.total as f64
        }
    }
}

pub fn distinct_n(turns: &[Vec<u32>], n: usize) -> Distinct {
    assert!(n >= 1, "distinct needs a positive n");
    let mut seen: HashSet<&[u32]> = HashSet::new();
    let mut total = 0usize;
    for turn in turns {
        if turn.len() < n {
            continue;
        }
        for g in turn.windows(n) {
            seen.insert(g);
            total += 1;
        }
    }
    Distinct { distinct: seen.len(), total, degenerate: total == 0 }
}
