//! PMI collocation vocabulary and mask selection for masked-LM training.

use std::collections::{HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStrategy {
    /// Uniform: single positions drawn at random.
    Um,
    /// Whole high-PMI n-gram spans, topped up with single positions.
    Pmi,
}

impl std::str::FromStr for MaskStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "um" => Ok(MaskStrategy::Um),
            "pmi" => Ok(MaskStrategy::Pmi),
            other => Err(format!("unknown masking strategy {other:?} (expected um or pmi)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiEntry {
    pub ngram: Vec<String>,
    pub n: usize,
    pub count: u64,
    pub score: f64,
}

/// Collocations with their scores; records sorted by `n`, then descending
/// score, then n-gram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiVocabulary {
    pub n_max: usize,
    pub min_count: u64,
    pub top_k: usize,
    /// Number of n-gram positions in the corpus, index `n - 1`.
    pub totals: Vec<u64>,
    pub entries: Vec<PmiEntry>,
    #[serde(skip)]
    lookup: HashSet<Vec<String>>,
}

impl PmiVocabulary {
    pub fn from_entries(n_max: usize, min_count: u64, top_k: usize, totals: Vec<u64>, entries: Vec<PmiEntry>) -> Self {
        let lookup = entries.iter().map(|e| e.ngram.clone()).collect();
        Self {
            n_max,
            min_count,
            top_k,
            totals,
            entries,
            lookup,
        }
    }

    /// Rebuilds the lookup set after deserialisation.
    pub fn reindex(&mut self) {
        self.lookup = self.entries.iter().map(|e| e.ngram.clone()).collect();
    }

    pub fn contains(&self, ngram: &[String]) -> bool {
        self.lookup.contains(ngram)
    }

    pub fn score(&self, ngram: &[String]) -> Option<f64> {
        self.entries.iter().find(|e| e.ngram == ngram).map(|e| e.score)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn longest(&self) -> usize {
        self.entries.iter().map(|e| e.n).max().unwrap_or(0)
    }
}

/// Scores every n-gram (`2 ≤ n ≤ n_max`) seen at least `min_count` times.
///
/// `p(g)` is the count of `g` over the number of length-`|g|` positions in the
/// corpus; the score is the minimum over binary splits `g = s1 s2` of
/// `ln p(g) − ln p(s1) − ln p(s2)`. The `top_k` best per length are kept.
pub fn build_pmi_vocab(corpus: &[Vec<String>], n_max: usize, min_count: u64, top_k: usize) -> Result<PmiVocabulary> {
    contract!(
        corpus.iter().any(|s| !s.is_empty()),
        "PMI vocabulary needs a non-empty corpus"
    );
    contract!(n_max >= 2, "n_max must be at least 2");
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    let mut totals = vec![0u64; n_max];
    for seq in corpus {
        for n in 1..=n_max.min(seq.len()) {
            totals[n - 1] += (seq.len() + 1 - n) as u64;
            for w in seq.windows(n) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let prob = |g: &[String]| counts[g] as f64 / totals[g.len() - 1] as f64;
    let mut entries = Vec::new();
    for n in 2..=n_max {
        let mut scored: Vec<PmiEntry> = counts
            .iter()
            .filter(|(g, &c)| g.len() == n && c >= min_count)
            .map(|(g, &c)| {
                let joint = prob(g).ln();
                let score = (1..n)
                    .map(|k| joint - prob(&g[..k]).ln() - prob(&g[k..]).ln())
                    .fold(f64::INFINITY, f64::min);
                PmiEntry {
                    ngram: g.to_vec(),
                    n,
                    count: c,
                    score,
                }
            })
            .filter(|e| e.score.is_finite())
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.ngram.cmp(&b.ngram)));
        scored.truncate(top_k);
        entries.extend(scored);
    }
    Ok(PmiVocabulary::from_entries(n_max, min_count, top_k, totals, entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    UmSingle,
    PmiSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpan {
    pub start: usize,
    pub len: usize,
    pub kind: SpanKind,
}

/// Masked positions of one sequence, as disjoint contiguous spans sorted by
/// start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub len: usize,
    pub spans: Vec<MaskSpan>,
}

impl MaskPlan {
    pub fn masked(&self) -> Vec<usize> {
        self.spans.iter().flat_map(|s| s.start..s.start + s.len).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }
}

/// Chooses positions to mask, `round(ratio · n)` of them.
///
/// UM samples distinct positions uniformly. PMI first segments the sequence
/// greedily left to right into the longest vocabulary n-grams, then takes
/// whole spans in random order while they fit the budget and fills the rest
/// with single positions.
pub fn select_masks(
    tokens: &[String],
    strategy: MaskStrategy,
    ratio: f64,
    vocab: Option<&PmiVocabulary>,
    seed: u64,
) -> Result<MaskPlan> {
    contract!(ratio > 0.0 && ratio < 1.0, "mask ratio {ratio} outside (0, 1)");
    let n = tokens.len();
    let budget = (ratio * n as f64).round() as usize;
    let mut r = rng(seed);
    let mut spans = Vec::new();
    match strategy {
        MaskStrategy::Um => {
            for i in index::sample(&mut r, n, budget) {
                spans.push(MaskSpan {
                    start: i,
                    len: 1,
                    kind: SpanKind::UmSingle,
                });
            }
        }
        MaskStrategy::Pmi => {
            let Some(vocab) = vocab else {
                return Err(crate::Error::Contract("PMI masking requires a vocabulary".into()));
            };
            let longest = vocab.longest();
            let mut candidates = Vec::new();
            let mut i = 0;
            while i < n {
                let found = (2..=longest.min(n - i))
                    .rev()
                    .find(|&len| vocab.contains(&tokens[i..i + len]));
                match found {
                    Some(len) => {
                        candidates.push((i, len));
                        i += len;
                    }
                    None => i += 1,
                }
            }
            candidates.shuffle(&mut r);
            let mut taken = vec![false; n];
            let mut used = 0;
            for (start, len) in candidates {
                if used + len <= budget {
                    used += len;
                    taken[start..start + len].iter_mut().for_each(|t| *t = true);
                    spans.push(MaskSpan {
                        start,
                        len,
                        kind: SpanKind::PmiSpan,
                    });
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            let fill = (budget - used).min(free.len());
            for k in index::sample(&mut r, free.len(), fill) {
                spans.push(MaskSpan {
                    start: free[k],
                    len: 1,
                    kind: SpanKind::UmSingle,
                });
            }
        }
    }
    spans.sort_by_key(|s| s.start);
    Ok(MaskPlan { len: n, spans })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn um_budget_is_exact() {
        let toks = words("a b c d e f g h i j k l m n o p q r s t");
        let plan = select_masks(&toks, MaskStrategy::Um, 0.15, None, 9).unwrap();
        assert_eq!(plan.masked_count(), 3);
        assert_eq!(plan, select_masks(&toks, MaskStrategy::Um, 0.15, None, 9).unwrap());
    }

    #[test]
    fn pmi_takes_vocabulary_span() {
        let toks = words("a b c d wafer test e f g h k l m");
        let vocab = PmiVocabulary::from_entries(
            2,
            1,
            10,
            vec![],
            vec![PmiEntry {
                ngram: words("wafer test"),
                n: 2,
                count: 5,
                score: 1.0,
            }],
        );
        // 13 tokens at 0.15 gives a budget of 2
        let plan = select_masks(&toks, MaskStrategy::Pmi, 0.15, Some(&vocab), 1).unwrap();
        assert_eq!(plan.masked(), vec![4, 5]);
        assert_eq!(plan.spans[0].kind, SpanKind::PmiSpan);
    }

    #[test]
    fn ratio_must_be_open_unit_interval() {
        let toks = words("a b");
        assert!(select_masks(&toks, MaskStrategy::Um, 0.0, None, 1).is_err());
        assert!(select_masks(&toks, MaskStrategy::Um, 1.0, None, 1).is_err());
        assert!(select_masks(&toks, MaskStrategy::Pmi, 0.5, None, 1).is_err());
    }

    #[test]
    fn always_together_bigram_scores_highest() {
        use rand::Rng;
        let mut r = rng(5);
        let fillers = ["a", "b", "c"];
        let mut corpus = Vec::new();
        for _ in 0..30 {
            let mut seq: Vec<String> = (0..3).map(|_| fillers[r.gen_range(0..3)].to_string()).collect();
            let at = r.gen_range(0..=3);
            seq.insert(at, "test".into());
            seq.insert(at, "wafer".into());
            corpus.push(seq);
        }
        let v = build_pmi_vocab(&corpus, 2, 1, 100).unwrap();
        let best = &v.entries[0];
        assert_eq!(best.ngram, words("wafer test"));
        // 150 unigram positions, 120 bigram positions
        let expected = (30.0f64 / 120.0).ln() - 2.0 * (30.0f64 / 150.0).ln();
        assert!((best.score - expected).abs() < 1e-12);
        assert!(v.entries[1].score < best.score);
    }

    #[test]
    fn min_count_filters() {
        let corpus = vec![words("a b a b c d")];
        let v = build_pmi_vocab(&corpus, 2, 2, 100).unwrap();
        assert!(v.contains(&words("a b")));
        assert!(!v.contains(&words("c d")));
    }
}
