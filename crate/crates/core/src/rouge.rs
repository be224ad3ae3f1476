//! ROUGE-1/2/L precision, recall and F-measure.
//!
//! ROUGE-L here is summary-level: one LCS over the full token sequences, no
//! sentence splitting. F uses beta = 1.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_non_alnum: bool,
    /// Snowball English stemming.
    pub stemming: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_non_alnum: true,
            stemming: false,
        }
    }
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut text = if config.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    if config.strip_non_alnum {
        text = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
    }
    let tokens = text.split_whitespace();
    if config.stemming {
        let stemmer = Stemmer::create(Algorithm::English);
        tokens.map(|t| stemmer.stem(t).into_owned()).collect()
    } else {
        tokens.map(str::to_string).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        Self::from_pr(
            ratio(overlap, candidate_total),
            ratio(overlap, reference_total),
        )
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f_measure,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub r1: RougeScore,
    pub r2: RougeScore,
    pub rl: RougeScore,
}

impl ScoreTriple {
    pub fn get(&self, variant: RougeVariant) -> &RougeScore {
        match variant {
            RougeVariant::Rouge1 => &self.r1,
            RougeVariant::Rouge2 => &self.r2,
            RougeVariant::RougeL => &self.rl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 3] = [
        RougeVariant::Rouge1,
        RougeVariant::Rouge2,
        RougeVariant::RougeL,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RougeVariant::Rouge1 => "Rouge-1",
            RougeVariant::Rouge2 => "Rouge-2",
            RougeVariant::RougeL => "Rouge-L",
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RougeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rouge1" | "r1" => Ok(RougeVariant::Rouge1),
            "rouge2" | "r2" => Ok(RougeVariant::Rouge2),
            "rougel" | "rl" => Ok(RougeVariant::RougeL),
            _ => Err(Error::invalid(format!("unknown rouge variant {s:?}"))),
        }
    }
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. Panics if `n == 0`.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(gram, &c)| refs.get(gram).map_or(0, |&r| c.min(r)))
        .sum();
    let total = |len: usize| (len + 1).saturating_sub(n);
    RougeScore::from_counts(overlap, total(candidate.len()), total(reference.len()))
}

/// Length of the longest common subsequence, two-row DP.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// One longest common subsequence as (candidate index, reference index)
/// pairs, in order. Used to highlight matched tokens.
pub fn lcs_alignment<T: AsRef<str>>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i].as_ref() == b[j].as_ref() {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let mut pairs = Vec::with_capacity(table[0][0]);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i].as_ref() == b[j].as_ref() {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if table[i + 1][j] >= table[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

pub fn score_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> ScoreTriple {
    ScoreTriple {
        r1: rouge_n(candidate, reference, 1),
        r2: rouge_n(candidate, reference, 2),
        rl: rouge_l(candidate, reference),
    }
}

pub fn score_pair(candidate: &str, reference: &str, config: &TokenizerConfig) -> ScoreTriple {
    score_tokens(&tokenize(candidate, config), &tokenize(reference, config))
}

/// Mean and spread of one cell across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single run.
    pub deviation: f64,
    pub n_runs: usize,
}

pub fn aggregate(per_run_means: &[f64]) -> Result<AggregateCell> {
    let n = per_run_means.len();
    if n == 0 {
        return Err(Error::invalid("cannot aggregate an empty run list"));
    }
    let mean = per_run_means.iter().sum::<f64>() / n as f64;
    let deviation = if n < 2 {
        0.0
    } else {
        let ss: f64 = per_run_means.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(AggregateCell {
        mean,
        deviation,
        n_runs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn tokenizer_rules() {
        let d = TokenizerConfig::default();
        assert_eq!(tokenize("The Cat, sat!", &d), ["the", "cat", "sat"]);
        assert!(tokenize("", &d).is_empty());
        let keep = TokenizerConfig {
            strip_non_alnum: false,
            ..d
        };
        assert_eq!(tokenize("A-B", &keep), ["a-b"]);
        let stem = TokenizerConfig {
            stemming: true,
            ..d
        };
        assert_eq!(tokenize("Running cats", &stem), ["run", "cat"]);
    }

    #[test]
    fn worked_example() {
        let c = toks("the cat on mat");
        let r = toks("the cat sat on the mat");
        let r1 = rouge_n(&c, &r, 1);
        assert_eq!((r1.precision, r1.recall), (1.0, 4.0 / 6.0));
        assert!((r1.f_measure - 0.8).abs() < 1e-15);
        let r2 = rouge_n(&c, &r, 2);
        assert_eq!((r2.precision, r2.recall), (1.0 / 3.0, 1.0 / 5.0));
        assert!((r2.f_measure - 0.25).abs() < 1e-15);
        let rl = rouge_l(&c, &r);
        assert_eq!(lcs_len(&c, &r), 4);
        assert!((rl.f_measure - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_and_disjoint() {
        let x = toks("a b c");
        for s in [rouge_n(&x, &x, 1), rouge_n(&x, &x, 2), rouge_l(&x, &x)] {
            assert_eq!(
                s,
                RougeScore {
                    precision: 1.0,
                    recall: 1.0,
                    f_measure: 1.0
                }
            );
        }
        let y = toks("d e f");
        for s in [rouge_n(&x, &y, 1), rouge_n(&x, &y, 2), rouge_l(&x, &y)] {
            assert_eq!(s, RougeScore::default());
        }
    }

    #[test]
    fn empty_side_is_zero() {
        let t = score_pair("", "a b", &TokenizerConfig::default());
        assert_eq!(t, ScoreTriple::default());
        let t = score_pair("a b", "a b", &TokenizerConfig::default());
        assert_eq!(t.r1.f_measure, 1.0);
        assert_eq!(t.r2.f_measure, 1.0);
        assert_eq!(t.rl.f_measure, 1.0);
    }

    #[test]
    fn reversal_changes_rl_only() {
        let c = toks("mat the on cat the");
        let r = toks("the cat on the mat");
        assert_eq!(rouge_n(&c, &r, 1).f_measure, 1.0);
        assert!(rouge_l(&c, &r).f_measure < 1.0);
    }

    #[test]
    fn alignment_matches_lcs_len() {
        let a = toks("the cat on mat");
        let b = toks("the cat sat on the mat");
        let pairs = lcs_alignment(&a, &b);
        assert_eq!(pairs.len(), lcs_len(&a, &b));
        assert!(pairs.iter().all(|&(i, j)| a[i] == b[j]));
    }

    #[test]
    fn aggregation() {
        let one = aggregate(&[0.4]).unwrap();
        assert_eq!((one.mean, one.deviation, one.n_runs), (0.4, 0.0, 1));
        let two = aggregate(&[0.2, 0.4]).unwrap();
        assert!((two.mean - 0.3).abs() < 1e-15);
        // sqrt(((0.1)^2 + (0.1)^2) / 1) = 0.1 * sqrt(2)
        assert!((two.deviation - 0.1 * 2f64.sqrt()).abs() < 1e-12);
        let flat = aggregate(&[0.3, 0.3, 0.3]).unwrap();
        assert!(flat.deviation.abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..13)
            .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn scores_are_bounded(c in words(), r in words()) {
            let t = score_tokens(&c, &r);
            for s in [t.r1, t.r2, t.rl] {
                for v in [s.precision, s.recall, s.f_measure] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn appending_reference_token_keeps_r1_recall(c in words(), r in words(), pick in any::<prop::sample::Index>()) {
            prop_assume!(!r.is_empty());
            let before = rouge_n(&c, &r, 1).recall;
            let mut longer = c.clone();
            longer.push(r[pick.index(r.len())].clone());
            prop_assert!(rouge_n(&longer, &r, 1).recall >= before);
        }

        #[test]
        fn identity_scores_one(x in words()) {
            if !x.is_empty() {
                prop_assert_eq!(rouge_n(&x, &x, 1).f_measure, 1.0);
                prop_assert_eq!(rouge_l(&x, &x).f_measure, 1.0);
            }
            if x.len() >= 2 {
                prop_assert_eq!(rouge_n(&x, &x, 2).f_measure, 1.0);
            }
        }
    }
}
