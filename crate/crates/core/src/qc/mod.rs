//! Quality-control filters: character error rate, embedding-based diversity
//! deduplication and the yes/no confidence score, plus the deterministic
//! embedders used wherever an image or text embedding is needed.

mod embed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::render::Canvas;

pub use embed::{cosine, DenseEmbedder, Embedder, GridEmbedder, PatchEmbedder, TextEmbedder, TrigramEmbedder};

pub const DEFAULT_TAU_OCR: f64 = 0.05;
pub const DEFAULT_TAU_DIV: f64 = 0.95;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum QcError {
    #[error("source text is empty")]
    EmptySource,
    #[error("diversity threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("P(No) must be positive, got {0}")]
    ZeroNo(f64),
    #[error("probabilities must be non-negative and finite: yes={0}, no={1}")]
    Probability(f64, f64),
    #[error("embedding dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
}

/// Character-level Levenshtein distance, two-row dynamic programme.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `(S + D + I) / N` with `N` the number of characters in `source`.
pub fn cer(source: &str, hypothesis: &str) -> Result<f64, QcError> {
    let s: Vec<char> = source.chars().collect();
    if s.is_empty() {
        return Err(QcError::EmptySource);
    }
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(levenshtein(&s, &h) as f64 / s.len() as f64)
}

/// Legibility check: passes when the error rate is at most `tau_ocr`.
pub fn ocr_passes(source: &str, hypothesis: &str, tau_ocr: f64) -> Result<bool, QcError> {
    Ok(cer(source, hypothesis)? <= tau_ocr)
}

/// Greedy pass in input order keeping an item only when its cosine to every
/// item kept so far is strictly below `tau`.
pub fn diversity_filter(embeddings: &[Vec<f64>], tau: f64) -> Result<Vec<usize>, QcError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(QcError::Threshold(tau));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, e) in embeddings.iter().enumerate() {
        let mut ok = true;
        for &k in &kept {
            let other = &embeddings[k];
            if other.len() != e.len() {
                return Err(QcError::Dimension(other.len(), e.len()));
            }
            if cosine(e, other) >= tau {
                ok = false;
                break;
            }
        }
        if ok {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Embeds the canvases (in parallel under `exec`) and runs [`diversity_filter`].
pub fn diversity_filter_canvases(
    canvases: &[Canvas],
    embedder: &dyn Embedder,
    tau: f64,
    exec: Exec,
) -> Result<Vec<usize>, QcError> {
    let embeddings = exec.map(canvases, |c| embedder.embed(c));
    diversity_filter(&embeddings, tau)
}

/// `(P(yes) - P(no)) / P(no)`.
pub fn logit_score(p_yes: f64, p_no: f64) -> Result<f64, QcError> {
    if !(p_yes.is_finite() && p_no.is_finite()) || p_yes < 0.0 || p_no < 0.0 {
        return Err(QcError::Probability(p_yes, p_no));
    }
    if p_no == 0.0 {
        return Err(QcError::ZeroNo(p_no));
    }
    Ok((p_yes - p_no) / p_no)
}

/// One judged candidate as read from a JSON-lines file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgedPair {
    pub id: String,
    pub p_yes: f64,
    pub p_no: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub id: String,
    pub score: f64,
    pub retained: bool,
}

pub fn score_pair(j: &JudgedPair, threshold: f64) -> Result<ScoredPair, QcError> {
    let score = logit_score(j.p_yes, j.p_no)?;
    Ok(ScoredPair { id: j.id.clone(), score, retained: score >= threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cer_examples() {
        assert_eq!(cer("cat", "cat").unwrap(), 0.0);
        assert!((cer("abc", "axc").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cer("ab", "abc").unwrap(), 0.5);
        assert_eq!(cer("ab", "").unwrap(), 1.0);
        assert_eq!(cer("a", "xyz").unwrap(), 3.0);
        assert_eq!(cer("", "x"), Err(QcError::EmptySource));
        assert!(ocr_passes("hello world!!!!!!!!!", "hello world!!!!!!!!", 0.05).unwrap());
    }

    #[test]
    fn diversity_examples() {
        let e = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(diversity_filter(&e, 0.9).unwrap(), [0, 2]);
        let ortho = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(diversity_filter(&ortho, 0.5).unwrap(), [0, 1, 2]);
        let near = vec![vec![1.0, 0.0], vec![1.0, 0.01]];
        assert_eq!(diversity_filter(&near, 1.0).unwrap(), [0, 1]);
        assert!(diversity_filter(&e, 0.0).is_err());
    }

    #[test]
    fn score_examples() {
        assert_eq!(logit_score(0.5, 0.5).unwrap(), 0.0);
        assert!((logit_score(0.8, 0.2).unwrap() - 3.0).abs() < 1e-12);
        assert!((logit_score(0.2, 0.8).unwrap() + 0.75).abs() < 1e-12);
        assert_eq!(logit_score(0.5, 0.0), Err(QcError::ZeroNo(0.0)));
        let s = score_pair(&JudgedPair { id: "a".into(), p_yes: 0.7, p_no: 0.3 }, 1.0).unwrap();
        assert!(s.retained);
    }

    proptest! {
        #[test]
        fn score_monotone(y in 0.0f64..1.0, n in 0.01f64..1.0, d in 0.001f64..0.5) {
            prop_assert!(logit_score(y + d, n).unwrap() > logit_score(y, n).unwrap());
            prop_assert!(logit_score(y, n + d).unwrap() < logit_score(y, n).unwrap());
        }

        #[test]
        fn levenshtein_symmetric(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &b) <= a.len().max(b.len()));
        }
    }
}
