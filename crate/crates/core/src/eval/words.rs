//! Top words, topic diversity and topic coherence.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TC_TOP_N: usize = 10;
pub const TD_TOP_N: usize = 25;
pub const NPMI_EPS: f64 = 1e-12;

/// Ids of the `n` most probable words of topic `k` in a `V × K` matrix; ties go
/// to the lower id.
pub fn top_words(beta: &Array2<f64>, k: usize, n: usize) -> Result<Vec<usize>> {
    let v = beta.nrows();
    if n > v {
        return Err(Error::Input(format!("asked for {n} top words from a vocabulary of {v}")));
    }
    if k >= beta.ncols() {
        return Err(Error::Input(format!("topic {k} out of range")));
    }
    let col = beta.column(k);
    let mut ids: Vec<usize> = (0..v).collect();
    ids.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
    ids.truncate(n);
    Ok(ids)
}

pub fn top_tokens(beta: &Array2<f64>, tokens: &[String], k: usize, n: usize) -> Result<Vec<String>> {
    Ok(top_words(beta, k, n)?.into_iter().map(|i| tokens[i].clone()).collect())
}

/// Fraction of distinct words among all topics' top lists.
pub fn topic_diversity(topics: &[Vec<String>]) -> Result<f64> {
    let Some(first) = topics.first() else {
        return Err(Error::Input("topic diversity of zero topics".into()));
    };
    let n = first.len();
    if n == 0 || topics.iter().any(|t| t.len() != n) {
        return Err(Error::Input("topic word lists must be nonempty and equally long".into()));
    }
    let distinct: std::collections::HashSet<&String> = topics.iter().flatten().collect();
    Ok(distinct.len() as f64 / (n * topics.len()) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceMode {
    #[default]
    Npmi,
    Umass,
}

/// Document-level occurrence index over a reference corpus.
#[derive(Debug, Clone)]
pub struct RefCorpus {
    n_docs: usize,
    /// token → bitset of documents containing it
    postings: HashMap<String, Vec<u64>>,
}

impl RefCorpus {
    pub fn new<D, T>(docs: D) -> Self
    where
        D: IntoIterator,
        D::Item: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut postings: HashMap<String, Vec<u64>> = HashMap::new();
        let mut n_docs = 0;
        for (d, doc) in docs.into_iter().enumerate() {
            n_docs = d + 1;
            for tok in doc {
                let bits = postings.entry(tok.as_ref().to_owned()).or_default();
                if bits.len() <= d / 64 {
                    bits.resize(d / 64 + 1, 0);
                }
                bits[d / 64] |= 1 << (d % 64);
            }
        }
        Self { n_docs, postings }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn doc_count(&self, w: &str) -> usize {
        self.postings.get(w).map_or(0, |b| b.iter().map(|x| x.count_ones() as usize).sum())
    }

    pub fn co_count(&self, a: &str, b: &str) -> usize {
        match (self.postings.get(a), self.postings.get(b)) {
            (Some(x), Some(y)) => x.iter().zip(y).map(|(p, q)| (p & q).count_ones() as usize).sum(),
            _ => 0,
        }
    }
}

fn npmi_pair(c: &RefCorpus, a: &str, b: &str) -> Option<f64> {
    let (da, db) = (c.doc_count(a), c.doc_count(b));
    if da == 0 || db == 0 {
        return None;
    }
    let n = c.n_docs as f64;
    let (pa, pb, pab) = (da as f64 / n, db as f64 / n, c.co_count(a, b) as f64 / n);
    if pab >= 1.0 {
        // both words in every document: perfectly associated
        return Some(1.0);
    }
    let joint = pab + NPMI_EPS;
    Some((joint / (pa * pb)).ln() / -joint.ln())
}

/// Mean over topics of the mean pairwise score. Pairs with a word absent from the
/// reference corpus are skipped, as are topics left with no pair.
pub fn topic_coherence(topics: &[Vec<String>], refs: &RefCorpus, mode: CoherenceMode) -> Result<f64> {
    if refs.n_docs == 0 {
        return Err(Error::Input("coherence needs a nonempty reference corpus".into()));
    }
    let mut per_topic = Vec::with_capacity(topics.len());
    for words in topics {
        let mut scores = Vec::new();
        for i in 0..words.len() {
            for j in 0..i {
                let s = match mode {
                    CoherenceMode::Npmi => npmi_pair(refs, &words[i], &words[j]),
                    CoherenceMode::Umass => {
                        // j ranks above i
                        let dj = refs.doc_count(&words[j]);
                        (dj > 0 && refs.doc_count(&words[i]) > 0)
                            .then(|| ((refs.co_count(&words[i], &words[j]) as f64 + 1.0) / dj as f64).ln())
                    }
                };
                scores.extend(s);
            }
        }
        if !scores.is_empty() {
            per_topic.push(scores.iter().sum::<f64>() / scores.len() as f64);
        }
    }
    if per_topic.is_empty() {
        return Err(Error::Input("every coherence pair was skipped".into()));
    }
    Ok(per_topic.iter().sum::<f64>() / per_topic.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn top_word_ties_and_peaks() {
        let uniform = Array2::from_elem((5, 1), 0.2);
        assert_eq!(top_words(&uniform, 0, 3).unwrap(), vec![0, 1, 2]);
        let peaked = array![[0.05], [0.9], [0.05]];
        assert_eq!(top_words(&peaked, 0, 1).unwrap(), vec![1]);
        assert!(top_words(&peaked, 0, 4).is_err());
    }

    #[test]
    fn diversity_extremes() {
        let a = words(&["x", "y"]);
        let b = words(&["z", "w"]);
        assert_eq!(topic_diversity(&[a.clone(), b]).unwrap(), 1.0);
        assert_eq!(topic_diversity(&[a.clone(), a]).unwrap(), 0.5);
    }

    #[test]
    fn npmi_limits() {
        let refs = RefCorpus::new(vec![vec!["car", "road"], vec!["car", "road"], vec!["sky"], vec!["sun"]]);
        let together = topic_coherence(&[words(&["car", "road"])], &refs, CoherenceMode::Npmi).unwrap();
        assert!((together - 1.0).abs() < 1e-9, "{together}");
        let apart = topic_coherence(&[words(&["sky", "sun"])], &refs, CoherenceMode::Npmi).unwrap();
        // p(i)=p(j)=1/4, p(i,j)=0: tends to −1 only as the smoothing constant vanishes
        let expected = (NPMI_EPS * 16.0).ln() / -NPMI_EPS.ln();
        assert!((apart - expected).abs() < 1e-12 && expected < -0.89, "{apart}");
        let everywhere = RefCorpus::new(vec![vec!["a", "b"], vec!["a", "b"]]);
        assert_eq!(topic_coherence(&[words(&["a", "b"])], &everywhere, CoherenceMode::Npmi).unwrap(), 1.0);
    }

    #[test]
    fn absent_words_are_skipped() {
        let refs = RefCorpus::new(vec![vec!["a"]]);
        assert!(topic_coherence(&[words(&["a", "zzz"])], &refs, CoherenceMode::Npmi).is_err());
        assert!(topic_coherence(&[words(&["a", "zzz"])], &refs, CoherenceMode::Umass).is_err());
    }

    #[test]
    fn bitsets_cross_word_boundaries() {
        let docs: Vec<Vec<&str>> = (0..130).map(|i| if i % 2 == 0 { vec!["even"] } else { vec!["odd", "even"] }).collect();
        let refs = RefCorpus::new(docs);
        assert_eq!(refs.doc_count("even"), 130);
        assert_eq!(refs.co_count("odd", "even"), 65);
    }
}
