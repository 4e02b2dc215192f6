use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-batch vocabulary with lexicographically ordered, contiguous ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.doc_freq)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tokens: v.tokens,
            doc_freq: v.doc_freq,
        }
    }
}

impl Vocabulary {
    /// Builds from parallel token / document-frequency lists. Tokens are re-sorted.
    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>) -> Self {
        let mut pairs: Vec<_> = tokens.into_iter().zip(doc_freq).collect();
        pairs.sort();
        pairs.dedup_by(|a, b| a.0 == b.0);
        let (tokens, doc_freq): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            doc_freq,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Tokens with corpus frequency below this are dropped.
    pub min_count: usize,
    /// Tokens present in more than this fraction of documents are dropped.
    pub max_doc_frac: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            min_count: 2,
            max_doc_frac: 0.7,
        }
    }
}

pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], prune: PruneConfig) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from zero documents".into()));
    }
    // BTreeMap keeps the lexicographic id order without a separate sort.
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for doc in docs {
        let mut seen: Vec<&str> = Vec::with_capacity(doc.len());
        for tok in doc {
            let tok = tok.as_ref();
            stats.entry(tok).or_default().0 += 1;
            seen.push(tok);
        }
        seen.sort_unstable();
        seen.dedup();
        for tok in seen {
            stats.get_mut(tok).unwrap().1 += 1;
        }
    }
    let n_docs = docs.len() as f64;
    let (tokens, doc_freq): (Vec<String>, Vec<usize>) = stats
        .into_iter()
        .filter(|&(_, (count, df))| count >= prune.min_count && df as f64 / n_docs <= prune.max_doc_frac)
        .map(|(t, (_, df))| (t.to_owned(), df))
        .unzip();
    if tokens.is_empty() {
        return Err(Error::Input("vocabulary pruning removed every token".into()));
    }
    Ok(Vocabulary::from_parts(tokens, doc_freq))
}

/// Raw token counts of a document over `vocab`, sorted by id. Out-of-vocabulary
/// tokens are dropped.
pub fn to_bow<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Result<Vec<(usize, u32)>> {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for t in tokens {
        if let Some(id) = vocab.id(t.as_ref()) {
            *counts.entry(id).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Input("document has no in-vocabulary token".into()));
    }
    Ok(counts.into_iter().collect())
}
