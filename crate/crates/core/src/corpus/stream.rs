use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{tokenize_with, Normalizer};
use super::vocab::{build_vocabulary, to_bow, PruneConfig, Vocabulary};
use crate::error::{Error, Result};

/// A document encoded against its batch vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub timestep: usize,
    /// `(token id, count)` pairs sorted by id, counts positive.
    pub counts: Vec<(usize, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Document {
    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }
}

/// A normalized document before vocabulary encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedDoc {
    pub id: String,
    pub timestep: usize,
    pub tokens: Vec<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamBatch {
    pub t: usize,
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    /// Ids of input documents with no token left after pruning.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

impl StreamBatch {
    /// Builds the per-timestep vocabulary from `docs` and encodes them against it.
    pub fn build(t: usize, docs: &[TokenizedDoc], prune: PruneConfig) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Input(format!("timestep {t} has no documents")));
        }
        let token_lists: Vec<&Vec<String>> = docs.iter().map(|d| &d.tokens).collect();
        let token_lists: Vec<Vec<&str>> = token_lists
            .iter()
            .map(|d| d.iter().map(String::as_str).collect())
            .collect();
        let vocabulary = build_vocabulary(&token_lists, prune)
            .map_err(|e| Error::Input(format!("timestep {t}: {e}")))?;
        let mut documents = Vec::with_capacity(docs.len());
        let mut dropped = Vec::new();
        for d in docs {
            match to_bow(&d.tokens, &vocabulary) {
                Ok(counts) => documents.push(Document {
                    id: d.id.clone(),
                    timestep: t,
                    counts,
                    label: d.label.clone(),
                }),
                Err(_) => dropped.push(d.id.clone()),
            }
        }
        if documents.is_empty() {
            return Err(Error::Input(format!("timestep {t}: no document survived pruning")));
        }
        Ok(Self {
            t,
            vocabulary,
            documents,
            dropped,
        })
    }

    pub fn is_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        crate::io::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batching {
    /// One batch per distinct timestep; timesteps must cover `0..T` without gaps.
    ByTimestep,
    /// Consecutive slices of the ordered corpus; input timesteps are overwritten.
    Slices(usize),
}

/// Partitions documents into per-timestep batches, each with its own vocabulary.
pub fn make_stream(
    docs: Vec<TokenizedDoc>,
    batching: Batching,
    prune: PruneConfig,
) -> Result<Vec<StreamBatch>> {
    if docs.is_empty() {
        return Err(Error::Input("empty corpus".into()));
    }
    let groups: Vec<Vec<TokenizedDoc>> = match batching {
        Batching::Slices(0) => return Err(Error::Config("batch_size must be positive".into())),
        Batching::Slices(size) => docs
            .chunks(size)
            .enumerate()
            .map(|(t, chunk)| {
                chunk
                    .iter()
                    .cloned()
                    .map(|mut d| {
                        d.timestep = t;
                        d
                    })
                    .collect()
            })
            .collect(),
        Batching::ByTimestep => {
            let mut by_t: BTreeMap<usize, Vec<TokenizedDoc>> = BTreeMap::new();
            for d in docs {
                by_t.entry(d.timestep).or_default().push(d);
            }
            let last = *by_t.keys().next_back().unwrap();
            for t in 0..=last {
                if !by_t.contains_key(&t) {
                    return Err(Error::Input(format!("timestep {t} is empty")));
                }
            }
            by_t.into_values().collect()
        }
    };
    groups
        .iter()
        .enumerate()
        .map(|(t, g)| StreamBatch::build(t, g, prune))
        .collect()
}

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
    #[serde(default)]
    timestep: Option<usize>,
    #[serde(default)]
    label: Option<String>,
}

/// Reads a JSON-lines corpus (`{"id","text","timestep","label"?}` per line) and
/// normalizes every text.
pub fn read_jsonl_corpus(
    path: &Path,
    stopwords: &HashSet<String>,
    normalizer: &dyn Normalizer,
) -> Result<Vec<TokenizedDoc>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(TokenizedDoc {
            id: rec.id,
            timestep: rec.timestep.unwrap_or(0),
            tokens: tokenize_with(&rec.text, stopwords, normalizer),
            label: rec.label,
        });
    }
    Ok(out)
}
