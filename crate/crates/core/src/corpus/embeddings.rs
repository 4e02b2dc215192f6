//! Pretrained word-vector ingestion with a deterministic per-token fallback.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::rng;

/// Fixed `V × L` word-embedding matrix for one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    pub matrix: Array2<f64>,
    pub dim: usize,
    /// Fraction of vocabulary rows found in the source table.
    pub coverage: f64,
}

/// Global token → vector table shared by every timestep.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    fallback_seed: u64,
}

impl EmbeddingTable {
    /// A table with no pretrained vectors: every row comes from the fallback.
    pub fn empty(dim: usize, fallback_seed: u64) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
            fallback_seed,
        }
    }

    pub fn from_vectors(
        dim: usize,
        vectors: impl IntoIterator<Item = (String, Vec<f64>)>,
        fallback_seed: u64,
    ) -> Result<Self> {
        let vectors: HashMap<_, _> = vectors.into_iter().collect();
        if let Some((tok, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Input(format!(
                "vector for `{tok}` has {} values, expected {dim}",
                v.len()
            )));
        }
        Ok(Self {
            dim,
            vectors,
            fallback_seed,
        })
    }

    /// Parses a `token v1 … vL` text file. Every line must carry exactly `dim` values.
    pub fn load(path: &Path, dim: usize, fallback_seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|_| parse_err(format!("`{p}` is not a decimal"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(parse_err(format!(
                    "dimension mismatch: {} values, expected {dim}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err("non-finite value".into()));
            }
            vectors.insert(token.to_owned(), values);
        }
        Ok(Self {
            dim,
            vectors,
            fallback_seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Fallback row for `token`: N(0, 1/L) entries from a token-keyed stream, so
    /// the same token gets the same vector at every timestep.
    pub fn fallback_row(&self, token: &str) -> Vec<f64> {
        let mut r = rng::derived(self.fallback_seed, token);
        let normal = Normal::new(0.0, 1.0 / (self.dim as f64).sqrt()).unwrap();
        (0..self.dim).map(|_| normal.sample(&mut r)).collect()
    }

    pub fn row(&self, token: &str) -> (Vec<f64>, bool) {
        match self.get(token) {
            Some(v) => (v.to_vec(), true),
            None => (self.fallback_row(token), false),
        }
    }

    /// Embedding matrix for the given tokens, rows in order.
    pub fn matrix_for(&self, tokens: &[String]) -> WordEmbeddings {
        let mut matrix = Array2::zeros((tokens.len(), self.dim));
        let mut hits = 0usize;
        for (i, tok) in tokens.iter().enumerate() {
            let (row, found) = self.row(tok);
            hits += found as usize;
            matrix.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        }
        let coverage = if tokens.is_empty() {
            0.0
        } else {
            hits as f64 / tokens.len() as f64
        };
        WordEmbeddings {
            matrix,
            dim: self.dim,
            coverage,
        }
    }
}

/// Reads `path` and builds the embedding matrix of `vocab`.
pub fn load_word_embeddings(path: &Path, vocab: &Vocabulary, dim: usize, fallback_seed: u64) -> Result<WordEmbeddings> {
    let table = EmbeddingTable::load(path, dim, fallback_seed)?;
    Ok(table.matrix_for(vocab.tokens()))
}

/// Writes vectors in the `token v1 … vL` format.
pub fn write_embeddings(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (tok, v) in rows {
        out.push_str(tok);
        for x in v {
            out.push(' ');
            out.push_str(&format!("{x:?}"));
        }
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_parts(words.iter().map(|s| s.to_string()).collect(), vec![1; words.len()])
    }

    #[test]
    fn full_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "car 0.5 1\nred -2 3e-1\n").unwrap();
        let e = load_word_embeddings(&p, &vocab(&["car", "red"]), 2, 0).unwrap();
        assert_eq!(e.coverage, 1.0);
        assert_eq!(e.matrix.row(0).to_vec(), vec![0.5, 1.0]);
        assert_eq!(e.matrix.row(1).to_vec(), vec![-2.0, 0.3]);
    }

    #[test]
    fn empty_file_is_all_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "").unwrap();
        let e = load_word_embeddings(&p, &vocab(&["car", "red"]), 4, 9).unwrap();
        assert_eq!(e.coverage, 0.0);
        // same token, same fallback row, independent of the vocabulary it sits in
        let other = load_word_embeddings(&p, &vocab(&["car", "zebra"]), 4, 9).unwrap();
        assert_eq!(e.matrix.row(0), other.matrix.row(0));
    }

    #[test]
    fn half_coverage_rows_match_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        let rows = vec![("bbb".to_string(), vec![0.125, -7.5, 1e-3]), ("ddd".to_string(), vec![2.0, 0.0, -0.25])];
        write_embeddings(&p, &rows).unwrap();
        let e = load_word_embeddings(&p, &vocab(&["aaa", "bbb", "ccc", "ddd"]), 3, 1).unwrap();
        assert_eq!(e.coverage, 0.5);
        // parse-and-compare oracle
        let text = std::fs::read_to_string(&p).unwrap();
        for line in text.lines() {
            let mut parts = line.split(' ');
            let tok = parts.next().unwrap();
            let vals: Vec<f64> = parts.map(|s| s.parse().unwrap()).collect();
            let id = ["aaa", "bbb", "ccc", "ddd"].iter().position(|t| *t == tok).unwrap();
            for (a, b) in e.matrix.row(id).iter().zip(&vals) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "car 1 2\nred 1 x\n").unwrap();
        let err = EmbeddingTable::load(&p, 2, 0).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        std::fs::write(&p, "car 1 2 3\n").unwrap();
        let err = EmbeddingTable::load(&p, 2, 0).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn fallback_variance_is_one_over_dim() {
        let table = EmbeddingTable::empty(64, 5);
        let n = 2000;
        let mut sum_sq = 0.0;
        for i in 0..n {
            let row = table.fallback_row(&format!("tok{i}"));
            sum_sq += row.iter().map(|x| x * x).sum::<f64>();
        }
        let var = sum_sq / (n as f64 * 64.0);
        assert!((var * 64.0 - 1.0).abs() < 0.05, "variance*L = {}", var * 64.0);
    }
}
