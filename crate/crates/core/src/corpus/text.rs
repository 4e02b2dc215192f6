//! Text normalization: lowercase, apostrophe splitting, punctuation removal,
//! optional lemma mapping and token filtering.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Minimum token length is exclusive: tokens must have more than this many chars.
pub const MIN_TOKEN_CHARS: usize = 2;

/// The bundled English stopword list.
pub fn default_stopwords() -> HashSet<String> {
    parse_word_list(DEFAULT_STOPWORDS)
}

/// Reads a stopword file: one token per line, blank lines and `#` comments ignored.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Maps a normalized token to its canonical form before filtering.
pub trait Normalizer: Send + Sync {
    fn normalize<'a>(&'a self, token: &'a str) -> &'a str;
}

/// Leaves tokens untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct Identity;

impl Normalizer for Identity {
    fn normalize<'a>(&'a self, token: &'a str) -> &'a str {
        token
    }
}

/// Lemma lookup table loaded from a `token lemma` file.
#[derive(Debug, Default, Clone)]
pub struct LemmaMap {
    map: HashMap<String, String>,
}

impl LemmaMap {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        Self {
            map: pairs
                .into_iter()
                .map(|(k, v)| (k.into().to_lowercase(), v.into().to_lowercase()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(tok), Some(lemma), None) => {
                    map.insert(tok.to_lowercase(), lemma.to_lowercase());
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        msg: "expected `token lemma`".into(),
                    })
                }
            }
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl Normalizer for LemmaMap {
    fn normalize<'a>(&'a self, token: &'a str) -> &'a str {
        self.map.get(token).map(String::as_str).unwrap_or(token)
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2018}' | '\u{2019}' | '\u{02BC}' | '`')
}

/// Splits raw text into filtered tokens.
pub fn tokenize_normalize(raw: &str, stopwords: &HashSet<String>) -> Vec<String> {
    tokenize_with(raw, stopwords, &Identity)
}

/// As [`tokenize_normalize`], mapping each token through `normalizer` before filtering.
pub fn tokenize_with(
    raw: &str,
    stopwords: &HashSet<String>,
    normalizer: &dyn Normalizer,
) -> Vec<String> {
    let mut cleaned = String::with_capacity(raw.len());
    for c in raw.chars() {
        if is_apostrophe(c) {
            cleaned.push(' ');
        } else if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()) {
            // stripped
        } else {
            cleaned.extend(c.to_lowercase());
        }
    }
    cleaned
        .split_whitespace()
        .map(|t| normalizer.normalize(t))
        .filter(|t| {
            t.chars().count() > MIN_TOKEN_CHARS
                && t.chars().all(char::is_alphabetic)
                && !stopwords.contains(*t)
        })
        .map(str::to_owned)
        .collect()
}
