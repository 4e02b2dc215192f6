//! Corpus ingestion: normalization, per-timestep vocabularies, batching,
//! synthetic streams and word embeddings.

mod embeddings;
mod stream;
pub mod synthetic;
mod text;
mod vocab;

pub use embeddings::{load_word_embeddings, write_embeddings, EmbeddingTable, WordEmbeddings};
pub use stream::{make_stream, read_jsonl_corpus, Batching, Document, StreamBatch, TokenizedDoc};
pub use text::{
    default_stopwords, load_stopwords, tokenize_normalize, tokenize_with, Identity, LemmaMap, Normalizer,
    MIN_TOKEN_CHARS,
};
pub use vocab::{build_vocabulary, to_bow, PruneConfig, Vocabulary};
