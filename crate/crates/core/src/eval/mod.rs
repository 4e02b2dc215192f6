//! Topic-quality metrics and export tables.

mod pca;
mod scores;
mod series;
mod words;

pub use pca::{pca_project, write_pca_csv, Projection};
pub use scores::{dispersion_delta, harmonic_mean, mean_usize, p_metric, MetricReport, RunMetrics};
pub use series::{
    topic_frequency_series, topic_term_count_matrix, write_count_matrix_csv, write_frequency_csv, CountMatrix,
    FrequencyTable,
};
pub use words::{
    top_tokens, top_words, topic_coherence, topic_diversity, CoherenceMode, RefCorpus, NPMI_EPS, TC_TOP_N, TD_TOP_N,
};
