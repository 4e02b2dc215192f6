//! Synthetic document streams with a scheduled set of active topics.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream::{StreamBatch, TokenizedDoc};
use super::vocab::PruneConfig;
use crate::error::{Error, Result};
use crate::rng;

/// Per-timestep active topic sets plus sampling sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSchedule {
    pub active_sets: Vec<Vec<usize>>,
    pub docs_per_step: usize,
    pub doc_length: usize,
    pub seed: u64,
    /// Global vocabulary size of the generated topics.
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    /// Number of ground-truth topics.
    #[serde(default = "default_n_topics")]
    pub n_topics: usize,
    /// Probability mass each topic spreads uniformly over the whole vocabulary.
    #[serde(default = "default_background")]
    pub background_mass: f64,
    /// Dimension of the synthetic word vectors written next to the stream.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

fn default_vocab_size() -> usize {
    300
}
fn default_n_topics() -> usize {
    5
}
fn default_background() -> f64 {
    0.1
}
fn default_embedding_dim() -> usize {
    50
}

impl Default for SyntheticSchedule {
    /// Five topics over eleven steps: topics {0,1,2} for steps 0–6, topic 1
    /// vanishes and topic 3 appears at step 7, topic 4 appears at step 10.
    fn default() -> Self {
        let mut active_sets = vec![vec![0, 1, 2]; 7];
        active_sets.extend(vec![vec![0, 2, 3]; 3]);
        active_sets.push(vec![0, 2, 3, 4]);
        Self {
            active_sets,
            docs_per_step: 200,
            doc_length: 60,
            seed: 0,
            vocab_size: default_vocab_size(),
            n_topics: default_n_topics(),
            background_mass: default_background(),
            embedding_dim: default_embedding_dim(),
        }
    }
}

impl SyntheticSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.active_sets.is_empty() {
            return Err(Error::Config("schedule has no timesteps".into()));
        }
        if self.docs_per_step == 0 {
            return Err(Error::Config("docs_per_step must be positive".into()));
        }
        if self.doc_length == 0 {
            return Err(Error::Config("doc_length must be positive".into()));
        }
        for (t, set) in self.active_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Config(format!("empty active set at step {t}")));
            }
            if let Some(k) = set.iter().find(|&&k| k >= self.n_topics) {
                return Err(Error::Config(format!("step {t}: topic {k} >= n_topics")));
            }
        }
        Ok(())
    }
}

/// Ground-truth record of a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub active_sets: Vec<Vec<usize>>,
    pub k_real: Vec<usize>,
    /// Topic of every generated document, per step, in generation order.
    pub doc_topics: Vec<Vec<usize>>,
}

/// Alphabetic pseudo-word for global word index `i` (unique for i < 26⁴).
pub fn synthetic_word(i: usize) -> String {
    let mut s = String::from("w");
    let mut x = i;
    for _ in 0..4 {
        s.push((b'a' + (x % 26) as u8) as char);
        x /= 26;
    }
    s
}

/// Block-structured topic–word distributions: topic k owns the k-th contiguous
/// block of words with Zipf-like weights, and spreads `background_mass`
/// uniformly over all words.
pub fn block_topic_word_dists(n_topics: usize, vocab_size: usize, background_mass: f64) -> Vec<Vec<f64>> {
    assert!(n_topics > 0 && vocab_size >= n_topics);
    let block = vocab_size / n_topics;
    (0..n_topics)
        .map(|k| {
            let mut row = vec![background_mass / vocab_size as f64; vocab_size];
            let weights: Vec<f64> = (0..block).map(|r| 1.0 / ((r + 1) as f64).powf(0.7)).collect();
            let total: f64 = weights.iter().sum();
            for (r, w) in weights.iter().enumerate() {
                row[k * block + r] += (1.0 - background_mass) * w / total;
            }
            row
        })
        .collect()
}

/// Inverse-CDF sampler over a fixed discrete distribution.
struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Self { cdf }
    }

    fn sample(&self, r: &mut impl rand::Rng) -> usize {
        let u: f64 = r.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

fn check_dists(dists: &[Vec<f64>]) -> Result<()> {
    let v = dists.first().map(Vec::len).unwrap_or(0);
    if dists.is_empty() || v == 0 {
        return Err(Error::Input("empty topic-word distributions".into()));
    }
    for (k, row) in dists.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if row.len() != v || row.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("topic {k} is not a distribution over {v} words")));
        }
    }
    Ok(())
}

/// Draws `n_tokens` word indices i.i.d. from `dist`.
pub fn sample_topic_tokens(dist: &[f64], n_tokens: usize, seed: u64) -> Vec<usize> {
    let cat = Categorical::new(dist);
    let mut r = rng::seeded(seed);
    (0..n_tokens).map(|_| cat.sample(&mut r)).collect()
}

/// Generates the raw token stream: for each step, `docs_per_step` documents,
/// each with one topic drawn uniformly from the active set.
pub fn generate_raw(
    schedule: &SyntheticSchedule,
    dists: &[Vec<f64>],
) -> Result<(Vec<Vec<TokenizedDoc>>, GroundTruth)> {
    schedule.validate()?;
    check_dists(dists)?;
    if let Some(k) = schedule.active_sets.iter().flatten().find(|&&k| k >= dists.len()) {
        return Err(Error::Input(format!("active topic {k} has no word distribution")));
    }
    let cats: Vec<Categorical> = dists.iter().map(|d| Categorical::new(d)).collect();
    let words: Vec<String> = (0..dists[0].len()).map(synthetic_word).collect();
    let mut r = rng::derived(schedule.seed, "synthetic-stream");
    let mut steps = Vec::with_capacity(schedule.active_sets.len());
    let mut doc_topics = Vec::with_capacity(schedule.active_sets.len());
    for (t, active) in schedule.active_sets.iter().enumerate() {
        let mut docs = Vec::with_capacity(schedule.docs_per_step);
        let mut topics = Vec::with_capacity(schedule.docs_per_step);
        for d in 0..schedule.docs_per_step {
            let k = active[r.random_range(0..active.len())];
            let tokens = (0..schedule.doc_length)
                .map(|_| words[cats[k].sample(&mut r)].clone())
                .collect();
            docs.push(TokenizedDoc {
                id: format!("t{t:03}-d{d:05}"),
                timestep: t,
                tokens,
                label: Some(format!("topic{k}")),
            });
            topics.push(k);
        }
        steps.push(docs);
        doc_topics.push(topics);
    }
    let truth = GroundTruth {
        active_sets: schedule.active_sets.clone(),
        k_real: schedule.active_sets.iter().map(Vec::len).collect(),
        doc_topics,
    };
    Ok((steps, truth))
}

/// Generates the stream and encodes each step with its own pruned vocabulary.
pub fn generate_synthetic_stream(
    schedule: &SyntheticSchedule,
    dists: &[Vec<f64>],
    prune: PruneConfig,
) -> Result<(Vec<StreamBatch>, GroundTruth)> {
    let (steps, truth) = generate_raw(schedule, dists)?;
    let batches = steps
        .iter()
        .enumerate()
        .map(|(t, docs)| StreamBatch::build(t, docs, prune))
        .collect::<Result<Vec<_>>>()?;
    Ok((batches, truth))
}

/// Word vectors that cluster by dominant topic, standing in for pretrained
/// embeddings: `centroid[argmax_k p(w|k)] + noise`, entries of variance 1/dim
/// for both parts.
pub fn synthetic_embeddings(dists: &[Vec<f64>], dim: usize, noise: f64, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut r = rng::derived(seed, "synthetic-embeddings");
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).unwrap();
    let centroids: Vec<Vec<f64>> = dists
        .iter()
        .map(|_| (0..dim).map(|_| normal.sample(&mut r)).collect())
        .collect();
    let v = dists[0].len();
    (0..v)
        .map(|w| {
            let k = (0..dists.len())
                .max_by(|&a, &b| dists[a][w].total_cmp(&dists[b][w]).then(b.cmp(&a)))
                .unwrap();
            let vec = centroids[k]
                .iter()
                .map(|c| c + noise * normal.sample(&mut r))
                .collect();
            (synthetic_word(w), vec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_valid_tokens() {
        for i in [0, 1, 25, 26, 299, 12345] {
            let w = synthetic_word(i);
            assert!(w.len() > 2 && w.chars().all(|c| c.is_ascii_lowercase()), "{w}");
        }
        let mut all: Vec<_> = (0..2000).map(synthetic_word).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 2000);
    }

    #[test]
    fn default_schedule_k_real() {
        let s = SyntheticSchedule::default();
        let k: Vec<usize> = s.active_sets.iter().map(Vec::len).collect();
        assert_eq!(k, vec![3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 4]);
        assert!(!s.active_sets[7].contains(&1) && s.active_sets[7].contains(&3));
        assert!(s.active_sets[10].contains(&4) && !s.active_sets[9].contains(&4));
    }

    #[test]
    fn one_topic_one_step() {
        let s = SyntheticSchedule {
            active_sets: vec![vec![0]],
            docs_per_step: 20,
            doc_length: 30,
            n_topics: 1,
            ..Default::default()
        };
        let dists = block_topic_word_dists(1, 50, 0.1);
        let (batches, truth) = generate_synthetic_stream(&s, &dists, PruneConfig { min_count: 2, max_doc_frac: 1.0 }).unwrap();
        assert_eq!(batches.len(), 1);
        assert!(truth.doc_topics[0].iter().all(|&k| k == 0));
        assert!(batches[0].documents.iter().all(|d| d.label.as_deref() == Some("topic0")));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let s = SyntheticSchedule::default();
        let dists = block_topic_word_dists(5, 300, 0.1);
        let a = generate_synthetic_stream(&s, &dists, PruneConfig::default()).unwrap();
        let b = generate_synthetic_stream(&s, &dists, PruneConfig::default()).unwrap();
        assert_eq!(serde_json::to_vec(&a.0).unwrap(), serde_json::to_vec(&b.0).unwrap());
        let c = generate_synthetic_stream(&SyntheticSchedule { seed: 1, ..s }, &dists, PruneConfig::default()).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn empty_active_set_is_error() {
        let s = SyntheticSchedule {
            active_sets: vec![vec![0], vec![]],
            ..Default::default()
        };
        let dists = block_topic_word_dists(5, 300, 0.1);
        assert!(generate_raw(&s, &dists).is_err());
        let s = SyntheticSchedule { docs_per_step: 0, ..Default::default() };
        assert!(generate_raw(&s, &dists).is_err());
    }

    #[test]
    fn empirical_frequencies_converge() {
        let dists = block_topic_word_dists(5, 300, 0.1);
        for (k, dist) in dists.iter().enumerate() {
            let n = 100_000;
            let toks = sample_topic_tokens(dist, n, 42 + k as u64);
            let mut freq = vec![0.0; dist.len()];
            for t in toks {
                freq[t] += 1.0 / n as f64;
            }
            let l1: f64 = freq.iter().zip(dist).map(|(a, b)| (a - b).abs()).sum();
            assert!(l1 < 0.05, "topic {k}: L1 {l1}");
        }
    }

    #[test]
    fn block_dists_are_simplex_rows() {
        let d = block_topic_word_dists(5, 300, 0.1);
        assert!(check_dists(&d).is_ok());
        let e = synthetic_embeddings(&d, 8, 0.5, 3);
        assert_eq!(e.len(), 300);
        assert!(e.iter().all(|(_, v)| v.len() == 8));
    }
}
