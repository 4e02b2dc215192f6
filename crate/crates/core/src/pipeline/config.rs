use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::synthetic::SyntheticSchedule;
use crate::corpus::PruneConfig;
use crate::error::{Error, Result};
use crate::gaussot::DimRule;
use crate::sbetm::{ActivityRule, ModelConfig};
use crate::trace::TraceConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeStrategy {
    #[default]
    Cot,
    Dot,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceVariant {
    #[default]
    Algorithm2,
    Epsilon,
}

impl std::str::FromStr for MergeStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cot" => Ok(Self::Cot),
            "dot" => Ok(Self::Dot),
            _ => Err(Error::Config(format!("unknown merge strategy `{s}` (expected cot or dot)"))),
        }
    }
}

impl std::str::FromStr for TraceVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm2" => Ok(Self::Algorithm2),
            "epsilon" => Ok(Self::Epsilon),
            _ => Err(Error::Config(format!("unknown trace variant `{s}` (expected algorithm2 or epsilon)"))),
        }
    }
}

/// Where the document stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSource {
    /// A directory written by `simulate` (or by hand): `batch_NNN.json` files,
    /// optional `embeddings.txt` and `ground_truth.json`.
    Dir { path: PathBuf },
    /// Generated into `<out>/stream` before the run.
    Synthetic { schedule: SyntheticSchedule },
    /// JSON-lines corpus, one batch per timestep field or fixed-size slices.
    Jsonl {
        path: PathBuf,
        #[serde(default)]
        slice_size: Option<usize>,
        #[serde(default)]
        stopwords: Option<PathBuf>,
    },
}

impl Default for StreamSource {
    fn default() -> Self {
        StreamSource::Synthetic {
            schedule: SyntheticSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stream: StreamSource,
    pub k_init: usize,
    pub merge: MergeStrategy,
    pub trace: TraceVariant,
    /// Algorithm-2 constants: threshold ε, relaxation r, ridge, solver limits.
    pub trace_config: TraceConfig,
    /// Squared-distance radius of the ε-neighbour variant.
    pub neighbor_epsilon: f64,
    pub dim_rule: DimRule,
    pub activity: ActivityRule,
    pub prune: PruneConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Word vectors (`token v1 … vL`); overrides the stream directory's file.
    pub embeddings: Option<PathBuf>,
    /// Standard deviation of the per-word noise in synthetic embeddings.
    pub synthetic_embedding_noise: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stream: StreamSource::default(),
            k_init: 15,
            merge: MergeStrategy::Cot,
            trace: TraceVariant::Algorithm2,
            trace_config: TraceConfig::default(),
            neighbor_epsilon: 0.01,
            dim_rule: DimRule::default(),
            activity: ActivityRule::default(),
            prune: PruneConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            embeddings: None,
            synthetic_embedding_noise: 0.5,
            seed: 0,
            out: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = crate::io::read_json(path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_init < 2 {
            return Err(Error::Config("k_init must be at least 2".into()));
        }
        if !(self.neighbor_epsilon >= 0.0) || !(self.synthetic_embedding_noise >= 0.0) {
            return Err(Error::Config("neighbor_epsilon and synthetic_embedding_noise must be nonnegative".into()));
        }
        self.trace_config.validate()?;
        self.train.validate()?;
        match &self.stream {
            StreamSource::Dir { path } if !path.is_dir() => {
                return Err(Error::Missing(format!("stream directory {}", path.display())))
            }
            StreamSource::Jsonl { path, .. } if !path.is_file() => {
                return Err(Error::Missing(format!("corpus {}", path.display())))
            }
            StreamSource::Synthetic { schedule } => schedule.validate()?,
            _ => {}
        }
        if let Some(p) = &self.embeddings {
            if !p.is_file() {
                return Err(Error::Missing(format!("embeddings {}", p.display())));
            }
        }
        Ok(())
    }

    /// Model configuration of a timestep with `vocab_size` words.
    pub fn model_for(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            n_topics: self.k_init,
            ..self.model.clone()
        }
    }

    /// Hash of everything that determines the run's results (the output path excluded).
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v.as_object_mut().unwrap().remove("out");
        Ok(crate::io::sha256_hex(serde_json::to_string(&v)?.as_bytes()))
    }
}
