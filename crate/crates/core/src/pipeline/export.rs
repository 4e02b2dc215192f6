use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::evaluate::LoadedRun;
use crate::error::{Error, Result};
use crate::eval::{
    pca_project, top_tokens, topic_frequency_series, topic_term_count_matrix, write_count_matrix_csv,
    write_frequency_csv, write_pca_csv, TC_TOP_N,
};
use crate::sbetm::{load_checkpoint, topic_word_matrix};
use crate::trace::TopicRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportTarget {
    Topics,
    Pca,
    Frequency,
    TopicCategory,
}

impl ExportTarget {
    pub const ALL: [ExportTarget; 4] = [Self::Topics, Self::Pca, Self::Frequency, Self::TopicCategory];

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Topics => "topics.json",
            Self::Pca => "pca.csv",
            Self::Frequency => "frequency.csv",
            Self::TopicCategory => "topic_category.csv",
        }
    }
}

impl std::str::FromStr for ExportTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topics" => Ok(Self::Topics),
            "pca" => Ok(Self::Pca),
            "frequency" => Ok(Self::Frequency),
            "topic_category" | "topic-category" => Ok(Self::TopicCategory),
            _ => Err(Error::Config(format!("unknown export target `{s}`"))),
        }
    }
}

fn doc_argmax(run: &LoadedRun) -> Result<Vec<Vec<usize>>> {
    run.manifest
        .steps
        .iter()
        .map(|s| crate::io::read_json(&run.dir.join(&s.doc_argmax)))
        .collect()
}

/// Writes one export artifact into `out_dir` and returns its path.
pub fn export(run: &LoadedRun, target: ExportTarget, out_dir: &Path) -> Result<PathBuf> {
    let registry = TopicRegistry::load(&run.dir.join(&run.manifest.registry))?;
    let path = out_dir.join(target.file_name());
    match target {
        ExportTarget::Topics => {
            let mut steps = Vec::new();
            for s in &run.manifest.steps {
                let ck = load_checkpoint(&run.dir.join(&s.checkpoint))?;
                let beta = topic_word_matrix(&ck.params.rho, &ck.params.alpha);
                let n = TC_TOP_N.min(ck.vocab.len());
                let topics = s
                    .active
                    .iter()
                    .map(|&k| {
                        Ok(json!({
                            "global": registry.global_id(s.t, k),
                            "local": k,
                            "words": top_tokens(&beta, &ck.vocab, k, n)?,
                        }))
                    })
                    .collect::<Result<Vec<_>>>()?;
                steps.push(json!({"t": s.t, "topics": topics}));
            }
            crate::io::write_json(&path, &json!({"k_init": run.manifest.k_init, "steps": steps}))?;
        }
        ExportTarget::Pca => {
            let mut rows: Vec<Vec<f64>> = Vec::new();
            let mut labels = Vec::new();
            for s in &run.manifest.steps {
                let ck = load_checkpoint(&run.dir.join(&s.checkpoint))?;
                for &k in &s.active {
                    let gid = registry
                        .global_id(s.t, k)
                        .ok_or_else(|| Error::Input(format!("topic {k} at step {} is not traced", s.t)))?;
                    rows.push(ck.params.alpha.row(k).to_vec());
                    labels.push((gid, s.t));
                }
            }
            let l = rows.first().map_or(0, Vec::len);
            let points = Array2::from_shape_vec((rows.len(), l), rows.concat())
                .map_err(|e| Error::Input(e.to_string()))?;
            let proj = pca_project(&points, 2)?;
            write_pca_csv(&path, &labels, &proj.coords)?;
        }
        ExportTarget::Frequency => {
            let table = topic_frequency_series(&registry, &doc_argmax(run)?)?;
            write_frequency_csv(&path, &table)?;
        }
        ExportTarget::TopicCategory => {
            let mut labels = Vec::new();
            let mut ids = Vec::new();
            for ((s, batch), argmax) in run.manifest.steps.iter().zip(&run.batches).zip(doc_argmax(run)?) {
                for (doc, k) in batch.documents.iter().zip(argmax) {
                    if let Some(g) = registry.global_id(s.t, k) {
                        labels.push(doc.label.clone());
                        ids.push(g);
                    }
                }
            }
            let m = topic_term_count_matrix(&labels, &ids)?;
            write_count_matrix_csv(&path, &m)?;
        }
    }
    Ok(path)
}
