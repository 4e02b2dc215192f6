use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TopicRegistry;

/// Per-timestep document shares of each global topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub ids: Vec<usize>,
    /// `ids.len() × T`
    pub shares: Array2<f64>,
}

/// `doc_argmax[t][d]` is the local argmax topic of document `d` at step `t`.
/// Documents whose topic is not traced at `t` are left out of that step.
pub fn topic_frequency_series(reg: &TopicRegistry, doc_argmax: &[Vec<usize>]) -> Result<FrequencyTable> {
    if doc_argmax.len() != reg.n_steps() {
        return Err(Error::Input(format!(
            "{} argmax lists for a registry of {} steps",
            doc_argmax.len(),
            reg.n_steps()
        )));
    }
    let ids: Vec<usize> = reg.global_topics.iter().map(|g| g.id).collect();
    let mut shares = Array2::zeros((ids.len(), doc_argmax.len()));
    for (t, docs) in doc_argmax.iter().enumerate() {
        let mut total = 0usize;
        for &k in docs {
            if let Some(gid) = reg.global_id(t, k) {
                shares[[gid, t]] += 1.0;
                total += 1;
            }
        }
        if total > 0 {
            shares.column_mut(t).mapv_inplace(|c| c / total as f64);
        }
    }
    Ok(FrequencyTable { ids, shares })
}

pub fn write_frequency_csv(path: &Path, table: &FrequencyTable) -> Result<()> {
    let mut out = String::from("id");
    for t in 0..table.shares.ncols() {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for (row, id) in table.ids.iter().enumerate() {
        out.push_str(&id.to_string());
        for v in table.shares.row(row) {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}

/// Topic × category document counts with each category column scaled to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub topics: Vec<usize>,
    pub categories: Vec<String>,
    pub raw: Array2<f64>,
    pub scaled: Array2<f64>,
}

pub fn topic_term_count_matrix(labels: &[Option<String>], topic_ids: &[usize]) -> Result<CountMatrix> {
    if labels.len() != topic_ids.len() {
        return Err(Error::Input("labels and topic ids differ in length".into()));
    }
    if labels.is_empty() || labels.iter().any(Option::is_none) {
        return Err(Error::Input("topic-category matrix needs a fully labeled corpus".into()));
    }
    let cats: BTreeMap<&str, usize> = labels
        .iter()
        .map(|l| l.as_deref().unwrap())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let topics: Vec<usize> = topic_ids.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut raw = Array2::zeros((topics.len(), cats.len()));
    for (l, &k) in labels.iter().zip(topic_ids) {
        let row = topics.binary_search(&k).unwrap();
        raw[[row, cats[l.as_deref().unwrap()]]] += 1.0;
    }
    let mut scaled = raw.clone();
    for mut col in scaled.columns_mut() {
        let s = col.sum();
        col.mapv_inplace(|c| c / s);
    }
    Ok(CountMatrix {
        topics,
        categories: cats.keys().map(|c| c.to_string()).collect(),
        raw,
        scaled,
    })
}

pub fn write_count_matrix_csv(path: &Path, m: &CountMatrix) -> Result<()> {
    let mut out = String::from("topic");
    for c in &m.categories {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (row, id) in m.topics.iter().enumerate() {
        out.push_str(&id.to_string());
        for v in m.scaled.row(row) {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}
