use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::TopicAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTopic {
    pub id: usize,
    pub birth: usize,
    /// Documents whose argmax topic maps to this id, one entry per timestep.
    pub freq_series: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryStep {
    pub t: usize,
    /// Local topic index → global id, for the topics traced at this step.
    pub local_to_global: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopicRegistry {
    pub global_topics: Vec<GlobalTopic>,
    pub steps: Vec<RegistryStep>,
}

impl TopicRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn global_id(&self, t: usize, local: usize) -> Option<usize> {
        self.steps.get(t)?.local_to_global.get(&local).copied()
    }

    /// Number of traced topics per timestep.
    pub fn k_series(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.local_to_global.len()).collect()
    }

    pub fn born_since(&self, t: usize) -> Vec<&GlobalTopic> {
        self.global_topics.iter().filter(|g| g.birth >= t).collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Folds timestep `t` into the registry. `doc_argmax_counts[k]` is the number of
/// documents whose argmax topic is local topic `k`.
pub fn update_registry(reg: &mut TopicRegistry, assignment: &TopicAssignment, t: usize, doc_argmax_counts: &[u64]) -> Result<()> {
    if t != reg.steps.len() || assignment.t != t {
        return Err(Error::Input(format!(
            "registry holds {} steps, cannot add timestep {t} (assignment for {})",
            reg.steps.len(),
            assignment.t
        )));
    }
    if t == 0 && !assignment.matches.is_empty() {
        return Err(Error::Input("the first timestep cannot match earlier topics".into()));
    }
    let mut local_to_global = BTreeMap::new();
    for m in &assignment.matches {
        let gid = reg
            .global_id(t - 1, m.dst)
            .ok_or_else(|| Error::Input(format!("timestep {} has no traced local topic {}", t - 1, m.dst)))?;
        if local_to_global.insert(m.src, gid).is_some() {
            return Err(Error::Input(format!("local topic {} classified twice", m.src)));
        }
    }
    for &s in &assignment.new_topics {
        let gid = reg.global_topics.len();
        reg.global_topics.push(GlobalTopic {
            id: gid,
            birth: t,
            freq_series: vec![0; t],
        });
        if local_to_global.insert(s, gid).is_some() {
            return Err(Error::Input(format!("local topic {s} classified twice")));
        }
    }
    for g in &mut reg.global_topics {
        g.freq_series.push(0);
    }
    for (&local, &gid) in &local_to_global {
        let c = doc_argmax_counts
            .get(local)
            .ok_or_else(|| Error::Input(format!("no document count for local topic {local}")))?;
        reg.global_topics[gid].freq_series[t] += c;
    }
    reg.steps.push(RegistryStep { t, local_to_global });
    Ok(())
}
