use std::path::{Path, PathBuf};

use crate::corpus::synthetic::{block_topic_word_dists, generate_synthetic_stream, synthetic_embeddings, GroundTruth, SyntheticSchedule};
use crate::corpus::{write_embeddings, PruneConfig, StreamBatch};
use crate::error::{Error, Result};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const SCHEDULE_FILE: &str = "schedule.json";

pub fn batch_file(t: usize) -> String {
    format!("batch_{t:03}.json")
}

/// Writes a synthetic stream directory and returns the files written, relative
/// to `dir`, in a fixed order.
pub fn simulate(schedule: &SyntheticSchedule, prune: PruneConfig, embedding_noise: f64, dir: &Path) -> Result<Vec<String>> {
    schedule.validate()?;
    if schedule.vocab_size < schedule.n_topics {
        return Err(Error::Config("vocab_size must be at least n_topics".into()));
    }
    let dists = block_topic_word_dists(schedule.n_topics, schedule.vocab_size, schedule.background_mass);
    let (batches, truth) = generate_synthetic_stream(schedule, &dists, prune)?;
    let mut files = Vec::new();
    for b in &batches {
        let name = batch_file(b.t);
        b.save(&dir.join(&name))?;
        files.push(name);
    }
    crate::io::write_json(&dir.join(GROUND_TRUTH_FILE), &truth)?;
    files.push(GROUND_TRUTH_FILE.into());
    let vectors = synthetic_embeddings(&dists, schedule.embedding_dim, embedding_noise, schedule.seed);
    write_embeddings(&dir.join(EMBEDDINGS_FILE), &vectors)?;
    files.push(EMBEDDINGS_FILE.into());
    crate::io::write_json(&dir.join(SCHEDULE_FILE), schedule)?;
    files.push(SCHEDULE_FILE.into());
    Ok(files)
}

/// Loads `batch_000.json`, `batch_001.json`, … until the first gap.
pub fn load_stream_dir(dir: &Path) -> Result<Vec<StreamBatch>> {
    if !dir.is_dir() {
        return Err(Error::Missing(format!("stream directory {}", dir.display())));
    }
    let mut out = Vec::new();
    loop {
        let p: PathBuf = dir.join(batch_file(out.len()));
        if !p.is_file() {
            break;
        }
        let b = StreamBatch::load(&p)?;
        if b.t != out.len() {
            return Err(Error::Input(format!("{} holds timestep {}", p.display(), b.t)));
        }
        out.push(b);
    }
    if out.is_empty() {
        return Err(Error::Missing(format!("no batch_000.json in {}", dir.display())));
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    crate::io::read_json(path)
}
