use std::path::{Path, PathBuf};

use super::run::{doc_token_sets, RunManifest};
use super::simulate::{load_ground_truth, load_stream_dir, GROUND_TRUTH_FILE};
use crate::corpus::StreamBatch;
use crate::error::{Error, Result};
use crate::eval::{
    harmonic_mean, mean_usize, top_tokens, topic_coherence, topic_diversity, CoherenceMode, MetricReport, RefCorpus,
    RunMetrics, TC_TOP_N, TD_TOP_N,
};
use crate::sbetm::{load_checkpoint, topic_word_matrix};

/// A completed run, loaded for evaluation or export.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub batches: Vec<StreamBatch>,
}

impl LoadedRun {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(dir)?;
        if !manifest.complete {
            return Err(Error::Input(format!(
                "run in {} is incomplete ({} of {} steps)",
                dir.display(),
                manifest.steps.len(),
                manifest.n_steps
            )));
        }
        let batches = load_stream_dir(&manifest.stream_path(dir))?;
        if batches.len() != manifest.n_steps {
            return Err(Error::Input("stream length differs from the run".into()));
        }
        Ok(Self {
            dir: dir.to_owned(),
            manifest,
            batches,
        })
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.manifest.stream_path(&self.dir).join(GROUND_TRUTH_FILE)
    }
}

/// TC and TD are averaged over timesteps; each step is scored on its own
/// documents and only its active topics.
pub fn evaluate_run(run: &LoadedRun, mode: CoherenceMode) -> Result<RunMetrics> {
    let mut tcs = Vec::new();
    let mut tds = Vec::new();
    for (step, batch) in run.manifest.steps.iter().zip(&run.batches) {
        let ck = load_checkpoint(&run.dir.join(&step.checkpoint))?;
        let beta = topic_word_matrix(&ck.params.rho, &ck.params.alpha);
        let v = ck.vocab.len();
        let words = |n: usize| -> Result<Vec<Vec<String>>> {
            step.active.iter().map(|&k| top_tokens(&beta, &ck.vocab, k, n.min(v))).collect()
        };
        let refs = RefCorpus::new(doc_token_sets(batch));
        tcs.push(topic_coherence(&words(TC_TOP_N)?, &refs, mode)?);
        tds.push(topic_diversity(&words(TD_TOP_N)?)?);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (tc, td) = (mean(&tcs), mean(&tds));
    let k_pred_series = run.manifest.k_pred_series();
    Ok(RunMetrics {
        k_init: run.manifest.k_init,
        tc,
        td,
        h: harmonic_mean(tc, td).ok(),
        k_pred_mean: mean_usize(&k_pred_series),
        k_pred_series,
    })
}

/// Scores several runs of the same stream. `ground_truth` defaults to the file
/// next to the first run's stream.
pub fn evaluate_runs(dirs: &[PathBuf], ground_truth: Option<&Path>, mode: CoherenceMode) -> Result<MetricReport> {
    if dirs.is_empty() {
        return Err(Error::Config("no run directories given".into()));
    }
    let mut runs = Vec::new();
    let mut default_truth = None;
    for d in dirs {
        let run = LoadedRun::open(d)?;
        if default_truth.is_none() {
            default_truth = Some(run.ground_truth_path());
        }
        runs.push(evaluate_run(&run, mode)?);
    }
    let k_real = match ground_truth {
        Some(p) => Some(load_ground_truth(p)?.k_real),
        None => match default_truth.filter(|p| p.is_file()) {
            Some(p) => Some(load_ground_truth(&p)?.k_real),
            None => None,
        },
    };
    Ok(MetricReport::assemble(runs, k_real))
}
