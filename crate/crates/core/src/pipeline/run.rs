use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{MergeStrategy, RunConfig, StreamSource, TraceVariant};
use super::simulate::{batch_file, load_stream_dir, simulate, EMBEDDINGS_FILE};
use crate::corpus::{load_stopwords, make_stream, read_jsonl_corpus, Batching, EmbeddingTable, Identity, StreamBatch};
use crate::error::{Error, Result};
use crate::eval::{top_tokens, TC_TOP_N};
use crate::gaussot::{cot_merge, write_transported_csv};
use crate::io::{sha256_file, write_atomic, write_json};
use crate::rng;
use crate::sbetm::{
    active_topics, argmax_rows, infer_theta, load_checkpoint, save_checkpoint, topic_word_matrix, DocBatch,
    ModelParams,
};
use crate::trace::{
    dot_merge_sources, epsilon_neighbor_match, trace_step, update_registry, TopicAssignment, TopicRegistry,
};
use crate::train::{log_to_jsonl, train_timestep, warm_start};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REGISTRY_FILE: &str = "registry.json";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub checkpoint: String,
    pub assignment: String,
    pub topics: String,
    pub doc_argmax: String,
    pub train_log: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transported: Option<String>,
    /// Local indices of the active topics.
    pub active: Vec<usize>,
    pub k_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub t: usize,
    pub error: String,
    pub last_good_checkpoint: String,
}

/// Index of a run directory. Paths are relative to the directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config_hash: String,
    pub k_init: usize,
    pub merge: MergeStrategy,
    pub trace: TraceVariant,
    /// Stream directory; relative paths are resolved against the run directory first.
    pub stream_dir: String,
    pub n_steps: usize,
    pub steps: Vec<StepRecord>,
    pub registry: String,
    /// Where `eval` writes its report by default.
    pub report: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
    /// SHA-256 of every result artifact. Training logs carry wall-clock timings
    /// and are left out.
    pub hashes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        crate::io::read_json(&run_dir.join(MANIFEST_FILE))
    }

    pub fn stream_path(&self, run_dir: &Path) -> PathBuf {
        let inside = run_dir.join(&self.stream_dir);
        if inside.is_dir() {
            inside
        } else {
            PathBuf::from(&self.stream_dir)
        }
    }

    pub fn k_pred_series(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.k_pred).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after completing this timestep, leaving a resumable run.
    pub stop_after: Option<usize>,
}

struct Writer<'a> {
    dir: &'a Path,
    hashes: &'a mut BTreeMap<String, String>,
}

impl Writer<'_> {
    fn bytes(&mut self, rel: &str, bytes: &[u8], hashed: bool) -> Result<String> {
        write_atomic(&self.dir.join(rel), bytes)?;
        if hashed {
            self.hashes.insert(rel.to_owned(), crate::io::sha256_hex(bytes));
        }
        Ok(rel.to_owned())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.bytes(rel, &bytes, true)
    }

    fn file(&mut self, rel: &str) -> Result<String> {
        let h = sha256_file(&self.dir.join(rel))?;
        self.hashes.insert(rel.to_owned(), h);
        Ok(rel.to_owned())
    }
}

/// Resolves the stream, generating it into `<out>/stream` for synthetic sources.
fn prepare_stream(cfg: &RunConfig, out: &Path, hashes: &mut BTreeMap<String, String>) -> Result<(Vec<StreamBatch>, String, PathBuf)> {
    match &cfg.stream {
        StreamSource::Dir { path } => Ok((load_stream_dir(path)?, path.display().to_string(), path.clone())),
        StreamSource::Synthetic { schedule } => {
            let dir = out.join("stream");
            let files = if dir.join(batch_file(0)).is_file() {
                None
            } else {
                Some(simulate(schedule, cfg.prune, cfg.synthetic_embedding_noise, &dir)?)
            };
            let batches = load_stream_dir(&dir)?;
            let mut w = Writer { dir: out, hashes };
            let names = files.unwrap_or_else(|| {
                (0..batches.len()).map(batch_file).chain(
                    [super::simulate::GROUND_TRUTH_FILE, EMBEDDINGS_FILE, super::simulate::SCHEDULE_FILE].map(String::from),
                ).collect()
            });
            for f in names {
                w.file(&format!("stream/{f}"))?;
            }
            Ok((batches, "stream".into(), dir))
        }
        StreamSource::Jsonl { path, slice_size, stopwords } => {
            let sw = match stopwords {
                Some(p) => load_stopwords(p)?,
                None => crate::corpus::default_stopwords(),
            };
            let docs = read_jsonl_corpus(path, &sw, &Identity)?;
            let batching = slice_size.map_or(Batching::ByTimestep, Batching::Slices);
            let batches = make_stream(docs, batching, cfg.prune)?;
            let dir = out.join("stream");
            let mut w = Writer { dir: out, hashes };
            for b in &batches {
                let bytes = serde_json::to_vec(b)?;
                w.bytes(&format!("stream/{}", batch_file(b.t)), &bytes, true)?;
            }
            Ok((batches, "stream".into(), dir))
        }
    }
}

fn embedding_table(cfg: &RunConfig, stream_dir: &Path) -> Result<EmbeddingTable> {
    let dim = cfg.model.embed_dim;
    let fallback = rng::derive_seed(cfg.seed, "fallback-embeddings");
    let path = cfg.embeddings.clone().or_else(|| {
        let p = stream_dir.join(EMBEDDINGS_FILE);
        p.is_file().then_some(p)
    });
    match path {
        Some(p) => EmbeddingTable::load(&p, dim, fallback),
        None => Ok(EmbeddingTable::empty(dim, fallback)),
    }
}

fn rows(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

fn step_dir(t: usize) -> String {
    format!("t{t:03}")
}

/// Runs (or resumes) the online pipeline and returns the manifest.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let config_hash = cfg.hash()?;

    let existing = match RunManifest::load(&out) {
        Ok(m) => Some(m),
        Err(Error::Missing(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(m) = &existing {
        if m.config_hash != config_hash {
            return Err(Error::Config(format!(
                "{} holds a run with a different configuration",
                out.display()
            )));
        }
        if m.complete {
            return Ok(m.clone());
        }
        verify_hashes(&out, m)?;
    }

    let mut hashes = existing.as_ref().map(|m| m.hashes.clone()).unwrap_or_default();
    let (batches, stream_label, stream_dir) = prepare_stream(cfg, &out, &mut hashes)?;
    let table = embedding_table(cfg, &stream_dir)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;

    let mut manifest = existing.unwrap_or(RunManifest {
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_hash,
        k_init: cfg.k_init,
        merge: cfg.merge,
        trace: cfg.trace,
        stream_dir: stream_label,
        n_steps: batches.len(),
        steps: Vec::new(),
        registry: REGISTRY_FILE.into(),
        report: REPORT_FILE.into(),
        complete: false,
        failure: None,
        hashes: BTreeMap::new(),
    });
    manifest.failure = None;
    if manifest.n_steps != batches.len() {
        return Err(Error::Input("the stream changed length since the run started".into()));
    }

    let mut registry = if manifest.steps.is_empty() {
        TopicRegistry::new()
    } else {
        TopicRegistry::load(&out.join(REGISTRY_FILE))?
    };
    let mut prev: Option<(ModelParams, Vec<String>, Vec<usize>)> = match manifest.steps.last() {
        Some(s) => {
            let ck = load_checkpoint(&out.join(&s.checkpoint))?;
            Some((ck.params, ck.vocab, s.active.clone()))
        }
        None => None,
    };

    let start = manifest.steps.len();
    for (t, batch) in batches.iter().enumerate().skip(start) {
        let vocab: Vec<String> = batch.vocabulary.tokens().to_vec();
        let model_cfg = cfg.model_for(vocab.len());
        model_cfg.validate()?;
        let mut init_rng = rng::derived(cfg.seed, &format!("init/{}", step_dir(t)));
        let init = match &prev {
            None => {
                let rho = table.matrix_for(&vocab).matrix;
                ModelParams::init(model_cfg, rho, &mut init_rng)?
            }
            Some((p, pv, _)) => warm_start(p, pv, &vocab, model_cfg, &table, &mut init_rng)?,
        };
        let docs = DocBatch::new(&batch.documents, vocab.len())?;
        let train_cfg = crate::train::TrainConfig {
            seed: rng::derive_seed(cfg.seed, "train"),
            ..cfg.train.clone()
        };
        let sdir = step_dir(t);
        let mut w = Writer {
            dir: &out,
            hashes: &mut hashes,
        };
        let trained = match train_timestep(&docs, init, &train_cfg, &sdir) {
            Ok(tr) => tr,
            Err(fail) => {
                let mut last = *fail.last_good;
                last.quantize_f32();
                let rel = format!("{sdir}/checkpoint_last_good.bin");
                save_checkpoint(&out.join(&rel), &last, &vocab, &json!({"t": t, "failed": true}))?;
                w.bytes(&format!("{sdir}/train_log.jsonl"), log_to_jsonl(&fail.log)?.as_bytes(), false)?;
                manifest.failure = Some(RunFailure {
                    t,
                    error: fail.error.to_string(),
                    last_good_checkpoint: rel,
                });
                manifest.hashes = hashes;
                write_json(&out.join(MANIFEST_FILE), &manifest)?;
                return Err(fail.error);
            }
        };
        let train_log = w.bytes(&format!("{sdir}/train_log.jsonl"), log_to_jsonl(&trained.log)?.as_bytes(), false)?;
        let mut params = trained.params;
        // the merge and everything downstream see checkpoint precision
        params.quantize_f32();

        let theta = infer_theta(&params, &docs)?;
        let argmax = argmax_rows(&theta);
        let active = active_topics(&theta, cfg.activity);
        if active.is_empty() {
            return Err(Error::Numeric(format!("no active topic at timestep {t}")));
        }
        let mut transported = None;
        let assignment = match &prev {
            None => TopicAssignment::all_new(t, active.iter().copied()),
            Some((p_prev, _, prev_active)) => {
                if cfg.merge == MergeStrategy::Cot {
                    let (set, _) = cot_merge(&params.alpha, &p_prev.alpha, cfg.dim_rule, t, t - 1)?;
                    let rel = format!("{sdir}/transported.csv");
                    write_transported_csv(&out.join(&rel), &set)?;
                    transported = Some(w.file(&rel)?);
                    params.alpha = set.embeddings;
                    params.quantize_f32();
                }
                let src = rows(&params.alpha, &active);
                let dst = rows(&p_prev.alpha, prev_active);
                let local = match cfg.trace {
                    TraceVariant::Algorithm2 => trace_step(&src, &dst, t, &cfg.trace_config)?.0,
                    TraceVariant::Epsilon => epsilon_neighbor_match(&src, &dst, t, cfg.neighbor_epsilon)?,
                };
                let asg = local.reindex(&active, prev_active);
                if cfg.merge == MergeStrategy::Dot {
                    params.alpha = dot_merge_sources(&params.alpha, &p_prev.alpha, &asg)?;
                    params.quantize_f32();
                }
                asg
            }
        };
        let mut counts = vec![0u64; params.config.n_topics];
        for &k in &argmax {
            counts[k] += 1;
        }
        update_registry(&mut registry, &assignment, t, &counts)?;

        let ck_rel = format!("{sdir}/checkpoint.bin");
        let meta = json!({"t": t, "k_init": cfg.k_init, "active": active});
        save_checkpoint(&out.join(&ck_rel), &params, &vocab, &meta)?;
        let checkpoint = w.file(&ck_rel)?;
        let assignment_rel = w.json(&format!("{sdir}/assignment.json"), &assignment)?;
        let beta = topic_word_matrix(&params.rho, &params.alpha);
        let n_top = TC_TOP_N.min(vocab.len());
        let topic_list = active
            .iter()
            .map(|&k| {
                Ok(json!({
                    "local": k,
                    "global": registry.global_id(t, k),
                    "words": top_tokens(&beta, &vocab, k, n_top)?,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let topics = w.json(&format!("{sdir}/topics.json"), &json!({"t": t, "topics": topic_list}))?;
        let doc_argmax = w.json(&format!("{sdir}/doc_argmax.json"), &argmax)?;
        w.json(REGISTRY_FILE, &registry)?;

        log::info!("timestep {t}: {} active of {} topics", active.len(), cfg.k_init);
        manifest.steps.push(StepRecord {
            t,
            checkpoint,
            assignment: assignment_rel,
            topics,
            doc_argmax,
            train_log,
            transported,
            k_pred: active.len(),
            active: active.clone(),
        });
        manifest.complete = manifest.steps.len() == batches.len();
        manifest.hashes = hashes.clone();
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
        prev = Some((params, vocab, active));
        if opts.stop_after == Some(t) {
            break;
        }
    }
    Ok(manifest)
}

/// Checks that every hashed artifact of a partial run is intact.
pub fn verify_hashes(run_dir: &Path, m: &RunManifest) -> Result<()> {
    for (rel, h) in &m.hashes {
        let got = sha256_file(&run_dir.join(rel)).map_err(|_| Error::Missing(format!("artifact {rel}")))?;
        if &got != h {
            return Err(Error::Input(format!("artifact {rel} changed since it was written")));
        }
    }
    Ok(())
}

/// Token sets of a batch's documents, for coherence.
pub fn doc_token_sets(batch: &StreamBatch) -> Vec<HashSet<String>> {
    batch
        .documents
        .iter()
        .map(|d| d.counts.iter().map(|&(id, _)| batch.vocabulary.token(id).to_owned()).collect())
        .collect()
}
