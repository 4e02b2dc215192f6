use std::path::Path;

use streamtm::corpus::synthetic::SyntheticSchedule;
use streamtm::corpus::StreamBatch;
use streamtm::eval::CoherenceMode;
use streamtm::pipeline::{
    evaluate_runs, export, run, simulate, ExportTarget, LoadedRun, MergeStrategy, RunConfig, RunManifest, RunOptions,
    StreamSource,
};
use streamtm::trace::TopicAssignment;
use streamtm::Error;
use tempfile::TempDir;

fn small_schedule(active_sets: Vec<Vec<usize>>) -> SyntheticSchedule {
    SyntheticSchedule {
        active_sets,
        docs_per_step: 60,
        doc_length: 40,
        vocab_size: 80,
        embedding_dim: 16,
        ..SyntheticSchedule::default()
    }
}

fn small_config(stream: StreamSource, out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        stream,
        k_init: 6,
        out: out.to_owned(),
        seed: 3,
        ..RunConfig::default()
    };
    cfg.model.embed_dim = 16;
    cfg.model.hidden_dim = 32;
    cfg.train.epochs = 25;
    cfg
}

fn synthetic(sets: Vec<Vec<usize>>) -> StreamSource {
    StreamSource::Synthetic {
        schedule: small_schedule(sets),
    }
}

fn four_steps() -> StreamSource {
    synthetic(vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 2, 3], vec![0, 2, 3, 4]])
}

#[test]
fn single_timestep_registers_every_active_topic() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(synthetic(vec![vec![0, 1, 2]]), dir.path());
    let m = run(&cfg, RunOptions::default()).unwrap();
    assert!(m.complete);
    assert_eq!(m.steps.len(), 1);
    let step = &m.steps[0];
    assert!(step.transported.is_none());
    let reg = streamtm::trace::TopicRegistry::load(&dir.path().join(&m.registry)).unwrap();
    assert_eq!(reg.global_topics.len(), step.k_pred);
    assert!(reg.global_topics.iter().all(|g| g.birth == 0));
    let asg: TopicAssignment = streamtm::io::read_json(&dir.path().join(&step.assignment)).unwrap();
    assert!(asg.matches.is_empty());
    assert_eq!(asg.new_topics, step.active);
}

#[test]
fn duplicated_batch_matches_every_topic() {
    let dir = TempDir::new().unwrap();
    let stream = dir.path().join("stream");
    simulate(&small_schedule(vec![vec![0, 1, 2]]), Default::default(), 0.5, &stream).unwrap();
    let mut b = StreamBatch::load(&stream.join("batch_000.json")).unwrap();
    b.t = 1;
    for d in &mut b.documents {
        d.timestep = 1;
    }
    b.save(&stream.join("batch_001.json")).unwrap();
    for seed in 0..4 {
        let mut cfg = small_config(StreamSource::Dir { path: stream.clone() }, &dir.path().join(format!("run{seed}")));
        // the claim is about a converged model; a short schedule still grows new topics
        cfg.train.epochs = 200;
        cfg.seed = seed;
        let m = run(&cfg, RunOptions::default()).unwrap();
        let asg: TopicAssignment = streamtm::io::read_json(&cfg.out.join(&m.steps[1].assignment)).unwrap();
        assert!(asg.new_topics.is_empty(), "seed {seed}: new topics on a repeated batch: {:?}", asg.new_topics);
        assert_eq!(asg.matches.len(), m.steps[1].k_pred);
        let reg = streamtm::trace::TopicRegistry::load(&cfg.out.join(&m.registry)).unwrap();
        assert!(reg.born_since(1).is_empty());
    }
}

#[test]
fn identical_configs_give_identical_hashes() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ma = run(&small_config(four_steps(), a.path()), RunOptions::default()).unwrap();
    let mb = run(&small_config(four_steps(), b.path()), RunOptions::default()).unwrap();
    assert_eq!(ma.hashes, mb.hashes);
    assert_eq!(ma, mb);
}

#[test]
fn resumed_run_equals_uninterrupted_run() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let full = run(&small_config(four_steps(), a.path()), RunOptions::default()).unwrap();
    let cfg = small_config(four_steps(), b.path());
    let partial = run(&cfg, RunOptions { stop_after: Some(1) }).unwrap();
    assert!(!partial.complete);
    assert_eq!(partial.steps.len(), 2);
    let first_ck = std::fs::metadata(b.path().join(&partial.steps[0].checkpoint)).unwrap().modified().unwrap();
    let resumed = run(&cfg, RunOptions::default()).unwrap();
    assert_eq!(resumed, full);
    // earlier steps are not recomputed
    let again = std::fs::metadata(b.path().join(&partial.steps[0].checkpoint)).unwrap().modified().unwrap();
    assert_eq!(first_ck, again);
}

#[test]
fn changed_config_refuses_to_resume() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(four_steps(), dir.path());
    run(&cfg, RunOptions { stop_after: Some(0) }).unwrap();
    let other = RunConfig { seed: 4, ..cfg };
    let err = run(&other, RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn tampered_artifact_blocks_resume() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(four_steps(), dir.path());
    let m = run(&cfg, RunOptions { stop_after: Some(0) }).unwrap();
    std::fs::write(dir.path().join(&m.steps[0].topics), "{}").unwrap();
    assert!(run(&cfg, RunOptions::default()).is_err());
}

#[test]
fn merge_strategies_share_the_first_step() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cot = run(&small_config(four_steps(), a.path()), RunOptions::default()).unwrap();
    let dot_cfg = RunConfig {
        merge: MergeStrategy::Dot,
        ..small_config(four_steps(), b.path())
    };
    let dot = run(&dot_cfg, RunOptions::default()).unwrap();
    assert_ne!(cot.config_hash, dot.config_hash);
    for (k, h) in &cot.hashes {
        if k.starts_with("stream/") || k.starts_with("t000/") {
            assert_eq!(dot.hashes.get(k), Some(h), "{k}");
        }
    }
    assert!(cot.steps[1..].iter().all(|s| s.transported.is_some()));
    assert!(dot.steps.iter().all(|s| s.transported.is_none()));
}

#[test]
fn eval_is_idempotent_and_reports_nulls_for_one_run() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(four_steps(), dir.path());
    run(&cfg, RunOptions::default()).unwrap();
    let dirs = vec![dir.path().to_owned()];
    let r1 = evaluate_runs(&dirs, None, CoherenceMode::Npmi).unwrap();
    let r2 = evaluate_runs(&dirs, None, CoherenceMode::Npmi).unwrap();
    assert_eq!(serde_json::to_vec(&r1).unwrap(), serde_json::to_vec(&r2).unwrap());
    assert_eq!(r1.k_real_series, Some(vec![3, 3, 3, 4]));
    assert_eq!(r1.runs[0].k_pred_series.len(), 4);
    assert!(r1.delta.is_none() && r1.p.is_none());
    let run0 = &r1.runs[0];
    assert!((0.0..=1.0).contains(&run0.td));
    assert!((-1.0..=1.0).contains(&run0.tc));
}

#[test]
fn eval_rejects_incomplete_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(four_steps(), dir.path());
    run(&cfg, RunOptions { stop_after: Some(0) }).unwrap();
    assert!(LoadedRun::open(dir.path()).is_err());
}

#[test]
fn exports_cover_every_target() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(four_steps(), dir.path());
    let m = run(&cfg, RunOptions::default()).unwrap();
    let loaded = LoadedRun::open(dir.path()).unwrap();
    let out = dir.path().join("export");

    let topics = export(&loaded, ExportTarget::Topics, &out).unwrap();
    let v: serde_json::Value = streamtm::io::read_json(&topics).unwrap();
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 4);
    for (s, rec) in steps.iter().zip(&m.steps) {
        let ts = s["topics"].as_array().unwrap();
        assert_eq!(ts.len(), rec.k_pred);
        assert!(ts.iter().all(|t| t["words"].as_array().unwrap().len() == 10));
    }

    let freq = export(&loaded, ExportTarget::Frequency, &out).unwrap();
    let text = std::fs::read_to_string(freq).unwrap();
    let mut sums = [0.0f64; 4];
    for line in text.lines().skip(1) {
        for (t, x) in line.split(',').skip(1).enumerate() {
            sums[t] += x.parse::<f64>().unwrap();
        }
    }
    assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-9), "{sums:?}");

    let pca = export(&loaded, ExportTarget::Pca, &out).unwrap();
    let rows = std::fs::read_to_string(pca).unwrap().lines().count() - 1;
    assert_eq!(rows, m.k_pred_series().iter().sum::<usize>());

    let matrix = export(&loaded, ExportTarget::TopicCategory, &out).unwrap();
    let text = std::fs::read_to_string(matrix).unwrap();
    assert!(text.starts_with("topic,topic0,topic1,topic2,topic3,topic4"), "{text}");
}

#[test]
fn missing_stream_directory_is_missing_input() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(
        StreamSource::Dir {
            path: dir.path().join("nope"),
        },
        &dir.path().join("run"),
    );
    let err = run(&cfg, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(matches!(RunManifest::load(&dir.path().join("run")), Err(Error::Missing(_))));
}

#[test]
fn category_matrix_needs_labels() {
    let dir = TempDir::new().unwrap();
    let stream = dir.path().join("stream");
    simulate(&small_schedule(vec![vec![0, 1], vec![0, 1]]), Default::default(), 0.5, &stream).unwrap();
    for t in 0..2 {
        let p = stream.join(format!("batch_{t:03}.json"));
        let mut b = StreamBatch::load(&p).unwrap();
        b.documents.iter_mut().for_each(|d| d.label = None);
        b.save(&p).unwrap();
    }
    let cfg = small_config(StreamSource::Dir { path: stream }, &dir.path().join("run"));
    run(&cfg, RunOptions::default()).unwrap();
    let loaded = LoadedRun::open(&cfg.out).unwrap();
    let err = export(&loaded, ExportTarget::TopicCategory, &cfg.out).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
