use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, LrSchedule, OptState};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sbetm::{apply_bn_stats, forward_backward, Components, DocBatch, Mode, ModelParams, Noise, TensorRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_frac: f64,
    /// Monte Carlo samples per document.
    pub samples: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 0.01,
            weight_decay: 0.006,
            batch_size: 256,
            epochs: 300,
            warmup_frac: 0.1,
            samples: 1,
            schedule: LrSchedule::OneCycle,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.lr_max > 0.0) {
            return fail("lr_max must be positive");
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return fail("warmup_frac must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.samples == 0 {
            return fail("batch_size and samples must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub rec: f64,
    pub kl_g: f64,
    pub kl_s: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct Trained {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
}

/// Training aborted on a non-finite loss or gradient.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    /// Parameters after the last successful step.
    pub last_good: Box<ModelParams>,
    pub log: Vec<EpochLog>,
}

/// Gradient of the objective on one minibatch with freshly drawn noise.
pub fn gradients(params: &ModelParams, batch: &DocBatch, samples: usize, rng: &mut Rng) -> Result<(ModelParams, Components)> {
    let noise = Noise::draw(&params.config, batch.len(), samples, Mode::Train, rng);
    let mut g = params.zeros_like();
    let (c, _) = forward_backward(params, batch, &noise, Mode::Train, Some(&mut g))?;
    check_grads(&g)?;
    Ok((g, c))
}

fn check_grads(g: &ModelParams) -> Result<()> {
    for t in g.tensors() {
        if t.role == TensorRole::Trainable && t.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in {}", t.name)));
        }
    }
    Ok(())
}

/// Contiguous minibatch bounds; a trailing singleton is folded into the previous
/// batch because train-mode batch norm needs two rows.
fn minibatches(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size).map(|lo| (lo, (lo + size).min(n))).collect();
    if out.len() > 1 && out.last().map(|&(lo, hi)| hi - lo) == Some(1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().1 = last.1;
    }
    out
}

/// Runs `config.epochs` epochs of minibatch AdamW from `init`. The stream of
/// random draws depends only on `config.seed` and `label`.
pub fn train_timestep(
    batch: &DocBatch,
    init: ModelParams,
    config: &TrainConfig,
    label: &str,
) -> std::result::Result<Trained, TrainFailure> {
    train_timestep_observed(batch, init, config, label, |_, _| ControlFlow::Continue(()))
}

/// [`train_timestep`] with a hook called after every epoch. Breaking stops
/// training early; the learning-rate schedule still spans `config.epochs`.
pub fn train_timestep_observed(
    batch: &DocBatch,
    init: ModelParams,
    config: &TrainConfig,
    label: &str,
    mut on_epoch: impl FnMut(&EpochLog, &ModelParams) -> ControlFlow<()>,
) -> std::result::Result<Trained, TrainFailure> {
    let mut params = init;
    let mut log = Vec::with_capacity(config.epochs);
    let fail = |error, params: &ModelParams, log: Vec<EpochLog>| TrainFailure {
        error,
        last_good: Box::new(params.clone()),
        log,
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, &params, log));
    }
    if batch.is_empty() {
        return Err(fail(Error::Input("empty training batch".into()), &params, log));
    }
    let mut r = rng::derived(config.seed, &format!("train/{label}"));
    let bounds = minibatches(batch.len(), config.batch_size);
    let total_steps = config.epochs * bounds.len();
    let mut opt = OptState::new(&params);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut r);
        let mut acc = Components::default();
        let mut lr = 0.0;
        for &(lo, hi) in &bounds {
            let mb = batch.select(&order[lo..hi]);
            let noise = Noise::draw(&params.config, mb.len(), config.samples, Mode::Train, &mut r);
            let mut g = params.zeros_like();
            let (c, stats) = match forward_backward(&params, &mb, &noise, Mode::Train, Some(&mut g)) {
                Ok(v) => v,
                Err(e) => {
                    return Err(fail(
                        Error::Divergence {
                            epoch,
                            msg: e.to_string(),
                        },
                        &params,
                        log,
                    ))
                }
            };
            if let Err(e) = check_grads(&g) {
                return Err(fail(
                    Error::Divergence {
                        epoch,
                        msg: e.to_string(),
                    },
                    &params,
                    log,
                ));
            }
            lr = config.schedule.lr(step, total_steps, config.lr_max, config.warmup_frac);
            apply_bn_stats(&mut params, &stats);
            adam_step(&mut params, &g, &mut opt, lr, config.weight_decay);
            step += 1;
            let w = mb.len() as f64 / batch.len() as f64;
            acc.loss += w * c.loss;
            acc.rec += w * c.rec;
            acc.kl_g += w * c.kl_g;
            acc.kl_s += w * c.kl_s;
        }
        log.push(EpochLog {
            epoch,
            lr,
            loss: acc.loss,
            rec: acc.rec,
            kl_g: acc.kl_g,
            kl_s: acc.kl_s,
            seconds: start.elapsed().as_secs_f64(),
        });
        if on_epoch(log.last().unwrap(), &params).is_break() {
            break;
        }
        log::debug!(
            "{label} epoch {epoch}: loss {:.4} rec {:.4} kl_g {:.4} kl_s {:.4}",
            acc.loss,
            acc.rec,
            acc.kl_g,
            acc.kl_s
        );
    }
    Ok(Trained { params, log })
}

/// Serializes an epoch log as JSON lines.
pub fn log_to_jsonl(log: &[EpochLog]) -> Result<String> {
    let mut out = String::new();
    for e in log {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}
