use serde::{Deserialize, Serialize};

use crate::sbetm::{ModelParams, TensorRole};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments for every trainable tensor, in listing order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl OptState {
    pub fn new(params: &ModelParams) -> Self {
        let moments = params
            .tensors()
            .iter()
            .filter(|t| t.role == TensorRole::Trainable)
            .map(|t| (vec![0.0; t.data.len()], vec![0.0; t.data.len()]))
            .collect();
        Self { step: 0, moments }
    }
}

/// One bias-corrected Adam step with decoupled weight decay on trainable tensors.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptState, lr: f64, weight_decay: f64) {
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    let grads = grads.tensors();
    let trainable = params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .filter(|(p, _)| p.role == TensorRole::Trainable);
    for ((p, g), (m, v)) in trainable.zip(state.moments.iter_mut()) {
        for (((x, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
            let update = (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
            *x -= lr * weight_decay * *x;
            *x -= lr * update;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Linear warm-up from `lr_max/25` then cosine decay to `lr_max/1e4`.
    OneCycle,
    /// `lr_max · gamma^⌊step / step_size⌋`.
    Step { step_size: usize, gamma: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::OneCycle
    }
}

pub const ONE_CYCLE_START_DIV: f64 = 25.0;
pub const ONE_CYCLE_END_DIV: f64 = 1e4;

pub fn one_cycle_lr(step: usize, total_steps: usize, lr_max: f64, warmup_frac: f64) -> f64 {
    let start = lr_max / ONE_CYCLE_START_DIV;
    let end = lr_max / ONE_CYCLE_END_DIV;
    let warm = warmup_frac * total_steps as f64;
    let s = step as f64;
    if s < warm {
        return start + (lr_max - start) * s / warm;
    }
    let span = total_steps as f64 - warm;
    let progress = if span > 0.0 { ((s - warm) / span).min(1.0) } else { 1.0 };
    end + (lr_max - end) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

impl LrSchedule {
    pub fn lr(&self, step: usize, total_steps: usize, lr_max: f64, warmup_frac: f64) -> f64 {
        match *self {
            LrSchedule::OneCycle => one_cycle_lr(step, total_steps, lr_max, warmup_frac),
            LrSchedule::Step { step_size, gamma } => lr_max * gamma.powi((step / step_size.max(1)) as i32),
        }
    }
}
