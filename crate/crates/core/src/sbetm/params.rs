use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense affine layer, `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_out, n_in)),
            b: Array1::zeros(n_out),
        }
    }

    pub fn xavier(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        Self {
            w: xavier_uniform(n_out, n_in, rng),
            b: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }
}

/// Glorot-uniform `rows × cols` matrix, fan-in `cols`, fan-out `rows`.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
            running_mean: Array1::zeros(n),
            running_var: Array1::ones(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub lin: Linear,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub input: Linear,
    pub blocks: Vec<ResBlock>,
    pub mu: Linear,
    pub logvar: Linear,
    pub mu_bn: Option<BatchNorm>,
    pub logvar_bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickHeads {
    pub a: Linear,
    pub b: Linear,
}

/// All model tensors. The same layout doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Word embeddings, `V × L`, never trained.
    pub rho: Array2<f64>,
    /// Topic embeddings, `K × L`.
    pub alpha: Array2<f64>,
    pub encoder: Encoder,
    pub sticks: StickHeads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRole {
    Trainable,
    Fixed,
    Buffer,
}

pub struct TensorRef<'a> {
    pub name: String,
    pub role: TensorRole,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub role: TensorRole,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

macro_rules! push_ref {
    ($out:expr, $name:expr, $role:expr, $arr:expr) => {
        $out.push(TensorRef {
            name: $name,
            role: $role,
            shape: $arr.shape().to_vec(),
            data: $arr.as_slice().expect("standard layout"),
        })
    };
}

macro_rules! push_mut {
    ($out:expr, $name:expr, $role:expr, $arr:expr) => {
        $out.push(TensorMut {
            name: $name,
            role: $role,
            shape: $arr.shape().to_vec(),
            data: $arr.as_slice_mut().expect("standard layout"),
        })
    };
}

impl Linear {
    fn refs<'a>(&'a self, p: &str, out: &mut Vec<TensorRef<'a>>) {
        push_ref!(out, format!("{p}.w"), TensorRole::Trainable, self.w);
        push_ref!(out, format!("{p}.b"), TensorRole::Trainable, self.b);
    }

    fn muts<'a>(&'a mut self, p: &str, out: &mut Vec<TensorMut<'a>>) {
        push_mut!(out, format!("{p}.w"), TensorRole::Trainable, self.w);
        push_mut!(out, format!("{p}.b"), TensorRole::Trainable, self.b);
    }
}

impl BatchNorm {
    fn refs<'a>(&'a self, p: &str, out: &mut Vec<TensorRef<'a>>) {
        push_ref!(out, format!("{p}.gamma"), TensorRole::Trainable, self.gamma);
        push_ref!(out, format!("{p}.beta"), TensorRole::Trainable, self.beta);
        push_ref!(out, format!("{p}.running_mean"), TensorRole::Buffer, self.running_mean);
        push_ref!(out, format!("{p}.running_var"), TensorRole::Buffer, self.running_var);
    }

    fn muts<'a>(&'a mut self, p: &str, out: &mut Vec<TensorMut<'a>>) {
        push_mut!(out, format!("{p}.gamma"), TensorRole::Trainable, self.gamma);
        push_mut!(out, format!("{p}.beta"), TensorRole::Trainable, self.beta);
        push_mut!(out, format!("{p}.running_mean"), TensorRole::Buffer, self.running_mean);
        push_mut!(out, format!("{p}.running_var"), TensorRole::Buffer, self.running_var);
    }
}

impl ModelParams {
    /// Fresh parameters. `rho` must be `V × L` for the configured sizes.
    pub fn init(config: ModelConfig, rho: Array2<f64>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (v, l, h, k) = (config.vocab_size, config.embed_dim, config.hidden_dim, config.n_topics);
        if rho.dim() != (v, l) {
            return Err(Error::Config(format!(
                "rho is {:?}, expected ({v}, {l})",
                rho.dim()
            )));
        }
        let encoder = Encoder {
            input: Linear::xavier(v, h, rng),
            blocks: (0..config.n_blocks)
                .map(|_| ResBlock {
                    lin: Linear::xavier(h, h, rng),
                    bn: BatchNorm::new(h),
                })
                .collect(),
            mu: Linear::xavier(h, h, rng),
            logvar: Linear::xavier(h, h, rng),
            mu_bn: config.head_batchnorm.then(|| BatchNorm::new(h)),
            logvar_bn: config.head_batchnorm.then(|| BatchNorm::new(h)),
        };
        let sticks = StickHeads {
            a: Linear::xavier(h, k - 1, rng),
            b: Linear::xavier(h, k - 1, rng),
        };
        let alpha = xavier_uniform(k, l, rng);
        Ok(Self {
            rho: rho.as_standard_layout().into_owned(),
            alpha,
            encoder,
            sticks,
            config,
        })
    }

    /// All-zero weights with unit batch-norm scales, for deserialization.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (v, l, h, k) = (config.vocab_size, config.embed_dim, config.hidden_dim, config.n_topics);
        Ok(Self {
            rho: Array2::zeros((v, l)),
            alpha: Array2::zeros((k, l)),
            encoder: Encoder {
                input: Linear::zeros(v, h),
                blocks: (0..config.n_blocks)
                    .map(|_| ResBlock {
                        lin: Linear::zeros(h, h),
                        bn: BatchNorm::new(h),
                    })
                    .collect(),
                mu: Linear::zeros(h, h),
                logvar: Linear::zeros(h, h),
                mu_bn: config.head_batchnorm.then(|| BatchNorm::new(h)),
                logvar_bn: config.head_batchnorm.then(|| BatchNorm::new(h)),
            },
            sticks: StickHeads {
                a: Linear::zeros(h, k - 1),
                b: Linear::zeros(h, k - 1),
            },
            config,
        })
    }

    /// Same shapes, every entry zero (batch-norm buffers included).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        push_ref!(out, "rho".to_string(), TensorRole::Fixed, self.rho);
        push_ref!(out, "alpha".to_string(), TensorRole::Trainable, self.alpha);
        let e = &self.encoder;
        e.input.refs("enc.input", &mut out);
        for (i, blk) in e.blocks.iter().enumerate() {
            blk.lin.refs(&format!("enc.block{i}.lin"), &mut out);
            blk.bn.refs(&format!("enc.block{i}.bn"), &mut out);
        }
        e.mu.refs("enc.mu", &mut out);
        e.logvar.refs("enc.logvar", &mut out);
        if let Some(bn) = &e.mu_bn {
            bn.refs("enc.mu_bn", &mut out);
        }
        if let Some(bn) = &e.logvar_bn {
            bn.refs("enc.logvar_bn", &mut out);
        }
        self.sticks.a.refs("stick.a", &mut out);
        self.sticks.b.refs("stick.b", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        push_mut!(out, "rho".to_string(), TensorRole::Fixed, self.rho);
        push_mut!(out, "alpha".to_string(), TensorRole::Trainable, self.alpha);
        let e = &mut self.encoder;
        e.input.muts("enc.input", &mut out);
        for (i, blk) in e.blocks.iter_mut().enumerate() {
            blk.lin.muts(&format!("enc.block{i}.lin"), &mut out);
            blk.bn.muts(&format!("enc.block{i}.bn"), &mut out);
        }
        e.mu.muts("enc.mu", &mut out);
        e.logvar.muts("enc.logvar", &mut out);
        if let Some(bn) = &mut e.mu_bn {
            bn.muts("enc.mu_bn", &mut out);
        }
        if let Some(bn) = &mut e.logvar_bn {
            bn.muts("enc.logvar_bn", &mut out);
        }
        self.sticks.a.muts("stick.a", &mut out);
        self.sticks.b.muts("stick.b", &mut out);
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|t| t.role == TensorRole::Trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// Rounds every tensor through `f32`, the checkpoint precision.
    pub fn quantize_f32(&mut self) {
        for t in self.tensors_mut() {
            for x in t.data.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}
