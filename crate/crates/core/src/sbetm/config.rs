use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation.
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => sigmoid(x),
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Relu => (x > 0.0) as u8 as f64,
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Truncation level K.
    pub n_topics: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub activation: Activation,
    /// Batch normalization after the mean and log-variance heads.
    pub head_batchnorm: bool,
    pub prior_a: f64,
    pub prior_b: f64,
    pub w_rec: f64,
    pub w_gauss: f64,
    pub w_stick: f64,
    pub dropout: f64,
    pub taylor_terms: usize,
    pub u_clamp: f64,
    pub softplus_eps: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            n_topics: 15,
            embed_dim: 50,
            hidden_dim: 64,
            n_blocks: 2,
            activation: Activation::Softplus,
            head_batchnorm: false,
            prior_a: 0.5,
            prior_b: 0.5,
            w_rec: 1.0,
            w_gauss: 1.0,
            w_stick: 0.05,
            dropout: 0.1,
            taylor_terms: 10,
            u_clamp: 1e-6,
            softplus_eps: 1e-4,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn n_sticks(&self) -> usize {
        self.n_topics - 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive");
        }
        if self.n_topics < 2 {
            return fail("n_topics must be at least 2");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return fail("embed_dim and hidden_dim must be positive");
        }
        if !(self.prior_a > 0.0 && self.prior_b > 0.0) {
            return fail("prior shapes must be positive");
        }
        if [self.w_rec, self.w_gauss, self.w_stick].iter().any(|w| !(*w >= 0.0)) {
            return fail("loss weights must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.u_clamp > 0.0 && self.u_clamp < 0.5) {
            return fail("u_clamp must lie in (0, 0.5)");
        }
        if !(self.softplus_eps > 0.0) || !(self.bn_eps > 0.0) {
            return fail("stabilizers must be positive");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("bn_momentum must lie in [0, 1]");
        }
        Ok(())
    }
}
