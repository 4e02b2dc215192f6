//! The per-timestep stick-breaking embedded topic model.

mod checkpoint;
mod config;
mod kumaraswamy;
mod model;
mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use config::{sigmoid, softplus, Activation, ModelConfig};
pub use kumaraswamy::{
    kl_kumaraswamy_beta, kl_kumaraswamy_beta_grad, kl_sticks, kumaraswamy_cdf, kumaraswamy_mean, sample_kumaraswamy,
    sample_kumaraswamy_grad, stick_break, stick_break_backward, KumaDraw,
};
pub use model::{
    active_topics, apply_bn_stats, argmax_rows, batch_rows, elbo, encode, forward_backward, infer_theta,
    kl_gaussian_std, reconstruct_loglik, reparameterize, stick_params, topic_word_matrix, ActivityRule, BnStats,
    Components, DocBatch, Mode, Noise, Posterior, PROB_FLOOR,
};
pub use params::{
    xavier_uniform, BatchNorm, Encoder, Linear, ModelParams, ResBlock, StickHeads, TensorMut, TensorRef, TensorRole,
};
