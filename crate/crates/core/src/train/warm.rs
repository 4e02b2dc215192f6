use std::collections::HashMap;

use ndarray::{s, Array2};

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sbetm::{BatchNorm, Linear, ModelConfig, ModelParams};

/// Added to the `a`-head bias of sticks introduced by a larger truncation.
pub const NEW_STICK_BIAS_SHIFT: f64 = 0.5;

fn copy_overlap(dst: &mut Array2<f64>, src: &Array2<f64>) {
    let r = dst.nrows().min(src.nrows());
    let c = dst.ncols().min(src.ncols());
    dst.slice_mut(s![..r, ..c]).assign(&src.slice(s![..r, ..c]));
}

fn copy_overlap1(dst: &mut ndarray::Array1<f64>, src: &ndarray::Array1<f64>) {
    let n = dst.len().min(src.len());
    dst.slice_mut(s![..n]).assign(&src.slice(s![..n]));
}

fn copy_linear(dst: &mut Linear, src: &Linear) {
    copy_overlap(&mut dst.w, &src.w);
    copy_overlap1(&mut dst.b, &src.b);
}

fn copy_bn(dst: &mut BatchNorm, src: &BatchNorm) {
    copy_overlap1(&mut dst.gamma, &src.gamma);
    copy_overlap1(&mut dst.beta, &src.beta);
    copy_overlap1(&mut dst.running_mean, &src.running_mean);
    copy_overlap1(&mut dst.running_var, &src.running_var);
}

/// Initializes a model for a new timestep from the previous one.
///
/// Every tensor starts Glorot-initialized; overlapping entries are then copied.
/// Vocabulary-indexed tensors (`ρ` rows, encoder input columns) are matched by
/// token string; `ρ` rows of unseen tokens come from `table`.
pub fn warm_start(
    prev: &ModelParams,
    prev_vocab: &[String],
    new_vocab: &[String],
    new_config: ModelConfig,
    table: &EmbeddingTable,
    rng: &mut Rng,
) -> Result<ModelParams> {
    let l = prev.config.embed_dim;
    if new_config.embed_dim != l || table.dim() != l {
        return Err(Error::Config(format!(
            "embedding dimension changed: previous {l}, new {}, table {}",
            new_config.embed_dim,
            table.dim()
        )));
    }
    if new_config.vocab_size != new_vocab.len() || prev_vocab.len() != prev.config.vocab_size {
        return Err(Error::Config("vocabulary lists do not match the configured sizes".into()));
    }
    let prev_index: HashMap<&str, usize> = prev_vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut rho = table.matrix_for(new_vocab).matrix;
    for (i, tok) in new_vocab.iter().enumerate() {
        if let Some(&j) = prev_index.get(tok.as_str()) {
            rho.row_mut(i).assign(&prev.rho.row(j));
        }
    }
    let mut next = ModelParams::init(new_config, rho, rng)?;

    copy_overlap(&mut next.alpha, &prev.alpha);

    let (ne, pe) = (&mut next.encoder, &prev.encoder);
    let h = ne.input.w.nrows().min(pe.input.w.nrows());
    for (i, tok) in new_vocab.iter().enumerate() {
        if let Some(&j) = prev_index.get(tok.as_str()) {
            ne.input.w.slice_mut(s![..h, i]).assign(&pe.input.w.slice(s![..h, j]));
        }
    }
    copy_overlap1(&mut ne.input.b, &pe.input.b);
    for (nb, pb) in ne.blocks.iter_mut().zip(&pe.blocks) {
        copy_linear(&mut nb.lin, &pb.lin);
        copy_bn(&mut nb.bn, &pb.bn);
    }
    copy_linear(&mut ne.mu, &pe.mu);
    copy_linear(&mut ne.logvar, &pe.logvar);
    if let (Some(n), Some(p)) = (ne.mu_bn.as_mut(), pe.mu_bn.as_ref()) {
        copy_bn(n, p);
    }
    if let (Some(n), Some(p)) = (ne.logvar_bn.as_mut(), pe.logvar_bn.as_ref()) {
        copy_bn(n, p);
    }

    copy_linear(&mut next.sticks.a, &prev.sticks.a);
    copy_linear(&mut next.sticks.b, &prev.sticks.b);
    let old_sticks = prev.config.n_sticks();
    for j in old_sticks..next.config.n_sticks() {
        next.sticks.a.b[j] += NEW_STICK_BIAS_SHIFT;
    }
    Ok(next)
}
