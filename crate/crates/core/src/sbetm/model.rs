//! Batched forward pass of the objective with its hand-derived reverse pass.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{sigmoid, softplus, ModelConfig};
use super::kumaraswamy::{kl_kumaraswamy_beta_grad, sample_kumaraswamy_grad, stick_break, stick_break_backward};
use super::params::{BatchNorm, Linear, ModelParams};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Floor on mixture probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout active.
    Train,
    /// Running statistics, no dropout.
    Eval,
}

/// Dense count and frequency views of a minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct DocBatch {
    pub counts: Array2<f64>,
    pub freqs: Array2<f64>,
}

impl DocBatch {
    pub fn new<'a>(docs: impl IntoIterator<Item = &'a Document>, vocab_size: usize) -> Result<Self> {
        let docs: Vec<&Document> = docs.into_iter().collect();
        let mut counts = Array2::zeros((docs.len(), vocab_size));
        for (i, d) in docs.iter().enumerate() {
            for &(id, c) in &d.counts {
                if id >= vocab_size {
                    return Err(Error::Input(format!("document {} has token id {id} ≥ V={vocab_size}", d.id)));
                }
                counts[[i, id]] += c as f64;
            }
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: Array2<f64>) -> Result<Self> {
        let totals = counts.sum_axis(Axis(1));
        if let Some(i) = totals.iter().position(|&t| !(t > 0.0)) {
            return Err(Error::Input(format!("document {i} of the batch is empty")));
        }
        let freqs = &counts / &totals.insert_axis(Axis(1));
        Ok(Self { counts, freqs })
    }

    pub fn len(&self) -> usize {
        self.counts.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            counts: self.counts.select(Axis(0), rows),
            freqs: self.freqs.select(Axis(0), rows),
        }
    }
}

/// Random inputs of one forward pass, drawn up front so a pass can be replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    /// One `B × H` standard-normal matrix per Monte Carlo sample.
    pub eps: Vec<Array2<f64>>,
    /// One `B × (K−1)` uniform matrix per sample.
    pub u: Vec<Array2<f64>>,
    /// Inverted-dropout scale masks, one per residual block; empty disables dropout.
    pub dropout: Vec<Array2<f64>>,
}

impl Noise {
    pub fn draw(cfg: &ModelConfig, n_docs: usize, samples: usize, mode: Mode, rng: &mut Rng) -> Self {
        let (h, ks) = (cfg.hidden_dim, cfg.n_sticks());
        let mut eps = Vec::with_capacity(samples);
        let mut u = Vec::with_capacity(samples);
        for _ in 0..samples {
            eps.push(Array2::from_shape_simple_fn((n_docs, h), || rng.sample(StandardNormal)));
            u.push(Array2::from_shape_simple_fn((n_docs, ks), || rng.random::<f64>()));
        }
        let dropout = if mode == Mode::Train && cfg.dropout > 0.0 {
            let keep = 1.0 - cfg.dropout;
            (0..cfg.n_blocks)
                .map(|_| {
                    Array2::from_shape_simple_fn((n_docs, h), || {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        Self { eps, u, dropout }
    }

    pub fn samples(&self) -> usize {
        self.eps.len()
    }
}

/// Per-document averages of the three objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub loss: f64,
    pub rec: f64,
    pub kl_g: f64,
    pub kl_s: f64,
}

/// Batch mean and unbiased variance seen by each batch-norm layer in train mode.
pub type BnStats = Vec<(Array1<f64>, Array1<f64>)>;

fn linear_fwd(l: &Linear, x: &Array2<f64>) -> Array2<f64> {
    x.dot(&l.w.t()) + &l.b
}

fn linear_bwd(l: &Linear, x: &Array2<f64>, gy: &Array2<f64>, gl: Option<&mut Linear>) -> Array2<f64> {
    if let Some(gl) = gl {
        gl.w += &gy.t().dot(x);
        gl.b += &gy.sum_axis(Axis(0));
    }
    gy.dot(&l.w)
}

struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn bn_fwd(bn: &BatchNorm, x: &Array2<f64>, mode: Mode, eps: f64, stats: &mut BnStats) -> (Array2<f64>, BnCache) {
    let (mean, var) = match mode {
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
        Mode::Train => {
            let n = x.nrows() as f64;
            let mean = x.mean_axis(Axis(0)).unwrap();
            let var = (x - &mean).mapv(|v| v * v).sum_axis(Axis(0)) / n;
            let unbiased = if n > 1.0 { &var * (n / (n - 1.0)) } else { var.clone() };
            stats.push((mean.clone(), unbiased));
            (mean, var)
        }
    };
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let xhat = (x - &mean) * &inv_std;
    let y = &xhat * &bn.gamma + &bn.beta;
    (y, BnCache { xhat, inv_std })
}

fn bn_bwd(bn: &BatchNorm, c: &BnCache, gy: &Array2<f64>, mode: Mode, gbn: Option<&mut BatchNorm>) -> Array2<f64> {
    if let Some(g) = gbn {
        g.gamma += &(gy * &c.xhat).sum_axis(Axis(0));
        g.beta += &gy.sum_axis(Axis(0));
    }
    let gxhat = gy * &bn.gamma;
    match mode {
        Mode::Eval => gxhat * &c.inv_std,
        Mode::Train => {
            let n = gy.nrows() as f64;
            let sum_g = gxhat.sum_axis(Axis(0));
            let sum_gx = (&gxhat * &c.xhat).sum_axis(Axis(0));
            ((gxhat * n - &sum_g) - &c.xhat * &sum_gx) * &(&c.inv_std / n)
        }
    }
}

struct BlockCache {
    h_in: Array2<f64>,
    bn: BnCache,
    normed: Array2<f64>,
}

struct EncoderCache {
    pre0: Array2<f64>,
    blocks: Vec<BlockCache>,
    h: Array2<f64>,
    mu_bn: Option<BnCache>,
    lv_bn: Option<BnCache>,
}

/// Encoder output for a batch: rows are documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mu: Array2<f64>,
    pub logvar: Array2<f64>,
}

fn encoder_fwd(p: &ModelParams, x: &Array2<f64>, mode: Mode, dropout: &[Array2<f64>], stats: &mut BnStats) -> (Posterior, EncoderCache) {
    let cfg = &p.config;
    let act = cfg.activation;
    let e = &p.encoder;
    let pre0 = linear_fwd(&e.input, x);
    let mut h = pre0.mapv(|v| act.apply(v));
    let mut blocks = Vec::with_capacity(e.blocks.len());
    for (i, blk) in e.blocks.iter().enumerate() {
        let a = linear_fwd(&blk.lin, &h);
        let (normed, bn) = bn_fwd(&blk.bn, &a, mode, cfg.bn_eps, stats);
        let mut branch = normed.mapv(|v| act.apply(v));
        if let Some(mask) = dropout.get(i) {
            branch *= mask;
        }
        let h_in = h.clone();
        h += &branch;
        blocks.push(BlockCache { h_in, bn, normed });
    }
    let mut mu = linear_fwd(&e.mu, &h);
    let mut logvar = linear_fwd(&e.logvar, &h);
    let mu_bn = e.mu_bn.as_ref().map(|bn| {
        let (y, c) = bn_fwd(bn, &mu, mode, cfg.bn_eps, stats);
        mu = y;
        c
    });
    let lv_bn = e.logvar_bn.as_ref().map(|bn| {
        let (y, c) = bn_fwd(bn, &logvar, mode, cfg.bn_eps, stats);
        logvar = y;
        c
    });
    (
        Posterior { mu, logvar },
        EncoderCache {
            pre0,
            blocks,
            h,
            mu_bn,
            lv_bn,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn encoder_bwd(
    p: &ModelParams,
    x: &Array2<f64>,
    c: &EncoderCache,
    mode: Mode,
    dropout: &[Array2<f64>],
    mut g_mu: Array2<f64>,
    mut g_lv: Array2<f64>,
    g: &mut ModelParams,
) {
    let act = p.config.activation;
    let e = &p.encoder;
    let ge = &mut g.encoder;
    if let (Some(bn), Some(cache)) = (&e.mu_bn, &c.mu_bn) {
        g_mu = bn_bwd(bn, cache, &g_mu, mode, ge.mu_bn.as_mut());
    }
    if let (Some(bn), Some(cache)) = (&e.logvar_bn, &c.lv_bn) {
        g_lv = bn_bwd(bn, cache, &g_lv, mode, ge.logvar_bn.as_mut());
    }
    let mut gh = linear_bwd(&e.mu, &c.h, &g_mu, Some(&mut ge.mu));
    gh += &linear_bwd(&e.logvar, &c.h, &g_lv, Some(&mut ge.logvar));
    for (i, (blk, bc)) in e.blocks.iter().zip(&c.blocks).enumerate().rev() {
        let mut g_branch = gh.clone();
        if let Some(mask) = dropout.get(i) {
            g_branch *= mask;
        }
        Zip::from(&mut g_branch).and(&bc.normed).for_each(|g, &n| *g *= act.grad(n));
        let gblk = &mut ge.blocks[i];
        let g_a = bn_bwd(&blk.bn, &bc.bn, &g_branch, mode, Some(&mut gblk.bn));
        gh += &linear_bwd(&blk.lin, &bc.h_in, &g_a, Some(&mut gblk.lin));
    }
    Zip::from(&mut gh).and(&c.pre0).for_each(|g, &v| *g *= act.grad(v));
    linear_bwd(&e.input, x, &gh, Some(&mut ge.input));
}

/// Column-wise softmax of `ρ αᵀ`: column `k` is the word distribution of topic `k`.
pub fn topic_word_matrix(rho: &Array2<f64>, alpha: &Array2<f64>) -> Array2<f64> {
    let mut logits = rho.dot(&alpha.t());
    for mut col in logits.columns_mut() {
        let max = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        col.mapv_inplace(|v| (v - max).exp());
        let z = col.sum();
        col /= z;
    }
    logits
}

fn check_finite(name: &str, a: &Array2<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {name}")))
    }
}

/// Evaluates the weighted objective on `batch` and, when `grads` is given,
/// accumulates its gradient (mean over documents) into it. In train mode the
/// batch-norm statistics observed are returned for the running-average update.
pub fn forward_backward(
    p: &ModelParams,
    batch: &DocBatch,
    noise: &Noise,
    mode: Mode,
    mut grads: Option<&mut ModelParams>,
) -> Result<(Components, BnStats)> {
    let cfg = &p.config;
    let n = batch.len();
    let ks = cfg.n_sticks();
    let s_count = noise.samples();
    if n == 0 || s_count == 0 {
        return Err(Error::Input("forward pass needs at least one document and one sample".into()));
    }
    if batch.counts.ncols() != cfg.vocab_size {
        return Err(Error::Input(format!(
            "batch has {} columns, model V={}",
            batch.counts.ncols(),
            cfg.vocab_size
        )));
    }
    let mut stats = BnStats::new();
    let (post, cache) = encoder_fwd(p, &batch.freqs, mode, &noise.dropout, &mut stats);
    check_finite("encoder mean", &post.mu)?;
    check_finite("encoder log-variance", &post.logvar)?;
    let beta = topic_word_matrix(&p.rho, &p.alpha);
    let std = post.logvar.mapv(|v| (0.5 * v).exp());

    let inv = 1.0 / (n * s_count) as f64;
    let coef_rec = -cfg.w_rec * inv;
    let coef_stick = cfg.w_stick * inv;
    let want = grads.is_some();
    let mut g_mu = Array2::<f64>::zeros(post.mu.raw_dim());
    let mut g_lv = Array2::<f64>::zeros(post.mu.raw_dim());
    let mut g_beta = Array2::<f64>::zeros(beta.raw_dim());
    let (mut rec_sum, mut kls_sum) = (0.0, 0.0);

    for s in 0..s_count {
        let eps = &noise.eps[s];
        let z = &post.mu + &(&std * eps);
        let pre_a = linear_fwd(&p.sticks.a, &z);
        let pre_b = linear_fwd(&p.sticks.b, &z);
        let mut theta = Array2::<f64>::zeros((n, ks + 1));
        let mut nu = Array2::<f64>::zeros((n, ks));
        let mut dnu = Array2::<(f64, f64)>::from_elem((n, ks), (0.0, 0.0));
        let mut g_a = Array2::<f64>::zeros((n, ks));
        let mut g_b = Array2::<f64>::zeros((n, ks));
        for d in 0..n {
            for k in 0..ks {
                let a = softplus(pre_a[[d, k]]) + cfg.softplus_eps;
                let b = softplus(pre_b[[d, k]]) + cfg.softplus_eps;
                let draw = sample_kumaraswamy_grad(a, b, noise.u[s][[d, k]], cfg.u_clamp);
                nu[[d, k]] = draw.nu;
                dnu[[d, k]] = (draw.dnu_da, draw.dnu_db);
                let (kl, da, db) = kl_kumaraswamy_beta_grad(a, b, cfg.prior_a, cfg.prior_b, cfg.taylor_terms)?;
                kls_sum += kl;
                g_a[[d, k]] = coef_stick * da;
                g_b[[d, k]] = coef_stick * db;
            }
            let th = stick_break(nu.row(d).as_slice().unwrap());
            theta.row_mut(d).assign(&Array1::from(th));
        }
        let prob = theta.dot(&beta.t());
        let mut g_prob = Array2::<f64>::zeros(prob.raw_dim());
        Zip::from(&mut g_prob)
            .and(&prob)
            .and(&batch.counts)
            .for_each(|g, &pv, &c| {
                if c > 0.0 {
                    rec_sum += c * pv.max(PROB_FLOOR).ln();
                    if pv > PROB_FLOOR {
                        *g = coef_rec * c / pv;
                    }
                }
            });
        if !want {
            continue;
        }
        let g_theta = g_prob.dot(&beta);
        g_beta += &g_prob.t().dot(&theta);
        let mut g_nu = vec![0.0; ks];
        for d in 0..n {
            stick_break_backward(
                nu.row(d).as_slice().unwrap(),
                g_theta.row(d).as_slice().unwrap(),
                &mut g_nu,
            );
            for k in 0..ks {
                let (da, db) = dnu[[d, k]];
                g_a[[d, k]] += g_nu[k] * da;
                g_b[[d, k]] += g_nu[k] * db;
            }
        }
        Zip::from(&mut g_a).and(&pre_a).for_each(|g, &v| *g *= sigmoid(v));
        Zip::from(&mut g_b).and(&pre_b).for_each(|g, &v| *g *= sigmoid(v));
        let gp = grads.as_deref_mut().unwrap();
        let mut g_z = linear_bwd(&p.sticks.a, &z, &g_a, Some(&mut gp.sticks.a));
        g_z += &linear_bwd(&p.sticks.b, &z, &g_b, Some(&mut gp.sticks.b));
        g_mu += &g_z;
        g_lv += &(&g_z * eps * &std * 0.5);
    }

    let klg_sum: f64 = Zip::from(&post.mu)
        .and(&post.logvar)
        .fold(0.0, |acc, &m, &lv| acc + 0.5 * (m * m + lv.exp() - 1.0 - lv));
    let comps = {
        let rec = rec_sum * inv;
        let kl_g = klg_sum / n as f64;
        let kl_s = kls_sum * inv;
        Components {
            loss: -cfg.w_rec * rec + cfg.w_gauss * kl_g + cfg.w_stick * kl_s,
            rec,
            kl_g,
            kl_s,
        }
    };
    if !comps.loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (rec={}, kl_g={}, kl_s={})",
            comps.rec, comps.kl_g, comps.kl_s
        )));
    }

    if let Some(g) = grads {
        let cg = cfg.w_gauss / n as f64;
        g_mu.scaled_add(cg, &post.mu);
        Zip::from(&mut g_lv)
            .and(&post.logvar)
            .for_each(|gl, &lv| *gl += cg * 0.5 * (lv.exp() - 1.0));
        encoder_bwd(p, &batch.freqs, &cache, mode, &noise.dropout, g_mu, g_lv, g);
        // softmax over each column of ρ αᵀ
        let col = (&beta * &g_beta).sum_axis(Axis(0));
        let g_logit = &beta * &(&g_beta - &col);
        g.alpha += &g_logit.t().dot(&p.rho);
    }
    Ok((comps, stats))
}

/// Folds train-mode batch statistics into the running averages.
pub fn apply_bn_stats(p: &mut ModelParams, stats: &BnStats) {
    let m = p.config.bn_momentum;
    let e = &mut p.encoder;
    let layers = e
        .blocks
        .iter_mut()
        .map(|b| &mut b.bn)
        .chain(e.mu_bn.as_mut())
        .chain(e.logvar_bn.as_mut());
    for (bn, (mean, var)) in layers.zip(stats) {
        bn.running_mean = &bn.running_mean * (1.0 - m) + mean * m;
        bn.running_var = &bn.running_var * (1.0 - m) + var * m;
    }
}

/// Encoder pass over normalized frequency rows.
pub fn encode(p: &ModelParams, freqs: ArrayView2<'_, f64>, mode: Mode, rng: &mut Rng) -> Result<Posterior> {
    let noise = Noise::draw(&p.config, freqs.nrows(), 0, mode, rng);
    let mut stats = BnStats::new();
    let (post, _) = encoder_fwd(p, &freqs.to_owned(), mode, &noise.dropout, &mut stats);
    check_finite("encoder mean", &post.mu)?;
    check_finite("encoder log-variance", &post.logvar)?;
    Ok(post)
}

/// `z = μ + exp(logvar/2) ⊙ noise`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Kumaraswamy shapes `(a, b)` for each row of `z`.
pub fn stick_params(p: &ModelParams, z: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
    let z = z.to_owned();
    let eps = p.config.softplus_eps;
    let a = linear_fwd(&p.sticks.a, &z).mapv(|v| softplus(v) + eps);
    let b = linear_fwd(&p.sticks.b, &z).mapv(|v| softplus(v) + eps);
    (a, b)
}

/// `Σ_v c_v log Σ_k θ_k β_{v,k}`.
pub fn reconstruct_loglik(counts: &[(usize, u32)], theta: &[f64], beta: &Array2<f64>) -> f64 {
    counts
        .iter()
        .map(|&(v, c)| {
            let pv: f64 = beta.row(v).iter().zip(theta).map(|(b, t)| b * t).sum();
            c as f64 * pv.max(PROB_FLOOR).ln()
        })
        .sum()
}

/// `KL(N(μ, diag e^{logvar}) ‖ N(0, I))`.
pub fn kl_gaussian_std(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// Monte Carlo estimate of the weighted objective with `samples` draws.
pub fn elbo(p: &ModelParams, docs: &[Document], rng: &mut Rng, samples: usize, mode: Mode) -> Result<Components> {
    let batch = DocBatch::new(docs, p.config.vocab_size)?;
    let noise = Noise::draw(&p.config, batch.len(), samples, mode, rng);
    forward_backward(p, &batch, &noise, mode, None).map(|r| r.0)
}

/// Deterministic topic proportions: eval-mode encoder, `z = μ`, sticks at their
/// Kumaraswamy means.
pub fn infer_theta(p: &ModelParams, batch: &DocBatch) -> Result<Array2<f64>> {
    let mut stats = BnStats::new();
    let (post, _) = encoder_fwd(p, &batch.freqs, Mode::Eval, &[], &mut stats);
    check_finite("encoder mean", &post.mu)?;
    let (a, b) = stick_params(p, post.mu.view());
    let k = p.config.n_topics;
    let mut theta = Array2::zeros((batch.len(), k));
    for d in 0..batch.len() {
        let nu: Vec<f64> = a
            .row(d)
            .iter()
            .zip(b.row(d))
            .map(|(&a, &b)| super::kumaraswamy::kumaraswamy_mean(a, b))
            .collect();
        theta.row_mut(d).assign(&Array1::from(stick_break(&nu)));
    }
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ActivityRule {
    /// Active iff the argmax topic of at least `n_min` documents.
    ArgmaxSupport { n_min: usize },
    /// Active iff the mean proportion is at least `tau`.
    Mass { tau: f64 },
}

impl Default for ActivityRule {
    fn default() -> Self {
        ActivityRule::ArgmaxSupport { n_min: 1 }
    }
}

/// Argmax topic per row, ties to the lowest index.
pub fn argmax_rows(thetas: &Array2<f64>) -> Vec<usize> {
    thetas
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Active topic indices (sorted) under `rule`.
pub fn active_topics(thetas: &Array2<f64>, rule: ActivityRule) -> Vec<usize> {
    let k = thetas.ncols();
    match rule {
        ActivityRule::ArgmaxSupport { n_min } => {
            let mut tally = vec![0usize; k];
            for a in argmax_rows(thetas) {
                tally[a] += 1;
            }
            (0..k).filter(|&i| tally[i] >= n_min.max(1)).collect()
        }
        ActivityRule::Mass { tau } => {
            if thetas.nrows() == 0 {
                return Vec::new();
            }
            let mean = thetas.mean_axis(Axis(0)).unwrap();
            (0..k).filter(|&i| mean[i] >= tau).collect()
        }
    }
}

/// Slices rows `lo..hi` of a batch, used by the minibatch loop.
pub fn batch_rows(batch: &DocBatch, lo: usize, hi: usize) -> DocBatch {
    DocBatch {
        counts: batch.counts.slice(s![lo..hi, ..]).to_owned(),
        freqs: batch.freqs.slice(s![lo..hi, ..]).to_owned(),
    }
}
