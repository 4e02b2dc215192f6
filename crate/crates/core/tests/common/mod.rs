#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use streamtm::corpus::Document;
use streamtm::rng;
use rand::seq::SliceRandom;
use streamtm::eval::CoherenceMode;
use streamtm::sbetm::{ModelConfig, ModelParams, TensorRole};

pub fn tiny_config(v: usize, k: usize, l: usize, h: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: v,
        n_topics: k,
        embed_dim: l,
        hidden_dim: h,
        ..ModelConfig::default()
    }
}

/// Random parameters with non-trivial batch-norm running statistics.
pub fn tiny_model(cfg: ModelConfig, seed: u64) -> ModelParams {
    let mut r = rng::seeded(seed);
    let (v, l) = (cfg.vocab_size, cfg.embed_dim);
    let rho = Array2::from_shape_simple_fn((v, l), || r.sample::<f64, _>(StandardNormal) / (l as f64).sqrt());
    let mut p = ModelParams::init(cfg, rho, &mut r).unwrap();
    for blk in &mut p.encoder.blocks {
        blk.bn.running_mean.mapv_inplace(|_| r.random_range(-0.2..0.2));
        blk.bn.running_var.mapv_inplace(|_| r.random_range(0.5..2.0));
        blk.bn.gamma.mapv_inplace(|_| r.random_range(0.5..1.5));
        blk.bn.beta.mapv_inplace(|_| r.random_range(-0.3..0.3));
    }
    p.alpha.mapv_inplace(|x| 3.0 * x);
    // keep posterior scales and stick shapes in a moderate range
    p.encoder.logvar.w.mapv_inplace(|x| 0.1 * x);
    p.encoder.mu.w.mapv_inplace(|x| 0.3 * x);
    p
}

pub fn random_docs(v: usize, n: usize, len: usize, seed: u64) -> Vec<Document> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let mut counts = vec![0u32; v];
            for _ in 0..len {
                // skewed word choice so documents differ in shape
                let u: f64 = r.random();
                counts[((u * u) * v as f64) as usize % v] += 1;
            }
            Document {
                id: format!("d{i}"),
                timestep: 0,
                counts: counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(j, &c)| (j, c))
                    .collect(),
                label: None,
            }
        })
        .collect()
}

/// Tanh-sinh quadrature on (0, 1). `f(x, 1−x)` receives both the node and its
/// complement so integrands can stay accurate near 1.
pub fn tanh_sinh(f: impl Fn(f64, f64) -> f64, level: u32) -> f64 {
    let h = 0.5f64.powi(level as i32);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let n = (4.5 / h) as i64;
    for k in -n..=n {
        let t = k as f64 * h;
        let s = half_pi * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * s).exp());
        let xc = 1.0 / (1.0 + (2.0 * s).exp());
        if x <= 0.0 || xc <= 0.0 {
            continue;
        }
        let w = std::f64::consts::PI * t.cosh() * x * xc;
        if w < 1e-300 {
            continue;
        }
        sum += w * f(x, xc);
    }
    sum * h
}

/// Trainable coordinates as `(tensor index, offset)` pairs.
pub fn trainable_coords(p: &ModelParams) -> Vec<(usize, usize)> {
    p.tensors()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.role == TensorRole::Trainable)
        .flat_map(|(i, t)| (0..t.data.len()).map(move |j| (i, j)))
        .collect()
}

pub fn get_coord(p: &ModelParams, (i, j): (usize, usize)) -> f64 {
    p.tensors()[i].data[j]
}

pub fn set_coord(p: &mut ModelParams, (i, j): (usize, usize), v: f64) {
    p.tensors_mut()[i].data[j] = v;
}

pub fn coord_name(p: &ModelParams, (i, j): (usize, usize)) -> String {
    format!("{}[{j}]", p.tensors()[i].name)
}

/// Dense symmetric matrix function through a full eigendecomposition.
pub fn dense_sym_fn(a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = nalgebra::SymmetricEigen::new(m);
    let d = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(&f));
    let out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    Array2::from_shape_fn((n, n), |(i, j)| out[(i, j)])
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `k` points in `R^l` around a random mean, with a few strong random directions
/// plus isotropic noise.
pub fn random_cloud(k: usize, l: usize, spikes: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::seeded(seed);
    let mut g = || r.sample::<f64, _>(StandardNormal);
    let mean: Vec<f64> = (0..l).map(|_| g()).collect();
    let dirs = Array2::from_shape_simple_fn((spikes, l), &mut g);
    let scales: Vec<f64> = (0..spikes).map(|s| 3.0 / (1.0 + s as f64)).collect();
    let coefs = Array2::from_shape_simple_fn((k, spikes), &mut g);
    Array2::from_shape_fn((k, l), |(i, j)| {
        mean[j] + (0..spikes).map(|s| scales[s] * coefs[[i, s]] * dirs[[s, j]]).sum::<f64>()
    }) + Array2::from_shape_simple_fn((k, l), || 0.1 * g())
}

/// `⟨C,P⟩ + r·KL(P𝟙‖a) + r·KL(Pᵀ𝟙‖b)` with the generalized KL, written out directly.
pub fn uot_objective_oracle(cost: &Array2<f64>, p: &Array2<f64>, a: &[f64], b: &[f64], r: f64) -> f64 {
    let kl = |x: f64, y: f64| if x > 0.0 { x * (x / y).ln() - x + y } else { y };
    let (n, m) = cost.dim();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..m {
            f += cost[[i, j]] * p[[i, j]];
        }
    }
    f += r * (0..n).map(|i| kl(p.row(i).sum(), a[i])).sum::<f64>();
    f + r * (0..m).map(|j| kl(p.column(j).sum(), b[j])).sum::<f64>()
}

/// Projected gradient descent with backtracking on the KL-relaxed transport
/// objective, started from the product plan.
pub fn uot_projected_gradient(cost: &Array2<f64>, a: &[f64], b: &[f64], r: f64, iters: usize) -> Array2<f64> {
    let (n, m) = cost.dim();
    let f = |p: &Array2<f64>| uot_objective_oracle(cost, p, a, b, r);
    let mut p = Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j]);
    let mut fp = f(&p);
    let mut step = 1e-2;
    for _ in 0..iters {
        let rows: Vec<f64> = (0..n).map(|i| p.row(i).sum()).collect();
        let cols: Vec<f64> = (0..m).map(|j| p.column(j).sum()).collect();
        let grad = Array2::from_shape_fn((n, m), |(i, j)| {
            cost[[i, j]] + r * (rows[i] / a[i]).ln() + r * (cols[j] / b[j]).ln()
        });
        step *= 2.0;
        loop {
            let cand = Array2::from_shape_fn((n, m), |(i, j)| (p[[i, j]] - step * grad[[i, j]]).max(1e-300));
            let fc = f(&cand);
            let decrease: f64 = grad.iter().zip(p.iter().zip(cand.iter())).map(|(g, (x, y))| g * (x - y)).sum();
            if fc <= fp - 1e-4 * decrease || step < 1e-16 {
                p = cand;
                fp = fc;
                break;
            }
            step *= 0.5;
        }
    }
    p
}

pub const WORDS: [&str; 12] = ["ant", "bee", "cat", "dog", "eel", "fox", "gnu", "hen", "ibis", "jay", "kiwi", "lynx"];

pub fn toy_corpus(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let len = r.random_range(1..8);
            (0..len).map(|_| WORDS[r.random_range(0..WORDS.len())].to_string()).collect()
        })
        .collect()
}

pub fn toy_topics(k: usize, n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut r = rng::seeded(seed);
    (0..k)
        .map(|_| {
            let mut w: Vec<String> = WORDS.iter().map(|s| s.to_string()).collect();
            w.shuffle(&mut r);
            w.truncate(n);
            w
        })
        .collect()
}

pub fn contains(doc: &[String], w: &str) -> bool {
    doc.iter().any(|x| x == w)
}

/// Straight from the definitions: scan the documents for every count.
pub fn brute_coherence(topics: &[Vec<String>], docs: &[Vec<String>], mode: CoherenceMode) -> f64 {
    let n = docs.len() as f64;
    let df = |w: &str| docs.iter().filter(|d| contains(d, w)).count() as f64;
    let co = |a: &str, b: &str| docs.iter().filter(|d| contains(d, a) && contains(d, b)).count() as f64;
    let mut total = 0.0;
    let mut topics_used = 0.0;
    for t in topics {
        let mut s = 0.0;
        let mut pairs = 0.0;
        for i in 0..t.len() {
            for j in 0..i {
                let (di, dj) = (df(&t[i]), df(&t[j]));
                if di == 0.0 || dj == 0.0 {
                    continue;
                }
                let cij = co(&t[i], &t[j]);
                s += match mode {
                    CoherenceMode::Npmi => {
                        if cij == n {
                            1.0
                        } else {
                            let pij = cij / n + 1e-12;
                            (pij / ((di / n) * (dj / n))).ln() / -pij.ln()
                        }
                    }
                    CoherenceMode::Umass => ((cij + 1.0) / dj).ln(),
                };
                pairs += 1.0;
            }
        }
        if pairs > 0.0 {
            total += s / pairs;
            topics_used += 1.0;
        }
    }
    total / topics_used
}

/// `log ∫ p(W | ν) Beta(ν; a0, b0) dν` for a two-topic model, by tanh-sinh in
/// ν with the log-likelihood shifted by its maximum over the nodes.
pub fn k2_log_marginal(counts: &[(usize, u32)], beta: &Array2<f64>, a0: f64, b0: f64, level: u32) -> f64 {
    let loglik = |nu: f64, nu_c: f64| -> f64 {
        counts
            .iter()
            .map(|&(v, c)| c as f64 * (nu * beta[[v, 0]] + nu_c * beta[[v, 1]]).ln())
            .sum()
    };
    let shift = (0..=200)
        .map(|i| {
            let x = i as f64 / 200.0;
            loglik(x, 1.0 - x)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_b = statrs::function::beta::ln_beta(a0, b0);
    let integral = tanh_sinh(
        |x, xc| ((a0 - 1.0) * x.ln() + (b0 - 1.0) * xc.ln() - ln_b + loglik(x, xc) - shift).exp(),
        level,
    );
    integral.ln() + shift
}

/// `E_{Kumaraswamy(a,b)}[log p(W | ν)]`, integrating over the uniform variate of
/// the inverse-CDF sampler.
pub fn k2_expected_loglik(counts: &[(usize, u32)], beta: &Array2<f64>, a: f64, b: f64, level: u32) -> f64 {
    tanh_sinh(
        |_, uc| {
            let ln_1mu = uc.ln();
            let y = -(ln_1mu / b).exp_m1();
            let nu = (y.ln() / a).exp();
            let nu_c = -(y.ln() / a).exp_m1();
            counts
                .iter()
                .map(|&(v, c)| c as f64 * (nu * beta[[v, 0]] + nu_c * beta[[v, 1]]).max(1e-300).ln())
                .sum()
        },
        level,
    )
}

/// Nelder–Mead minimization of `f` from `x0` with initial step `step`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize, ftol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=n)
        .map(|i| {
            let mut x = x0.to_vec();
            if i > 0 {
                x[i - 1] += step;
            }
            let fx = f(&x);
            (x, fx)
        })
        .collect();
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() <= ftol * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// A two-topic model whose encoder emits `μ = 0, logvar = 0` and whose stick
/// heads ignore `z`, so the stick posterior is one Kumaraswamy set by the head
/// biases. Paired with one random document.
pub struct K2Case {
    pub params: ModelParams,
    pub counts: Vec<(usize, u32)>,
    pub beta: Array2<f64>,
}

pub fn k2_case(seed: u64) -> K2Case {
    // unit weights: only then is the objective a bound on log p(W)
    let cfg = ModelConfig {
        w_rec: 1.0,
        w_gauss: 1.0,
        w_stick: 1.0,
        ..tiny_config(6, 2, 3, 1)
    };
    let mut params = tiny_model(cfg, seed);
    let mut r = rng::seeded(seed ^ 0x5eed);
    let spread: f64 = r.random_range(0.5..4.0);
    params.alpha.mapv_inplace(|x| spread * x);
    for lin in [&mut params.encoder.mu, &mut params.encoder.logvar, &mut params.sticks.a, &mut params.sticks.b] {
        lin.w.fill(0.0);
        lin.b.fill(0.0);
    }
    let len = r.random_range(3..40);
    let mut dense = [0u32; 6];
    for _ in 0..len {
        dense[r.random_range(0..6)] += 1;
    }
    let counts = dense.iter().enumerate().filter(|(_, &c)| c > 0).map(|(v, &c)| (v, c)).collect();
    let beta = streamtm::sbetm::topic_word_matrix(&params.rho, &params.alpha);
    K2Case { params, counts, beta }
}

fn head_shape(bias: f64, eps: f64) -> f64 {
    streamtm::sbetm::softplus(bias) + eps
}

/// Maximizes the exact-expectation objective over the two stick-head biases,
/// writes them into the model, and returns the maximum.
pub fn k2_fit(case: &mut K2Case, level: u32) -> f64 {
    let cfg = case.params.config.clone();
    let neg = |x: &[f64]| -> f64 {
        let (a, b) = (head_shape(x[0], cfg.softplus_eps), head_shape(x[1], cfg.softplus_eps));
        let kl = streamtm::sbetm::kl_kumaraswamy_beta(a, b, cfg.prior_a, cfg.prior_b, cfg.taylor_terms).unwrap();
        -(k2_expected_loglik(&case.counts, &case.beta, a, b, level) - kl)
    };
    let (x, f) = nelder_mead(neg, &[0.0, 0.0], 1.0, 2000, 1e-14);
    case.params.sticks.a.b[0] = x[0];
    case.params.sticks.b.b[0] = x[1];
    -f
}

/// The library's weighted objective (`−loss`) with the uniform variate
/// integrated out by quadrature instead of sampled.
pub fn k2_library_objective(case: &K2Case, level: u32) -> f64 {
    let v = case.params.config.vocab_size;
    let mut dense = Array2::zeros((1, v));
    for &(w, c) in &case.counts {
        dense[[0, w]] = c as f64;
    }
    let batch = streamtm::sbetm::DocBatch::from_counts(dense).unwrap();
    tanh_sinh(
        |u, _| {
            let noise = streamtm::sbetm::Noise {
                eps: vec![Array2::zeros((1, 1))],
                u: vec![Array2::from_elem((1, 1), u)],
                dropout: Vec::new(),
            };
            let (c, _) = streamtm::sbetm::forward_backward(&case.params, &batch, &noise, streamtm::sbetm::Mode::Eval, None).unwrap();
            -c.loss
        },
        level,
    )
}

/// `KL(Kumaraswamy(a,b) ‖ Beta(a0,b0))` by tanh-sinh over the uniform variate.
pub fn kl_quadrature(a: f64, b: f64, a0: f64, b0: f64) -> f64 {
    let integrand = |u: f64, uc: f64| {
        let ln_uc = if u < 0.5 { (-u).ln_1p() } else { uc.ln() };
        let w = (ln_uc / b).exp();
        // y = 1 − w, accurate at both ends
        let ln_y = if w < 0.5 { (-w).ln_1p() } else { (-(ln_uc / b).exp_m1()).ln() };
        let ln_nu = ln_y / a;
        let ln_1m_nu = (-(ln_nu.exp_m1())).ln();
        let ln_q = a.ln() + b.ln() + (a - 1.0) * ln_nu + (b - 1.0) * ln_uc / b;
        let ln_p = (a0 - 1.0) * ln_nu + (b0 - 1.0) * ln_1m_nu - streamtm::special::ln_beta(a0, b0);
        ln_q - ln_p
    };
    tanh_sinh(integrand, 8)
}
