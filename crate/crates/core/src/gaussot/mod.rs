//! Spiked low-rank Gaussian models of embedding clouds and the closed-form
//! optimal transport between two of them.
//!
//! A model is `N(m, Σ)` with `Σ = U diag(λ) Uᵀ + σ²(I − UUᵀ)`. Everything is
//! evaluated on the span of the two models' spikes plus a scalar action on its
//! complement, so no `L × L` matrix is formed.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, sym_eigen, sym_fn};

pub const SIGMA2_FLOOR: f64 = 1e-8;
const BASIS_TOL: f64 = 1e-10;

/// How many leading eigenpairs a fit keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DimRule {
    /// Smallest `d` whose eigenvalues reach `frac` of the trace, at most `K − 2`.
    TraceFraction { frac: f64 },
    /// Exactly `d` (still reduced if the spike would not exceed the noise level).
    Fixed { d: usize },
}

impl Default for DimRule {
    fn default() -> Self {
        DimRule::TraceFraction { frac: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGaussian {
    pub mean: Array1<f64>,
    /// `L × d`, orthonormal columns.
    pub basis: Array2<f64>,
    /// Descending, each above `sigma2`.
    pub eigvals: Array1<f64>,
    pub sigma2: f64,
}

impl LowRankGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn trace(&self) -> f64 {
        self.eigvals.sum() + (self.dim() - self.rank()) as f64 * self.sigma2
    }

    /// The full covariance; only for small `L`.
    pub fn dense_covariance(&self) -> Array2<f64> {
        let l = self.dim();
        let spikes = &self.basis * &(&self.eigvals - self.sigma2);
        spikes.dot(&self.basis.t()) + Array2::<f64>::eye(l) * self.sigma2
    }
}

/// Fits a spiked model to the rows of `points` (`K × L`) via the `K × K` Gram matrix.
pub fn fit_low_rank_gaussian(points: &Array2<f64>, rule: DimRule) -> Result<LowRankGaussian> {
    let (k, l) = points.dim();
    if k < 2 {
        return Err(Error::Input(format!("a Gaussian fit needs at least 2 points, got {k}")));
    }
    let mean = points.mean_axis(Axis(0)).unwrap();
    let centered = points - &mean;
    let gram = centered.dot(&centered.t()) / (k - 1) as f64;
    let (vals, vecs) = sym_eigen(&gram);
    let trace = gram.diag().sum();
    let degenerate = || LowRankGaussian {
        mean: mean.clone(),
        basis: Array2::zeros((l, 0)),
        eigvals: Array1::zeros(0),
        sigma2: SIGMA2_FLOOR,
    };
    if !(trace > 0.0) {
        return Ok(degenerate());
    }
    // numerically nonzero spectrum only
    let usable = vals.iter().take_while(|&&v| v > 1e-12 * trace).count();
    let cap = usable.min(k.saturating_sub(2)).min(l.saturating_sub(1));
    let mut d = match rule {
        DimRule::TraceFraction { frac } => {
            let mut acc = 0.0;
            let mut d = cap;
            for (i, &v) in vals.iter().take(cap).enumerate() {
                acc += v;
                if acc >= frac * trace {
                    d = i + 1;
                    break;
                }
            }
            d
        }
        DimRule::Fixed { d } => d.min(usable).min(l.saturating_sub(1)),
    };
    let noise = |d: usize| {
        let kept: f64 = vals.iter().take(d).sum();
        ((trace - kept) / (l - d) as f64).max(SIGMA2_FLOOR)
    };
    while d > 0 && vals[d - 1] <= noise(d) {
        d -= 1;
    }
    let sigma2 = noise(d);
    let mut basis = Array2::zeros((l, d));
    for i in 0..d {
        let u = centered.t().dot(&vecs.column(i)) / ((k - 1) as f64 * vals[i]).sqrt();
        basis.column_mut(i).assign(&u);
    }
    // re-orthonormalize to clean up rounding in the Gram route
    let basis = orthonormalize(&basis, BASIS_TOL);
    let d = basis.ncols();
    Ok(LowRankGaussian {
        mean,
        eigvals: vals.slice(ndarray::s![..d]).to_owned(),
        basis,
        sigma2,
    })
}

/// `Σ^{p} x` for `p = ±½`.
pub fn sqrt_apply(g: &LowRankGaussian, x: ArrayView1<'_, f64>, power: f64) -> Array1<f64> {
    let s = g.sigma2.powf(power);
    let coef = g.basis.t().dot(&x) * &(g.eigvals.mapv(|v| v.powf(power)) - s);
    g.basis.dot(&coef) + &x * s
}

/// Restriction of a model's covariance power to an orthonormal basis `q` whose
/// span contains the model's spikes.
fn restricted_power(g: &LowRankGaussian, q: &Array2<f64>, power: f64) -> Array2<f64> {
    let r = q.ncols();
    let s = g.sigma2.powf(power);
    let proj = q.t().dot(&g.basis);
    let weighted = &proj * &(g.eigvals.mapv(|v| v.powf(power)) - s);
    weighted.dot(&proj.t()) + Array2::<f64>::eye(r) * s
}

/// `M = (Σ_t^{½} Σ_p Σ_t^{½})^{½}` as a matrix on `span(q)` plus the scalar it
/// acts as on the complement.
#[derive(Debug, Clone, PartialEq)]
pub struct MiddleSqrt {
    pub q: Array2<f64>,
    pub inner: Array2<f64>,
    pub complement: f64,
}

impl MiddleSqrt {
    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let c = self.q.t().dot(&x);
        let inside = self.q.dot(&self.inner.dot(&c));
        let outside = &x - &self.q.dot(&c);
        inside + outside * self.complement
    }

    pub fn trace(&self, l: usize) -> f64 {
        self.inner.diag().sum() + (l - self.q.ncols()) as f64 * self.complement
    }
}

fn check_dims(a: &LowRankGaussian, b: &LowRankGaussian) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Input(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

fn joint_basis(g_t: &LowRankGaussian, g_p: &LowRankGaussian) -> Array2<f64> {
    let l = g_t.dim();
    let mut c = Array2::zeros((l, g_t.rank() + g_p.rank()));
    c.slice_mut(ndarray::s![.., ..g_t.rank()]).assign(&g_t.basis);
    c.slice_mut(ndarray::s![.., g_t.rank()..]).assign(&g_p.basis);
    orthonormalize(&c, BASIS_TOL)
}

pub fn middle_sqrt(g_t: &LowRankGaussian, g_p: &LowRankGaussian) -> Result<MiddleSqrt> {
    check_dims(g_t, g_p)?;
    let q = joint_basis(g_t, g_p);
    let st_half = restricted_power(g_t, &q, 0.5);
    let sp = restricted_power(g_p, &q, 1.0);
    let inner = sym_fn(&st_half.dot(&sp).dot(&st_half), |v| v.max(0.0).sqrt());
    Ok(MiddleSqrt {
        q,
        inner,
        complement: (g_t.sigma2 * g_p.sigma2).sqrt(),
    })
}

/// The affine optimal map `x ↦ m_p + A(x − m_t)` between two fitted models.
#[derive(Debug, Clone, PartialEq)]
pub struct MongeMap {
    pub source_mean: Array1<f64>,
    pub target_mean: Array1<f64>,
    pub q: Array2<f64>,
    /// `A` restricted to `span(q)`.
    pub inner: Array2<f64>,
    /// `A` on the complement, `σ_p / σ_t`.
    pub complement: f64,
}

impl MongeMap {
    pub fn new(g_t: &LowRankGaussian, g_p: &LowRankGaussian) -> Result<Self> {
        let m = middle_sqrt(g_t, g_p)?;
        let inv_half = restricted_power(g_t, &m.q, -0.5);
        let inner = inv_half.dot(&m.inner).dot(&inv_half);
        Ok(Self {
            source_mean: g_t.mean.clone(),
            target_mean: g_p.mean.clone(),
            complement: (g_p.sigma2 / g_t.sigma2).sqrt(),
            q: m.q,
            inner,
        })
    }

    pub fn linear(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let c = self.q.t().dot(&x);
        let inside = self.q.dot(&self.inner.dot(&c));
        inside + (&x - &self.q.dot(&c)) * self.complement
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let centered = &x - &self.source_mean;
        &self.target_mean + &self.linear(centered.view())
    }

    /// Eigenvalues of the linear part: those of the restricted block plus the
    /// complement scalar (when the complement is nontrivial).
    pub fn linear_eigenvalues(&self) -> Vec<f64> {
        let (vals, _) = sym_eigen(&self.inner);
        let mut out = vals.to_vec();
        if self.q.ncols() < self.q.nrows() {
            out.push(self.complement);
        }
        out
    }
}

pub fn monge_map(g_t: &LowRankGaussian, g_p: &LowRankGaussian, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    Ok(MongeMap::new(g_t, g_p)?.apply(x))
}

/// Squared 2-Wasserstein distance between the two Gaussians.
pub fn w2_gaussian(g_t: &LowRankGaussian, g_p: &LowRankGaussian) -> Result<f64> {
    let m = middle_sqrt(g_t, g_p)?;
    let dm = &g_t.mean - &g_p.mean;
    let w2 = dm.dot(&dm) + g_t.trace() + g_p.trace() - 2.0 * m.trace(g_t.dim());
    Ok(w2.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportedSet {
    pub embeddings: Array2<f64>,
    pub source_t: usize,
    pub target_t: usize,
}

/// Fits both clouds and pushes every row of `alpha_t` through the optimal map.
pub fn cot_merge(
    alpha_t: &Array2<f64>,
    alpha_prev: &Array2<f64>,
    rule: DimRule,
    source_t: usize,
    target_t: usize,
) -> Result<(TransportedSet, MongeMap)> {
    if alpha_t.ncols() != alpha_prev.ncols() {
        return Err(Error::Input("topic embeddings differ in dimension".into()));
    }
    let g_t = fit_low_rank_gaussian(alpha_t, rule)?;
    let g_p = fit_low_rank_gaussian(alpha_prev, rule)?;
    let map = MongeMap::new(&g_t, &g_p)?;
    let mut out = Array2::zeros(alpha_t.raw_dim());
    for (i, row) in alpha_t.rows().into_iter().enumerate() {
        out.row_mut(i).assign(&map.apply(row));
    }
    Ok((
        TransportedSet {
            embeddings: out,
            source_t,
            target_t,
        },
        map,
    ))
}

/// CSV with a `topic` column followed by one column per embedding dimension.
pub fn write_transported_csv(path: &Path, set: &TransportedSet) -> Result<()> {
    let l = set.embeddings.ncols();
    let mut out = String::from("topic");
    for j in 0..l {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for (i, row) in set.embeddings.rows().into_iter().enumerate() {
        out.push_str(&i.to_string());
        for v in row {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}
