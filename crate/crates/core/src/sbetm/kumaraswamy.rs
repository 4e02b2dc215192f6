//! Kumaraswamy sticks: inverse-CDF sampling with pathwise derivatives, the
//! stick-breaking map, and the closed-form KL against a Beta prior.

use crate::error::{Error, Result};
use crate::special::{hurwitz_zeta_scaled, ln_beta, ln_gamma, Dual2, EULER_GAMMA};

/// A reparameterized draw and its derivatives with respect to the shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KumaDraw {
    pub nu: f64,
    pub dnu_da: f64,
    pub dnu_db: f64,
}

/// `ν = (1 − (1−u)^{1/b})^{1/a}` with `u` clamped to `[δ, 1−δ]`.
pub fn sample_kumaraswamy(a: f64, b: f64, u: f64, clamp: f64) -> f64 {
    sample_kumaraswamy_grad(a, b, u, clamp).nu
}

pub fn sample_kumaraswamy_grad(a: f64, b: f64, u: f64, clamp: f64) -> KumaDraw {
    let u = u.clamp(clamp, 1.0 - clamp);
    let ln_1mu = (-u).ln_1p();
    let w = (ln_1mu / b).exp();
    // y = 1 − w without cancellation
    let y = -(ln_1mu / b).exp_m1();
    let ln_y = y.ln();
    let nu = (ln_y / a).exp();
    let dnu_da = -nu * ln_y / (a * a);
    let dy_db = w * ln_1mu / (b * b);
    let dnu_db = if y > 0.0 { nu / (a * y) * dy_db } else { 0.0 };
    KumaDraw { nu, dnu_da, dnu_db }
}

/// Closed-form CDF `1 − (1 − x^a)^b`.
pub fn kumaraswamy_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    -(b * (-x.powf(a)).ln_1p()).exp_m1()
}

/// Mean `b·B(1 + 1/a, b)`.
pub fn kumaraswamy_mean(a: f64, b: f64) -> f64 {
    (b.ln() + ln_gamma(1.0 + 1.0 / a) + ln_gamma(b) - ln_gamma(1.0 + 1.0 / a + b)).exp()
}

/// θ₁ = ν₁, θ_k = ν_k ∏_{j<k}(1−ν_j), θ_K = ∏_{j<K}(1−ν_j).
pub fn stick_break(nu: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(nu.len() + 1);
    let mut rest = 1.0;
    for &v in nu {
        theta.push(v * rest);
        rest *= 1.0 - v;
    }
    theta.push(rest);
    theta
}

/// Vector–Jacobian product of [`stick_break`]: maps `∂/∂θ` to `∂/∂ν`.
pub fn stick_break_backward(nu: &[f64], g_theta: &[f64], g_nu: &mut [f64]) {
    let n = nu.len();
    debug_assert_eq!(g_theta.len(), n + 1);
    // prefix remainders R_k = ∏_{j<k}(1−ν_j)
    let mut rest = Vec::with_capacity(n + 1);
    rest.push(1.0);
    for &v in nu {
        let r = *rest.last().unwrap();
        rest.push(r * (1.0 - v));
    }
    // gradient flowing into R_{k+1}, starting from θ_K = R_K
    let mut g_next = g_theta[n];
    for k in (0..n).rev() {
        g_nu[k] = g_theta[k] * rest[k] - g_next * rest[k];
        g_next = g_theta[k] * nu[k] + g_next * (1.0 - nu[k]);
    }
}

/// Upper bound on explicit series terms.
const MAX_SERIES_TERMS: usize = 20_000;

fn beta_fn_series(a: Dual2, b: Dual2, n: usize) -> Dual2 {
    let lg_b = b.ln_gamma();
    let ab = a * b;
    let inv_a = a.recip();
    let mut sum = Dual2::cst(0.0);
    for m in 1..=n {
        let x = inv_a * m as f64;
        let beta = (x.ln_gamma() + lg_b - (x + b).ln_gamma()).exp();
        sum = sum + beta / (ab + m as f64);
    }
    sum
}

/// Asymptotic remainder `Σ_{m>n} B(m/a, b)/(m + ab)`, from
/// `Γ(x)/Γ(x+b) ≈ x^{-b}(1 + c₁/x + c₂/x²)` and a geometric expansion of `1/(m+ab)`.
/// Each term is scaled in log space since `Γ(b)` overflows past b ≈ 171.
fn beta_fn_tail(a: Dual2, b: Dual2, n: usize) -> Dual2 {
    let c1 = -(b * (b - 1.0)) * 0.5;
    let c2 = b * (b + 1.0) * (b - 1.0) * (b * 3.0 - 2.0) * (1.0 / 24.0);
    let d = [Dual2::cst(1.0), c1 - b, c2 - b * c1 + b * b];
    let q = (n + 1) as f64;
    let (ln_a, ln_q, lg_b) = (a.ln(), q.ln(), b.ln_gamma());
    let mut tail = Dual2::cst(0.0);
    for (j, dj) in d.iter().enumerate() {
        let s = b + 1.0 + j as f64;
        let scale = (lg_b + (b + j as f64) * ln_a - s * ln_q).exp();
        tail = tail + *dj * scale * hurwitz_zeta_scaled(s, q);
    }
    tail
}

/// `Σ_{m≥1} B(m/a, b)/(m + ab)` evaluated to about 1e-5 absolute accuracy.
///
/// The explicit part runs to `N* = max(min_terms, a(12 + 2b))` terms, where the
/// tail expansion is accurate. Evaluations at `⌊N*⌋` and `⌊N*⌋+1` are blended by
/// the fractional part so the result stays continuous in `(a, b)`.
fn beta_fn_sum(a: Dual2, b: Dual2, min_terms: usize) -> Dual2 {
    let n_star = (a * (b * 2.0 + 12.0)).v;
    if n_star <= min_terms as f64 {
        return beta_fn_series(a, b, min_terms) + beta_fn_tail(a, b, min_terms);
    }
    if n_star >= MAX_SERIES_TERMS as f64 {
        let n = MAX_SERIES_TERMS;
        return beta_fn_series(a, b, n) + beta_fn_tail(a, b, n);
    }
    let n0 = n_star.floor() as usize;
    let frac = a * (b * 2.0 + 12.0) - n0 as f64;
    let lo = beta_fn_series(a, b, n0);
    let x = a.recip() * (n0 + 1) as f64;
    let last = (x.ln_gamma() + b.ln_gamma() - (x + b).ln_gamma()).exp() / (a * b + (n0 + 1) as f64);
    let s0 = lo + beta_fn_tail(a, b, n0);
    let s1 = lo + last + beta_fn_tail(a, b, n0 + 1);
    s0 * (Dual2::cst(1.0) - frac) + s1 * frac
}

fn kl_dual(a: Dual2, b: Dual2, a0: f64, b0: f64, terms: usize) -> Dual2 {
    let first = (Dual2::cst(1.0) - a.recip() * a0) * (-(b.digamma()) - EULER_GAMMA - b.recip());
    let mut kl = first + (a * b).ln() + ln_beta(a0, b0) - (b - 1.0) / b;
    if b0 != 1.0 {
        kl = kl + b * beta_fn_sum(a, b, terms) * (b0 - 1.0);
    }
    kl
}

/// `KL(Kumaraswamy(a,b) ‖ Beta(a₀,b₀))` with derivatives in `a` and `b`.
pub fn kl_kumaraswamy_beta_grad(a: f64, b: f64, a0: f64, b0: f64, terms: usize) -> Result<(f64, f64, f64)> {
    if !(a > 0.0 && b > 0.0 && a0 > 0.0 && b0 > 0.0) {
        return Err(Error::Numeric(format!(
            "KL needs positive shapes, got a={a} b={b} prior=({a0},{b0})"
        )));
    }
    let kl = kl_dual(Dual2::var(a, 0), Dual2::var(b, 1), a0, b0, terms);
    if !kl.is_finite() {
        return Err(Error::Numeric(format!("non-finite KL at a={a} b={b}")));
    }
    Ok((kl.v, kl.d[0], kl.d[1]))
}

pub fn kl_kumaraswamy_beta(a: f64, b: f64, a0: f64, b0: f64, terms: usize) -> Result<f64> {
    kl_kumaraswamy_beta_grad(a, b, a0, b0, terms).map(|r| r.0)
}

/// Sum of per-stick KLs.
pub fn kl_sticks(a: &[f64], b: &[f64], a0: f64, b0: f64, terms: usize) -> Result<f64> {
    a.iter()
        .zip(b)
        .map(|(&a, &b)| kl_kumaraswamy_beta(a, b, a0, b0, terms))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sampler_fixed_points() {
        assert_relative_eq!(sample_kumaraswamy(1.0, 1.0, 0.3, 1e-6), 0.3, epsilon = 1e-14);
        assert_relative_eq!(sample_kumaraswamy(2.0, 1.0, 0.75, 1e-6), 0.75f64.sqrt(), epsilon = 1e-14);
        let lo = sample_kumaraswamy(0.5, 0.5, 0.0, 1e-6);
        let hi = sample_kumaraswamy(0.5, 0.5, 1.0, 1e-6);
        assert!(lo > 0.0 && hi < 1.0 + 1e-15 && lo.is_finite());
    }

    #[test]
    fn sampler_inverts_cdf() {
        for &(a, b) in &[(0.5, 0.5), (2.0, 3.0), (0.3, 7.0)] {
            for &u in &[0.01, 0.2, 0.5, 0.9] {
                let x = sample_kumaraswamy(a, b, u, 1e-6);
                assert_relative_eq!(kumaraswamy_cdf(x, a, b), u, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pathwise_derivatives_match_finite_differences() {
        for &(a, b, u) in &[(0.5, 0.5, 0.3), (2.0, 3.0, 0.8), (1.3, 0.7, 0.05)] {
            let d = sample_kumaraswamy_grad(a, b, u, 1e-6);
            let h = 1e-6;
            let fa = (sample_kumaraswamy(a + h, b, u, 1e-6) - sample_kumaraswamy(a - h, b, u, 1e-6)) / (2.0 * h);
            let fb = (sample_kumaraswamy(a, b + h, u, 1e-6) - sample_kumaraswamy(a, b - h, u, 1e-6)) / (2.0 * h);
            assert_relative_eq!(d.dnu_da, fa, max_relative = 1e-6);
            assert_relative_eq!(d.dnu_db, fb, max_relative = 1e-6);
        }
    }

    #[test]
    fn stick_break_examples() {
        assert_eq!(stick_break(&[0.5, 0.5]), vec![0.5, 0.25, 0.25]);
        let t = stick_break(&[0.2, 0.5, 0.25]);
        for (x, y) in t.iter().zip([0.2, 0.4, 0.1, 0.3]) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn stick_break_backward_matches_finite_differences() {
        let nu = [0.3, 0.7, 0.1, 0.95];
        let g_theta = [0.4, -1.0, 2.5, 0.3, -0.7];
        let mut g = [0.0; 4];
        stick_break_backward(&nu, &g_theta, &mut g);
        let f = |v: &[f64]| -> f64 { stick_break(v).iter().zip(&g_theta).map(|(t, g)| t * g).sum() };
        for k in 0..4 {
            let (mut p, mut m) = (nu, nu);
            p[k] += 1e-6;
            m[k] -= 1e-6;
            assert_relative_eq!(g[k], (f(&p) - f(&m)) / 2e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn mean_of_uniform_sticks() {
        assert_relative_eq!(kumaraswamy_mean(1.0, 1.0), 0.5, epsilon = 1e-14);
        // a=1: mean of Beta(1,b) = 1/(1+b)
        assert_relative_eq!(kumaraswamy_mean(1.0, 3.0), 0.25, epsilon = 1e-13);
    }

    #[test]
    fn kl_exact_cases() {
        assert!(kl_kumaraswamy_beta(1.0, 1.0, 1.0, 1.0, 10).unwrap().abs() < 1e-14);
        let v = kl_kumaraswamy_beta(1.0, 1.0, 0.5, 0.5, 10).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.ln() - 1.0, epsilon = 1e-5);
        assert!(kl_kumaraswamy_beta(0.0, 1.0, 0.5, 0.5, 10).is_err());
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        for &(a, b) in &[(0.5, 0.5), (1.7, 2.2), (3.0, 0.4), (0.9, 6.0)] {
            let (_, da, db) = kl_kumaraswamy_beta_grad(a, b, 0.5, 0.5, 10).unwrap();
            let f = |a, b| kl_kumaraswamy_beta(a, b, 0.5, 0.5, 10).unwrap();
            let h = 1e-5;
            assert_relative_eq!(da, (f(a + h, b) - f(a - h, b)) / (2.0 * h), max_relative = 1e-5);
            assert_relative_eq!(db, (f(a, b + h) - f(a, b - h)) / (2.0 * h), max_relative = 1e-5);
        }
    }

    #[test]
    fn kl_is_continuous_across_blend_boundaries() {
        // a(12+2b) crosses the integer 27 at a = 1.5 when b = 3
        let f = |a| kl_kumaraswamy_beta(a, 3.0, 0.5, 0.5, 10).unwrap();
        let (l, r) = (f(1.5 - 1e-12), f(1.5 + 1e-12));
        assert!((l - r).abs() < 1e-10, "{l} vs {r}");
    }
}
