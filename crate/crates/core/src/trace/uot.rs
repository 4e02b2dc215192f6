//! Unbalanced optimal transport with KL-relaxed marginals, solved by
//! multiplicative majorization-minimization.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub plan: Array2<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub relaxation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration, starting with the initial plan.
    pub objective_trace: Vec<f64>,
}

impl TransportPlan {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }

    /// True if the objective never increased (up to rounding).
    pub fn is_monotone(&self) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    }
}

/// Generalized KL divergence `Σ x ln(x/y) − x + y` between nonnegative vectors.
pub fn kl_generalized(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| if xi > 0.0 { xi * (xi / yi).ln() - xi + yi } else { yi })
        .sum()
}

/// `⟨C, P⟩ + r·KL(P𝟙 ‖ a) + r·KL(Pᵀ𝟙 ‖ b)`.
pub fn uot_objective(cost: &Array2<f64>, plan: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>, r: f64) -> f64 {
    let linear = (cost * plan).sum();
    linear + r * kl_generalized(&plan.sum_axis(Axis(1)), a) + r * kl_generalized(&plan.sum_axis(Axis(0)), b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UotOptions {
    pub relaxation: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for UotOptions {
    fn default() -> Self {
        Self {
            relaxation: 0.09,
            max_iter: 1000,
            tol: 1e-9,
        }
    }
}

/// Each step is `P ← P ⊙ √(a bᵀ) ⊙ exp(−C/2r) ⊘ √(P𝟙 (Pᵀ𝟙)ᵀ)`, which minimizes a
/// separable majorizer of the objective and therefore never increases it.
pub fn uot_mm(cost: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>, opts: UotOptions) -> Result<TransportPlan> {
    let (n, m) = cost.dim();
    if a.len() != n || b.len() != m {
        return Err(Error::Input(format!(
            "marginals of length {}/{} for a {n}×{m} cost",
            a.len(),
            b.len()
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::Input("empty cost matrix".into()));
    }
    if cost.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::Input("cost entries must be finite and nonnegative".into()));
    }
    if a.iter().chain(b).any(|&x| !(x > 0.0)) {
        return Err(Error::Input("marginal masses must be positive".into()));
    }
    if !(opts.relaxation > 0.0) {
        return Err(Error::Config("relaxation must be positive".into()));
    }
    let r = opts.relaxation;
    let kernel = Array2::from_shape_fn((n, m), |(i, j)| (a[i] * b[j]).sqrt() * (-cost[[i, j]] / (2.0 * r)).exp());
    let mut plan = Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j]);
    let mut trace = vec![uot_objective(cost, &plan, a, b, r)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let rows = plan.sum_axis(Axis(1)).mapv(f64::sqrt);
        let cols = plan.sum_axis(Axis(0)).mapv(f64::sqrt);
        let mut change = 0.0f64;
        for ((i, j), p) in plan.indexed_iter_mut() {
            let denom = rows[i] * cols[j];
            let next = if denom > 0.0 { *p * kernel[[i, j]] / denom } else { 0.0 };
            change = change.max((next - *p).abs());
            *p = next;
        }
        if plan.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("transport plan became non-finite".into()));
        }
        trace.push(uot_objective(cost, &plan, a, b, r));
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("unbalanced OT stopped after {iterations} iterations without reaching tolerance");
    }
    Ok(TransportPlan {
        plan,
        a: a.clone(),
        b: b.clone(),
        relaxation: r,
        iterations,
        converged,
        objective_trace: trace,
    })
}

pub fn uniform_masses(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}
