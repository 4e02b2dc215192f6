use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn harmonic_mean(tc: f64, td: f64) -> Result<f64> {
    if !(tc > 0.0 && td > 0.0) {
        return Err(Error::Input(format!("harmonic mean needs positive inputs, got ({tc}, {td})")));
    }
    Ok(2.0 * tc * td / (tc + td))
}

/// Per-initialization errors `e_i = |K_pred(i) − K_real|` and their spread
/// `max e − min e`.
pub fn dispersion_delta(k_preds: &[f64], k_real: f64) -> Result<(Vec<f64>, f64)> {
    if k_preds.len() < 2 {
        return Err(Error::Input("dispersion needs at least two initializations".into()));
    }
    let e: Vec<f64> = k_preds.iter().map(|k| (k - k_real).abs()).collect();
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = e.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((e, max - min))
}

pub fn p_metric(delta: f64, h: f64) -> f64 {
    delta * (1.0 - h)
}

/// Metrics of one run (one `K_init`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub k_init: usize,
    pub tc: f64,
    pub td: f64,
    /// `None` when TC or TD is not positive.
    pub h: Option<f64>,
    pub k_pred_series: Vec<usize>,
    pub k_pred_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub runs: Vec<RunMetrics>,
    pub k_real_series: Option<Vec<usize>>,
    pub k_real_mean: Option<f64>,
    pub errors: Option<Vec<f64>>,
    pub delta: Option<f64>,
    /// Arithmetic mean of the per-run H values.
    pub h_mean: Option<f64>,
    pub p: Option<f64>,
}

impl MetricReport {
    /// Assembles the cross-run fields. Δ and P stay `None` without ground truth
    /// or with fewer than two runs.
    pub fn assemble(runs: Vec<RunMetrics>, k_real_series: Option<Vec<usize>>) -> Self {
        let k_real_mean = k_real_series.as_ref().map(|s| mean_usize(s));
        let h_mean = (!runs.is_empty() && runs.iter().all(|r| r.h.is_some()))
            .then(|| runs.iter().map(|r| r.h.unwrap()).sum::<f64>() / runs.len() as f64);
        let preds: Vec<f64> = runs.iter().map(|r| r.k_pred_mean).collect();
        let disp = k_real_mean.and_then(|k| dispersion_delta(&preds, k).ok());
        let (errors, delta) = match disp {
            Some((e, d)) => (Some(e), Some(d)),
            None => (None, None),
        };
        let p = delta.zip(h_mean).map(|(d, h)| p_metric(d, h));
        Self {
            runs,
            k_real_series,
            k_real_mean,
            errors,
            delta,
            h_mean,
            p,
        }
    }
}

pub fn mean_usize(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<usize>() as f64 / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_mean(1.0, 1.0).unwrap(), 1.0);
        assert!((harmonic_mean(0.8, 0.9).unwrap() - 1.44 / 1.7).abs() < 1e-15);
        assert!((harmonic_mean(0.37, 0.37).unwrap() - 0.37).abs() < 1e-15);
        assert!(harmonic_mean(0.0, 0.5).is_err());
        assert!(harmonic_mean(-0.1, 0.5).is_err());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(dispersion_delta(&[3.0, 3.0], 3.0).unwrap().1, 0.0);
        let (_, d) = dispersion_delta(&[4.0, 4.0, 2.0, 6.0], 3.0).unwrap();
        assert_eq!(d, 2.0);
        assert!(dispersion_delta(&[1.0], 1.0).is_err());
    }

    #[test]
    fn p_examples() {
        assert_eq!(p_metric(0.0, 0.3), 0.0);
        assert_eq!(p_metric(5.0, 1.0), 0.0);
        assert!((p_metric(2.0, 0.84706) - 0.30588).abs() < 1e-12);
    }

    #[test]
    fn partial_report_without_truth() {
        let run = RunMetrics {
            k_init: 15,
            tc: 0.1,
            td: 0.9,
            h: Some(0.18),
            k_pred_series: vec![5, 5],
            k_pred_mean: 5.0,
        };
        let r = MetricReport::assemble(vec![run.clone()], None);
        assert!(r.delta.is_none() && r.p.is_none());
        let r = MetricReport::assemble(vec![run.clone(), RunMetrics { k_pred_mean: 7.0, ..run }], Some(vec![5, 5]));
        assert_eq!(r.delta, Some(2.0));
        assert!((r.p.unwrap() - 2.0 * 0.82).abs() < 1e-12);
    }
}
