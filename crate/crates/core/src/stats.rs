//! Order-independent reductions and Monte Carlo moment summaries.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation. The result depends only on the order of
/// `xs`, never on how work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Mean and variance of a sample, each with a standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub se_mean: f64,
    pub var: f64,
    pub se_var: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    let m = mean(xs);
    let d2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let d4: Vec<f64> = d2.iter().map(|d| d * d).collect();
    let nf = n as f64;
    let var = pairwise_sum(&d2) / (nf - 1.0);
    let m4 = pairwise_sum(&d4) / nf;
    // large-sample standard error of the sample variance
    let se_var = ((m4 - var * var).max(0.0) / nf).sqrt();
    Summary { n, mean: m, se_mean: (var / nf).sqrt(), var, se_var }
}

/// Sample covariance with the standard error of the mean of the centred
/// products.
pub fn covariance(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let p: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let nf = xs.len() as f64;
    let cov = pairwise_sum(&p) / (nf - 1.0);
    let mp = mean(&p);
    let dp: Vec<f64> = p.iter().map(|v| (v - mp).powi(2)).collect();
    let se = (pairwise_sum(&dp) / (nf - 1.0) / nf).sqrt();
    (cov, se)
}
