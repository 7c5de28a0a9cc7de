//! Order-fixed reductions, so that sequential and parallel runs agree bit for bit.

use serde::Serialize;

/// Pairwise summation in a fixed tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Monte Carlo mean and standard error of a statistic at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub time: f64,
    pub mean: f64,
    pub sem: f64,
    pub n_replicas: usize,
}

impl MomentEstimate {
    pub fn from_samples(time: f64, xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n == 0 { f64::NAN } else { pairwise_sum(xs) / n as f64 };
        let sem = if n < 2 {
            f64::NAN
        } else {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        };
        MomentEstimate {
            time,
            mean,
            sem,
            n_replicas: n,
        }
    }

    /// `|mean - target| <= k * sem`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.sem
    }
}
