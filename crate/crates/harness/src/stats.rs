use rand::Rng as _;
use reveal_core::rng::Rng;
use serde::Serialize;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap CI for the mean.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, level: f64, rng: &mut Rng) -> Interval {
    let m = mean(xs);
    if xs.len() < 2 || resamples == 0 {
        return Interval { mean: m, low: m, high: m };
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).sum::<f64>() / xs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Interval {
        mean: m,
        low: quantile(&means, a).min(m),
        high: quantile(&means, 1.0 - a).max(m),
    }
}

/// Bootstrap CI of the mean paired difference `a - b`.
pub fn paired_bootstrap_ci(a: &[f64], b: &[f64], resamples: usize, level: f64, rng: &mut Rng) -> Interval {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    bootstrap_ci(&d, resamples, level, rng)
}
