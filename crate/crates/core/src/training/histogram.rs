use serde::{Deserialize, Serialize};

pub const DEFAULT_BINS: usize = 50;
pub const UPPER_PERCENTILE: f64 = 99.5;

/// Histogram of gradient magnitudes for one layer at one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradHistogram {
    pub update: usize,
    pub layer: String,
    /// `counts.len() + 1` strictly increasing edges starting at 0.
    pub edges: Vec<f64>,
    /// Values beyond the last edge land in the last bin.
    pub counts: Vec<u64>,
    pub median_abs: f64,
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let rank = pct / 100.0 * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
        }
    }
}

impl GradHistogram {
    /// `bins` uniform bins over `[0, p99.5(|g|)]`.
    pub fn from_gradients(update: usize, layer: &str, grads: &[f32], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut mags: Vec<f64> = grads.iter().map(|g| f64::from(g.abs())).collect();
        mags.sort_by(f64::total_cmp);
        let upper = percentile(&mags, UPPER_PERCENTILE);
        let upper = if upper > 0.0 { upper } else { f64::MIN_POSITIVE * bins as f64 };
        let width = upper / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| i as f64 * width).collect();
        edges.push(upper);
        let mut counts = vec![0u64; bins];
        for &m in &mags {
            let bin = ((m / width) as usize).min(bins - 1);
            counts[bin] += 1;
        }
        Self {
            update,
            layer: layer.to_string(),
            edges,
            counts,
            median_abs: percentile(&mags, 50.0),
        }
    }
}
