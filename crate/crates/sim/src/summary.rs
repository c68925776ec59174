//! Percentiles, CDF tables and Monte Carlo standard errors.
//!
//! Percentiles use linear interpolation between order statistics: the
//! level-`q` value of `n` sorted samples sits at rank `q·(n−1)`.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SummaryError {
    #[error("no samples to summarize")]
    Empty,
}

/// Level-`q` percentile (`q ∈ [0, 1]`) of ascending `sorted` samples.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn percentile(samples: &[f64], q: f64) -> Result<f64, SummaryError> {
    if samples.is_empty() {
        return Err(SummaryError::Empty);
    }
    Ok(percentile_sorted(&sorted(samples), q))
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Standard error of the mean of per-group statistics.
fn std_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Distribution summary of one SE sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeStats {
    pub n_samples: usize,
    pub mean: f64,
    pub median: f64,
    /// 95%-likely SE: the 5th percentile.
    pub p5: f64,
    pub p95: f64,
    /// Spread of the per-drop 5th percentiles over drops, divided by √drops.
    pub p5_std_error: f64,
    pub median_std_error: f64,
    /// `(level, value)` pairs at levels 0, 0.01, …, 1.
    pub cdf: Vec<(f64, f64)>,
}

impl SeStats {
    /// `groups` holds one sample set per drop.
    pub fn from_groups(groups: &[Vec<f64>]) -> Result<Self, SummaryError> {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        if all.is_empty() {
            return Err(SummaryError::Empty);
        }
        let s = sorted(&all);
        let per_drop = |q: f64| -> Vec<f64> {
            groups.iter().filter(|g| !g.is_empty()).map(|g| percentile_sorted(&sorted(g), q)).collect()
        };
        let cdf = (0..=100)
            .map(|i| {
                let q = f64::from(i) / 100.0;
                (q, percentile_sorted(&s, q))
            })
            .collect();
        Ok(Self {
            n_samples: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: percentile_sorted(&s, 0.5),
            p5: percentile_sorted(&s, 0.05),
            p95: percentile_sorted(&s, 0.95),
            p5_std_error: std_error(&per_drop(0.05)),
            median_std_error: std_error(&per_drop(0.5)),
            cdf,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn median_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.5);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 1.0).unwrap(), 4.0);
    }

    #[test]
    fn constant_samples() {
        let s = SeStats::from_groups(&[vec![2.0; 7], vec![2.0; 3]]).unwrap();
        assert_eq!((s.p5, s.median, s.p95, s.mean), (2.0, 2.0, 2.0, 2.0));
        assert!(s.cdf.iter().all(|&(_, v)| v == 2.0));
        assert_eq!(s.p5_std_error, 0.0);
    }

    #[test]
    fn uniform_fifth_percentile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let p5 = percentile(&xs, 0.05).unwrap();
        assert!((p5 - 0.05).abs() <= 0.02);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(percentile(&[], 0.5), Err(SummaryError::Empty));
        assert!(SeStats::from_groups(&[vec![]]).is_err());
    }
}
