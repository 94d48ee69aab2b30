use serde::{Deserialize, Serialize};

/// Error statistics of one scheme over a set of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    /// Trials where the scheme produced no estimate.
    pub n_failed: usize,
    pub rmse: f64,
    pub mean_error: f64,
    pub p95_error: f64,
    pub max_error: f64,
    /// Nearest-rank quantiles at 0, 1, ..., 100 percent.
    pub cdf: Vec<f64>,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(q/100 * n)`, with rank 1 for q = 0.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let rank = (q * n as f64 / 100.0).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

impl MetricsSummary {
    pub fn from_errors(errors: &[f64], n_failed: usize) -> Self {
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let (rmse, mean_error) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let k = n as f64;
            ((sorted.iter().map(|e| e * e).sum::<f64>() / k).sqrt(), sorted.iter().sum::<f64>() / k)
        };
        Self {
            n,
            n_failed,
            rmse,
            mean_error,
            p95_error: nearest_rank(&sorted, 95.0),
            max_error: sorted.last().copied().unwrap_or(f64::NAN),
            cdf: (0..=100).map(|q| nearest_rank(&sorted, q as f64)).collect(),
        }
    }
}

/// Mean and sample standard error of per-seed values.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_arithmetic() {
        let m = MetricsSummary::from_errors(&[3.0, 4.0], 0);
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.mean_error, 3.5);
        assert_eq!(m.p95_error, 4.0);
        let one = MetricsSummary::from_errors(&[2.5], 1);
        assert_eq!((one.rmse, one.mean_error, one.p95_error, one.n_failed), (2.5, 2.5, 2.5, 1));
        assert!(one.cdf.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn nearest_rank_cases() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95.0), 19.0);
        assert_eq!(nearest_rank(&v, 100.0), 20.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 5.0), 1.0);
        assert_eq!(nearest_rank(&v, 5.1), 2.0);
        assert!(nearest_rank(&[], 50.0).is_nan());
    }

    proptest! {
        #[test]
        fn matches_naive_reference(errors in proptest::collection::vec(0.0f64..500.0, 1..200)) {
            let m = MetricsSummary::from_errors(&errors, 0);
            let n = errors.len();
            let naive_rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
            prop_assert!((m.rmse - naive_rmse).abs() <= 1e-9 * naive_rmse.max(1.0));
            // smallest value with at least 95 % of the sample at or below it
            let mut s = errors.clone();
            s.sort_by(f64::total_cmp);
            let naive_p95 = s.iter().copied().find(|&v| {
                s.iter().filter(|&&w| w <= v).count() * 100 >= 95 * n
            }).unwrap();
            prop_assert_eq!(m.p95_error, naive_p95);
            prop_assert!(m.cdf.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(m.rmse + 1e-12 >= m.mean_error);
        }
    }
}
