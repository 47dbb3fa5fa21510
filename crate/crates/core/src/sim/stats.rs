/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Half width of the one-sigma Wilson score interval for `k` successes in `n`.
pub fn wilson_half_width(k: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let n = n as f64;
    let p = k as f64 / n;
    (p * (1.0 - p) / n + 1.0 / (4.0 * n * n)).sqrt() / (1.0 + 1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_of_known_sample() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wilson_stays_positive_at_zero_errors() {
        let hw = wilson_half_width(0, 100);
        assert!(hw > 0.0 && (hw - 0.5 / 101.0).abs() < 1e-12);
        // Approaches the normal approximation for large n.
        let hw = wilson_half_width(5000, 1_000_000);
        assert!((hw - (0.005f64 * 0.995 / 1e6).sqrt()).abs() < 1e-7);
    }
}
