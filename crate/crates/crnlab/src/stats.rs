//! Small statistics toolkit: means with standard errors, batch means,
//! one-sample Kolmogorov–Smirnov tests and total-variation distance.

use std::collections::BTreeMap;

use serde::Serialize;

/// Sample mean with its standard error (sample standard deviation / √n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return MeanSe { mean, stderr: f64::NAN, n };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, stderr: (var / n as f64).sqrt(), n }
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean_se(xs);
    m.stderr * (m.n as f64).sqrt()
}

/// Standard error of a time average from equal-length batch averages.
pub fn batch_means(batch_averages: &[f64]) -> MeanSe {
    mean_se(batch_averages)
}

/// Result of a one-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// D = sup |F_n − F| against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test using Stephens' small-sample correction
/// λ = (√n + 0.12 + 0.11/√n) D.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let n = sample.len();
    let d = ks_statistic(sample, cdf);
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    KsResult { statistic: d, p_value: kolmogorov_survival(lambda), n }
}

/// Exponential CDF with the given rate.
pub fn exp_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }
}

/// Total-variation distance ½ Σ |p − q| between two (normalized) discrete
/// distributions over the union of their keys.
pub fn total_variation<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Normalizes a non-negative map to total mass 1 (unchanged if empty or zero).
pub fn normalize<K: Ord + Clone>(m: &BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    let total: f64 = m.values().sum();
    if total <= 0.0 {
        return m.clone();
    }
    m.iter().map(|(k, v)| (k.clone(), v / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr_by_hand() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // variance 5/3, stderr sqrt(5/12)
        assert!((m.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Classical critical values: Q(1.358) ≈ 0.05, Q(1.628) ≈ 0.01.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 2e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_statistic_small_sample() {
        // Uniform CDF, sample {0.1, 0.4, 0.7}: D = max(1/3-0.1, 0.4-1/3, 2/3-0.4, 0.7-2/3, 1-0.7) = 0.3.
        let d = ks_statistic(&[0.7, 0.1, 0.4], |x| x.clamp(0.0, 1.0));
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ks_detects_wrong_rate() {
        // Deterministic quantiles of Exp(1).
        let n = 2000;
        let xs: Vec<f64> = (0..n).map(|i| -((1.0 - (i as f64 + 0.5) / n as f64).ln())).collect();
        assert!(ks_test(&xs, exp_cdf(1.0)).passes(0.01));
        assert!(!ks_test(&xs, exp_cdf(1.3)).passes(0.01));
    }

    #[test]
    fn tv_distance() {
        let p: BTreeMap<u32, f64> = [(0, 0.5), (1, 0.5)].into();
        let q: BTreeMap<u32, f64> = [(1, 0.5), (2, 0.5)].into();
        assert!((total_variation(&p, &q) - 0.5).abs() < 1e-15);
        assert_eq!(total_variation(&p, &p), 0.0);
    }
}
