//! Statistical machinery for the convergence checks: Kolmogorov–Smirnov
//! tests with asymptotic p-values, empirical covariance, chi-square
//! goodness-of-fit, and the maximal deviation of normalized arrivals from
//! the uniform grid.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poisson_clock::sample_arrivals;
use crate::rng::{uniform_open01, RngStream};
use crate::special::{chi_square_sf, kolmogorov_sf};
use serde::Serialize;

/// A batch of scalar observations plus provenance, the unit every test
/// report refers back to.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub scenario: String,
    pub stream: RngStream,
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, scenario: impl Into<String>, stream: RngStream) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySequence("sample batch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample batch contains non-finite values"));
        }
        Ok(Self {
            values,
            scenario: scenario.into(),
            stream,
        })
    }
}

/// KS statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// One-sample KS test of `sample` against a reference CDF.
///
/// The statistic is the exact sup-distance between the empirical CDF and the
/// reference; the p-value uses the asymptotic Kolmogorov distribution with
/// the small-sample √n correction, adequate for the n >= 20 this crate uses.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsOutcome> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::invalid(format!(
            "asymptotic KS p-value needs n >= 20, got {n}"
        )));
    }
    let xs = sorted(sample);
    let nf = n as f64;
    let mut d = 0.0f64;
    let mut prev_f = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) || f < prev_f - 1e-12 {
            return Err(Error::invalid(
                "reference CDF must be monotone with values in [0,1]",
            ));
        }
        prev_f = f;
        d = d.max((f - i as f64 / nf).abs());
        d = d.max(((i + 1) as f64 / nf - f).abs());
    }
    if prev_f <= 0.0 {
        return Err(Error::invalid("degenerate reference CDF"));
    }
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    Ok(KsOutcome {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        sample_size: n,
    })
}

/// One-sample KS test on a validated batch; same contract as [`ks_test`].
pub fn ks_test_batch<F: Fn(f64) -> f64>(batch: &SampleBatch, cdf: F) -> Result<KsOutcome> {
    ks_test(&batch.values, cdf)
}

/// Two-sample KS test with the asymptotic p-value at the effective sample
/// size nm/(n+m).
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> Result<KsOutcome> {
    if a.len() < 20 || b.len() < 20 {
        return Err(Error::invalid("two-sample KS needs both sizes >= 20"));
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsOutcome {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        sample_size: n.min(m),
    })
}

/// Unbiased sample covariance of a set of vectors.
pub fn empirical_cov(samples: &[Vec<f64>]) -> Result<Matrix> {
    if samples.len() < 2 {
        return Err(Error::invalid("covariance needs at least two samples"));
    }
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
        for i in 0..d {
            mean[i] += s[i];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = Matrix::zeros(d);
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in 0..d {
                cov[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            cov[(i, j)] /= n - 1.0;
        }
    }
    Ok(cov)
}

/// Sample mean and variance (unbiased) of a scalar batch.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `max_k |Γ_k/Γ_n − k/n|` from a fresh arrival sample.
pub fn mn_statistic(n: usize, stream: RngStream) -> Result<f64> {
    let arr = sample_arrivals(n, stream)?;
    let gn = arr.arrivals[n - 1];
    let mut m = 0.0f64;
    for (k, &g) in arr.arrivals.iter().enumerate() {
        m = m.max((g / gn - (k + 1) as f64 / n as f64).abs());
    }
    Ok(m)
}

/// The conditional-law twin of [`mn_statistic`]: given Γ_n, the normalized
/// arrivals Γ_1/Γ_n .. Γ_{n−1}/Γ_n are the order statistics of n−1 uniforms
/// (the k = n term vanishes), so this draws n−1 sorted uniforms and takes
/// the same maximal deviation from k/n.
pub fn mn_uniform_order_statistic(n: usize, stream: RngStream) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySequence("order statistic".into()));
    }
    let mut rng = stream.rng();
    let mut u: Vec<f64> = (0..n - 1).map(|_| uniform_open01(&mut rng)).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut m = 0.0f64;
    for (k, &x) in u.iter().enumerate() {
        m = m.max((x - (k + 1) as f64 / n as f64).abs());
    }
    Ok(m)
}

/// Chi-square goodness of fit for counts against expected cell
/// probabilities. Returns the statistic and the survival-function p-value
/// with `cells − 1` degrees of freedom.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<(f64, f64)> {
    if counts.len() != probs.len() {
        return Err(Error::LengthMismatch(format!(
            "{} counts vs {} probabilities",
            counts.len(),
            probs.len()
        )));
    }
    if counts.len() < 2 {
        return Err(Error::invalid("need at least two cells"));
    }
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            return Err(Error::invalid("cell probabilities must be positive"));
        }
        let expect = total as f64 * p;
        stat += (c as f64 - expect) * (c as f64 - expect) / expect;
    }
    let dof = (counts.len() - 1) as f64;
    Ok((stat, chi_square_sf(stat, dof)))
}

/// Median of a batch (by sorting a copy).
pub fn median(values: &[f64]) -> f64 {
    let v = sorted(values);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;
    use crate::special::normal_cdf;

    #[test]
    fn ks_single_point_mass_against_uniform() {
        // a batch of 20 copies of 0.5 against U[0,1]: D = 0.5 exactly
        let sample = vec![0.5; 20];
        let out = ks_test(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((out.statistic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_plotting_positions_have_small_statistic() {
        let n = 200;
        let sample: Vec<f64> = (1..=n).map(|i| i as f64 / (n as f64 + 1.0)).collect();
        let out = ks_test(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(out.statistic <= 1.0 / (n as f64 + 1.0) + 1e-12);
        assert!(out.p_value > 0.999);
    }

    #[test]
    fn ks_statistic_bounds_and_zero_iff_on_reference() {
        let sample: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let out = ks_test(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(out.statistic > 0.0 && out.statistic <= 1.0);
        assert!(out.p_value >= 0.0 && out.p_value <= 1.0);
    }

    #[test]
    fn ks_calibration_against_standard_normal() {
        // 20 fixed seeds, 10⁴ draws each; at most one batch below p = 0.01.
        let mut failures = 0;
        for seed in 0..20u64 {
            let mut rng = RngStream::new(1000 + seed, 0).rng();
            let sample: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
            let out = ks_test(&sample, normal_cdf).unwrap();
            if out.p_value <= 0.01 {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 20 calibration batches failed");
    }

    #[test]
    fn ks_two_sample_same_distribution() {
        let mut rng = RngStream::new(77, 0).rng();
        let a: Vec<f64> = (0..5000).map(|_| standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..5000).map(|_| standard_normal(&mut rng)).collect();
        let out = ks_test_two_sample(&a, &b).unwrap();
        assert!(out.p_value > 0.01, "p {}", out.p_value);
        // and a shifted sample is rejected
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let bad = ks_test_two_sample(&a, &c).unwrap();
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn ks_rejects_tiny_samples_and_bad_cdf() {
        assert!(ks_test(&[0.1; 5], |x| x).is_err());
        let sample = vec![0.5; 20];
        assert!(ks_test(&sample, |_| 0.0).is_err()); // degenerate
    }

    #[test]
    fn covariance_trivia() {
        let z = empirical_cov(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(z.max_abs_diff(&Matrix::zeros(2)) < 1e-15);

        let v = vec![3.0, -4.0];
        let minus: Vec<f64> = v.iter().map(|x| -x).collect();
        let c = empirical_cov(&[v.clone(), minus]).unwrap();
        // unbiased with n = 2: (vvᵀ + vvᵀ)/(2−1) = 2vvᵀ
        let mut expect = Matrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                expect[(i, j)] = 2.0 * v[i] * v[j];
            }
        }
        assert!(c.max_abs_diff(&expect) < 1e-12);
        assert!(empirical_cov(&[vec![1.0]]).is_err());
    }

    #[test]
    fn covariance_of_uniform_sphere_matches_closed_form() {
        use crate::direction_law::{covariance_of, sample_direction, DirectionLaw};
        let law = DirectionLaw::uniform(3).unwrap();
        let mut rng = RngStream::new(21, 0).rng();
        let samples: Vec<Vec<f64>> = (0..100_000)
            .map(|_| sample_direction(&law, &mut rng))
            .collect();
        let c = empirical_cov(&samples).unwrap();
        assert!(c.max_abs_diff(&covariance_of(&law)) < 0.01);
    }

    #[test]
    fn mn_statistic_n_one_is_zero() {
        assert_eq!(mn_statistic(1, RngStream::new(5, 0)).unwrap(), 0.0);
    }

    #[test]
    fn mn_statistic_range_and_scaling() {
        let med = |n: usize, seed: u64| {
            let vals: Vec<f64> = (0..1000)
                .map(|r| mn_statistic(n, RngStream::new(seed, r)).unwrap())
                .collect();
            median(&vals)
        };
        let m100 = med(100, 30);
        let m10k = med(10_000, 31);
        assert!(m100 > m10k);
        // Kolmogorov scaling: medians shrink like 1/√n, i.e. ratio ≈ 10.
        let ratio = m100 / m10k;
        assert!(ratio > 5.0 && ratio < 20.0, "ratio {ratio}");
        for &v in &[m100, m10k] {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn mn_matches_uniform_order_statistics_in_law() {
        let n = 100;
        let replicas = 10_000u64;
        let a: Vec<f64> = (0..replicas)
            .map(|r| mn_statistic(n, RngStream::new(40, r)).unwrap())
            .collect();
        let b: Vec<f64> = (0..replicas)
            .map(|r| mn_uniform_order_statistic(n, RngStream::new(41, r)).unwrap())
            .collect();
        let out = ks_test_two_sample(&a, &b).unwrap();
        assert!(out.p_value > 0.01, "p {}", out.p_value);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let counts = vec![100u64; 10];
        let probs = vec![0.1; 10];
        let (stat, p) = chi_square_gof(&counts, &probs).unwrap();
        assert!(stat.abs() < 1e-12);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
