//! Exact samplers for the three scaling limits of the clocked flight, plus
//! the coupled pre-limit/limit construction used for the pathwise bound in
//! the exponential regime.

use crate::direction_law::{sample_direction, DirectionLaw};
use crate::error::{Error, Result};
use crate::flight_path::{sup_distance, PolylinePath};
use crate::linalg::Matrix;
use crate::rng::{standard_exponential, standard_normal, RngStream};
use rand::Rng;

/// Parameters of the power-clock Gaussian limit
/// `Y(t) = α√(2/(2α−1)) K^{1/2} w(t^{(2α−1)/α})`.
#[derive(Debug, Clone)]
pub struct PowerLimitSpec {
    pub alpha: f64,
    pub covariance: Matrix,
    pub dim: usize,
}

impl PowerLimitSpec {
    pub fn new(alpha: f64, covariance: Matrix) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.5 {
            return Err(Error::invalid(format!(
                "alpha must exceed 1/2, got {alpha}"
            )));
        }
        let dim = covariance.dim();
        if !covariance.is_symmetric(1e-9) {
            return Err(Error::invalid("covariance must be symmetric"));
        }
        if covariance.trace() > 1.0 + 1e-9 {
            return Err(Error::invalid(format!(
                "covariance trace {} exceeds 1: not a unit-sphere law",
                covariance.trace()
            )));
        }
        Ok(Self {
            alpha,
            covariance,
            dim,
        })
    }

    /// Exponent of the Brownian time change, `(2α−1)/α`.
    pub fn time_change_exponent(&self) -> f64 {
        (2.0 * self.alpha - 1.0) / self.alpha
    }
}

/// `Var <Y(t), x> = (2α²/(2α−1)) t^{(2α−1)/α} xᵀKx` for a unit vector x.
pub fn power_marginal_variance(t: f64, x: &[f64], alpha: f64, covariance: &Matrix) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.5 {
        return Err(Error::invalid(format!(
            "alpha must exceed 1/2, got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t {t} outside [0,1]")));
    }
    let nx = crate::linalg::norm(x);
    if (nx - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("projection vector norm {nx} != 1")));
    }
    let c = 2.0 * alpha * alpha / (2.0 * alpha - 1.0);
    Ok(c * t.powf((2.0 * alpha - 1.0) / alpha) * covariance.quadratic_form(x))
}

/// Exact Gaussian sample of the power-clock limit on a time grid, via
/// independent Brownian increments under the deterministic time change.
/// The grid must be sorted inside [0, 1] and end at 1; a leading 0 knot is
/// added if missing.
pub fn sample_power_limit<R: Rng>(
    spec: &PowerLimitSpec,
    grid: &[f64],
    rng: &mut R,
) -> Result<PolylinePath> {
    if grid.is_empty() {
        return Err(Error::EmptySequence("time grid".into()));
    }
    let mut times = Vec::with_capacity(grid.len() + 1);
    times.push(0.0);
    for &t in grid {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("grid point {t} outside [0,1]")));
        }
        if t > 0.0 {
            if let Some(&last) = times.last() {
                if t <= last {
                    return Err(Error::NonMonotone("grid must increase strictly".into()));
                }
            }
            times.push(t);
        }
    }
    if *times.last().unwrap() != 1.0 {
        return Err(Error::invalid("grid must end at t = 1"));
    }
    let root = spec.covariance.sqrt_psd()?;
    let scale = spec.alpha * (2.0 / (2.0 * spec.alpha - 1.0)).sqrt();
    let expo = spec.time_change_exponent();
    let mut values = Vec::with_capacity(times.len());
    values.push(vec![0.0; spec.dim]);
    let mut pos = vec![0.0; spec.dim];
    let mut prev_tau = 0.0;
    for &t in times.iter().skip(1) {
        let tau = t.powf(expo);
        let sd = (tau - prev_tau).max(0.0).sqrt();
        prev_tau = tau;
        let z: Vec<f64> = (0..spec.dim).map(|_| standard_normal(rng) * sd).collect();
        let step = root.matvec(&z);
        for (p, s) in pos.iter_mut().zip(&step) {
            *p += scale * s;
        }
        values.push(pos.clone());
    }
    PolylinePath::new(times, values)
}

/// Endpoint `Y(1)` by direct discretization of the stochastic integral
/// `√(2α) ∫ s^{(α−1)/(2α)} dW(s)` with midpoint kernel evaluation — the
/// independent cross-check of the time-change route.
pub fn sample_power_limit_kernel_endpoint<R: Rng>(
    spec: &PowerLimitSpec,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    let root = spec.covariance.sqrt_psd()?;
    let kernel_pow = (spec.alpha - 1.0) / (2.0 * spec.alpha);
    let dt = 1.0 / steps as f64;
    let amp = (2.0 * spec.alpha).sqrt();
    let mut acc = vec![0.0; spec.dim];
    for i in 0..steps {
        let s_mid = (i as f64 + 0.5) * dt;
        let k = amp * s_mid.powf(kernel_pow) * dt.sqrt();
        let z: Vec<f64> = (0..spec.dim).map(|_| standard_normal(rng) * k).collect();
        let step = root.matvec(&z);
        for (a, s) in acc.iter_mut().zip(&step) {
            *a += s;
        }
    }
    Ok(acc)
}

/// Parameters of the exponential-clock limit and its truncation budget.
#[derive(Debug, Clone)]
pub struct ExpLimitSpec {
    pub beta: f64,
    pub law: DirectionLaw,
    /// The infinite series is cut once `e^{−βΓ_{k−1}}` drops below this;
    /// every comparison carries the resulting `2·tol` error budget.
    pub truncation_tol: f64,
}

impl ExpLimitSpec {
    pub fn new(beta: f64, law: DirectionLaw, truncation_tol: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !truncation_tol.is_finite() || truncation_tol <= 0.0 || truncation_tol >= 1.0 {
            return Err(Error::invalid(format!(
                "truncation tolerance must lie in (0,1), got {truncation_tol}"
            )));
        }
        Ok(Self {
            beta,
            law,
            truncation_tol,
        })
    }
}

/// The coupled pair: the n-segment pre-limit path, the (truncated) limit
/// path built from the same draws, and the pathwise bound `2 e^{−βΓ_{n−1}}`.
#[derive(Debug, Clone)]
pub struct CoupledExpLimit {
    pub pre_limit: PolylinePath,
    pub limit: PolylinePath,
    pub bound: f64,
    pub truncation_tol: f64,
}

impl CoupledExpLimit {
    /// `sup |Y − Y_n|` against the bound plus the truncation budget.
    pub fn coupling_holds(&self) -> Result<bool> {
        let d = sup_distance(&self.pre_limit, &self.limit)?;
        Ok(d <= self.bound + 2.0 * self.truncation_tol)
    }
}

/// Sample the coupled construction.
///
/// Both paths are driven by one stream: pairs `(γ_i, ε_i)` are drawn in
/// index order, the pre-limit path uses the first n of them in the reversed
/// representation with vertices at `e^{−βΓ_{k−1}}`, and the limit path uses
/// the same draws continued until `e^{−βΓ_{k−1}}` falls below the
/// truncation tolerance (tail set to zero there).
pub fn sample_exp_limit_coupled(
    spec: &ExpLimitSpec,
    n: usize,
    stream: RngStream,
) -> Result<CoupledExpLimit> {
    if n < 2 {
        return Err(Error::invalid("coupled construction needs n >= 2"));
    }
    let mut rng = stream.rng();
    let dim = spec.law.dim();
    // exp(−β Γ_{i−1}) for i = 1, 2, ...; e0 = exp(0) = 1.
    let mut decay = vec![1.0f64];
    let mut eps: Vec<Vec<f64>> = vec![sample_direction(&spec.law, &mut rng)];
    let mut gamma_acc = 0.0;
    loop {
        gamma_acc += standard_exponential(&mut rng);
        let d = (-spec.beta * gamma_acc).exp();
        decay.push(d);
        eps.push(sample_direction(&spec.law, &mut rng));
        if d < spec.truncation_tol && decay.len() > n {
            break;
        }
    }
    // decay[k-1] = e^{−βΓ_{k−1}}; m is the first index with decay < tol.
    let m = decay.len(); // decay[m-1] < tol

    // Limit path vertices: value(t_k) = Σ_{i=k}^{m−1} ε_i w_i with
    // w_i = decay[i−1] − decay[i]; truncated vertex at decay[m−1] is zero.
    // Pre-limit vertices: value(τ_{n,k}) = Σ_{i=k}^{n−1} ε_i w_i
    //                                      + ε_n decay[n−1].
    // Both are accumulated downward over the *same* addends from different
    // starting points (the limit's tail Σ_{i>=n} vs the pre-limit's closing
    // segment), so the two floating-point sums coincide to a few ulps and
    // the pathwise coupling bound is checkable at machine precision.
    let mut acc_limit = vec![0.0f64; dim];
    let mut limit_times = vec![0.0, decay[m - 1]];
    let mut limit_values = vec![vec![0.0; dim], vec![0.0; dim]];
    for k in ((n + 1).max(2)..=m).rev() {
        // indices above the pre-limit's range: limit path only
        let w = decay[k - 2] - decay[k - 1];
        for (a, e) in acc_limit.iter_mut().zip(&eps[k - 2]) {
            *a += e * w;
        }
        limit_times.push(decay[k - 2]);
        limit_values.push(acc_limit.clone());
    }
    let mut acc_pre: Vec<f64> = eps[n - 1].iter().map(|e| e * decay[n - 1]).collect();
    let mut pre_times = vec![0.0, decay[n - 1]];
    let mut pre_values = vec![vec![0.0; dim], acc_pre.clone()];
    for k in (1..n).rev() {
        let w = decay[k - 1] - decay[k];
        for ((a, p), e) in acc_limit
            .iter_mut()
            .zip(acc_pre.iter_mut())
            .zip(&eps[k - 1])
        {
            let add = e * w;
            *a += add;
            *p += add;
        }
        limit_times.push(decay[k - 1]);
        limit_values.push(acc_limit.clone());
        pre_times.push(decay[k - 1]);
        pre_values.push(acc_pre.clone());
    }
    let pre_limit = PolylinePath::new(pre_times, pre_values)?;
    let limit = PolylinePath::new(limit_times, limit_values)?;

    Ok(CoupledExpLimit {
        pre_limit,
        limit,
        bound: 2.0 * decay[n - 1],
        truncation_tol: spec.truncation_tol,
    })
}

/// The degenerate (super-exponential) limit: the straight line `t ↦ ε t`.
pub fn sample_degenerate_limit<R: Rng>(law: &DirectionLaw, rng: &mut R) -> Result<PolylinePath> {
    let eps = sample_direction(law, rng);
    let dim = eps.len();
    PolylinePath::new(vec![0.0, 1.0], vec![vec![0.0; dim], eps])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::special::normal_cdf;
    use crate::stats::{ks_test, ks_test_two_sample, mean_and_variance, median};

    fn uniform_cov(d: usize) -> Matrix {
        Matrix::scaled_identity(d, 1.0 / d as f64)
    }

    #[test]
    fn marginal_variance_closed_values() {
        let k2 = uniform_cov(2);
        let e1 = [1.0, 0.0];
        assert_eq!(power_marginal_variance(0.0, &e1, 1.0, &k2).unwrap(), 0.0);
        assert!((power_marginal_variance(1.0, &e1, 1.0, &k2).unwrap() - 1.0).abs() < 1e-14);
        let v = power_marginal_variance(0.5, &e1, 0.75, &k2).unwrap();
        assert!((v - 0.708_705_590_565_866_2).abs() < 1e-12, "v {v}");
        assert!(power_marginal_variance(0.5, &e1, 0.5, &k2).is_err());
    }

    #[test]
    fn marginal_variance_matches_kernel_quadrature() {
        // independent oracle: 2α xᵀKx ∫₀ᵗ u^{(α−1)/α} du by Simpson, with the
        // substitution u = v² so the α < 1 integrand is bounded at zero
        use crate::special::adaptive_simpson;
        for &(alpha, t) in &[(0.75f64, 0.5f64), (1.5, 0.8), (3.0, 1.0)] {
            let k = uniform_cov(2);
            let x = [1.0, 0.0];
            let direct = power_marginal_variance(t, &x, alpha, &k).unwrap();
            let p = (alpha - 1.0) / alpha;
            let f = |v: f64| 2.0 * v.powf(2.0 * p + 1.0);
            let quad = 2.0
                * alpha
                * k.quadratic_form(&x)
                * adaptive_simpson(&f, 0.0, t.sqrt(), 1e-12).unwrap();
            assert!((direct - quad).abs() < 1e-8, "alpha={alpha} t={t}");
        }
    }

    #[test]
    fn power_limit_starts_at_zero_and_matches_variance() {
        let spec = PowerLimitSpec::new(1.0, uniform_cov(2)).unwrap();
        let mut rng = RngStream::new(100, 0).rng();
        let mut endpoints = Vec::new();
        for _ in 0..100_000 {
            let path = sample_power_limit(&spec, &[0.5, 1.0], &mut rng).unwrap();
            assert_eq!(path.evaluate_at(0.0).unwrap(), vec![0.0, 0.0]);
            endpoints.push(path.endpoint()[0]);
        }
        let (_, var) = mean_and_variance(&endpoints);
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn power_limit_marginals_are_gaussian() {
        let spec = PowerLimitSpec::new(0.75, uniform_cov(2)).unwrap();
        let mut rng = RngStream::new(101, 0).rng();
        let t = 0.5;
        let sd = power_marginal_variance(t, &[1.0, 0.0], spec.alpha, &spec.covariance)
            .unwrap()
            .sqrt();
        let sample: Vec<f64> = (0..20_000)
            .map(|_| {
                let p = sample_power_limit(&spec, &[t, 1.0], &mut rng).unwrap();
                p.evaluate_at(t).unwrap()[0] / sd
            })
            .collect();
        let out = ks_test(&sample, normal_cdf).unwrap();
        assert!(out.p_value > 0.01, "p {}", out.p_value);
    }

    #[test]
    fn power_limit_increments_are_uncorrelated() {
        // independent increments over disjoint intervals: empirical
        // correlation below three standard errors
        let spec = PowerLimitSpec::new(1.5, uniform_cov(2)).unwrap();
        let mut rng = RngStream::new(110, 0).rng();
        let n = 20_000;
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for _ in 0..n {
            let p = sample_power_limit(&spec, &[0.25, 0.5, 0.75, 1.0], &mut rng).unwrap();
            let a = p.evaluate_at(0.5).unwrap()[0] - p.evaluate_at(0.25).unwrap()[0];
            let b = p.evaluate_at(1.0).unwrap()[0] - p.evaluate_at(0.75).unwrap()[0];
            first.push(a);
            second.push(b);
        }
        let (ma, va) = mean_and_variance(&first);
        let (mb, vb) = mean_and_variance(&second);
        let cov: f64 = first
            .iter()
            .zip(&second)
            .map(|(a, b)| (a - ma) * (b - mb))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn exp_limit_knot_ratios_follow_the_clock_rate() {
        // consecutive knot times satisfy t_{k+1}/t_k = e^{−βγ_k}, so the
        // scaled log-ratios must be standard exponentials in law
        let beta = 0.7;
        let spec = ExpLimitSpec::new(beta, DirectionLaw::uniform(2).unwrap(), 1e-12).unwrap();
        let mut ratios = Vec::new();
        for rep in 0..1000 {
            let c = sample_exp_limit_coupled(&spec, 40, RngStream::new(111, rep)).unwrap();
            // the pre-limit path has exactly n clean segments, free of the
            // truncation stopping rule
            let t = c.pre_limit.knot_times();
            for k in 1..t.len() - 1 {
                ratios.push(-(t[k] / t[k + 1]).ln() / beta);
            }
        }
        let out = ks_test(&ratios, |x| 1.0 - (-x).exp()).unwrap();
        assert!(out.p_value > 0.01, "p {}", out.p_value);
    }

    #[test]
    fn kernel_route_agrees_with_time_change_route() {
        let spec = PowerLimitSpec::new(0.75, uniform_cov(2)).unwrap();
        let mut rng_a = RngStream::new(102, 0).rng();
        let mut rng_b = RngStream::new(102, 1).rng();
        let a: Vec<f64> = (0..20_000)
            .map(|_| {
                sample_power_limit(&spec, &[1.0], &mut rng_a)
                    .unwrap()
                    .endpoint()[0]
            })
            .collect();
        let b: Vec<f64> = (0..20_000)
            .map(|_| sample_power_limit_kernel_endpoint(&spec, 512, &mut rng_b).unwrap()[0])
            .collect();
        let out = ks_test_two_sample(&a, &b).unwrap();
        assert!(out.p_value > 0.01, "p {}", out.p_value);
    }

    #[test]
    fn degenerate_covariance_is_supported() {
        // rank-one K from the ±e1 law
        let law = crate::direction_law::plus_minus_axis(2, 0).unwrap();
        let k = crate::direction_law::covariance_of(&law);
        let spec = PowerLimitSpec::new(1.0, k).unwrap();
        let mut rng = RngStream::new(103, 0).rng();
        let p = sample_power_limit(&spec, &[1.0], &mut rng).unwrap();
        // all mass on the first axis
        assert_eq!(p.endpoint()[1], 0.0);
    }

    fn exp_spec(tol: f64) -> ExpLimitSpec {
        ExpLimitSpec::new(1.0, DirectionLaw::uniform(2).unwrap(), tol).unwrap()
    }

    #[test]
    fn coupled_paths_satisfy_pathwise_bound() {
        let spec = exp_spec(1e-15);
        for rep in 0..200 {
            let c = sample_exp_limit_coupled(&spec, 50, RngStream::new(104, rep)).unwrap();
            assert!(c.coupling_holds().unwrap());
        }
    }

    #[test]
    fn coupled_first_vertex_is_at_time_one() {
        let spec = exp_spec(1e-12);
        let c = sample_exp_limit_coupled(&spec, 10, RngStream::new(105, 0)).unwrap();
        assert_eq!(*c.pre_limit.knot_times().last().unwrap(), 1.0);
        assert_eq!(*c.limit.knot_times().last().unwrap(), 1.0);
    }

    #[test]
    fn coupled_sup_distance_is_tiny_at_n_fifty() {
        let spec = exp_spec(1e-15);
        let dists: Vec<f64> = (0..200)
            .map(|rep| {
                let c = sample_exp_limit_coupled(&spec, 50, RngStream::new(106, rep)).unwrap();
                sup_distance(&c.pre_limit, &c.limit).unwrap()
            })
            .collect();
        let med = median(&dists);
        assert!(med < 1e-15, "median {med}");
    }

    #[test]
    fn limit_knot_ratios_and_unit_slopes() {
        let spec = ExpLimitSpec::new(0.7, DirectionLaw::uniform(2).unwrap(), 1e-14).unwrap();
        let c = sample_exp_limit_coupled(&spec, 20, RngStream::new(107, 3)).unwrap();
        let p = &c.limit;
        let times = p.knot_times();
        // skip the two leading knots (0 and the truncation point): interior
        // segments must have unit slope
        for k in 2..p.knots() - 1 {
            let dt = times[k + 1] - times[k];
            let dv: Vec<f64> = p
                .knot_value(k + 1)
                .iter()
                .zip(p.knot_value(k))
                .map(|(a, b)| a - b)
                .collect();
            assert!((norm(&dv) / dt - 1.0).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn degenerate_limit_is_a_unit_ray() {
        let law = DirectionLaw::uniform(3).unwrap();
        let mut rng = RngStream::new(108, 0).rng();
        for _ in 0..100 {
            let p = sample_degenerate_limit(&law, &mut rng).unwrap();
            let end = p.endpoint().to_vec();
            assert!((norm(&end) - 1.0).abs() < 1e-12);
            let half = p.evaluate_at(0.5).unwrap();
            for (h, e) in half.iter().zip(&end) {
                assert!((h - e / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_limit_distribution_matches_law() {
        let law = DirectionLaw::uniform(2).unwrap();
        let mut rng = RngStream::new(109, 0).rng();
        let a: Vec<f64> = (0..10_000)
            .map(|_| sample_degenerate_limit(&law, &mut rng).unwrap().endpoint()[0])
            .collect();
        let mut rng2 = RngStream::new(109, 1).rng();
        let b: Vec<f64> = (0..10_000)
            .map(|_| sample_direction(&law, &mut rng2)[0])
            .collect();
        let out = ks_test_two_sample(&a, &b).unwrap();
        assert!(out.p_value > 0.01, "p {}", out.p_value);
    }
}
