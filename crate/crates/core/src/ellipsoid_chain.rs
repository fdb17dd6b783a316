//! The "walk over ellipsoids": a Markov chain whose step is a drift shift
//! plus an ellipsoidally shaped random displacement.
//!
//! One step from `x` is `x' = x + Δ(θ) b(x) + ρ ε₀`, where the direction is
//! the affine pushforward of a uniform sphere direction through `a^{1/2}(x)`
//! (`a = σσᵀ`) and the radius has a direction-dependent density derived from
//! a radial family `f(r;θ)` that is homogeneous of degree −1. That
//! homogeneity collapses the one-step transition density to
//! `Δ^{−d/2} q_x((y − x − Δ b(x))/√Δ)` with a closed form `q_x` for the two
//! built-in families; the Bessel-integral characteristic function provides
//! the independent oracle for both.
//!
//! Sampling uses the equivalent isotropic-then-affine construction: the
//! *scaled* Mahalanobis radius `R` is drawn from the radial law of `q_x`
//! (Gamma(d, 1/√(d+1)) for the exponential family, chi_d for the Gaussian
//! one) and the increment is `√Δ · σ(x) · (R u)` with `u` uniform on the
//! sphere. The radius-histogram and covariance checks below pin the
//! construction to the printed densities.

use crate::direction_law::{sample_direction, DirectionLaw};
use crate::error::{Error, Result};
use crate::flight_path::PolylinePath;
use crate::linalg::{norm, Matrix, PSD_FLOOR};
use crate::rng::{chi, gamma, uniform_open01, RngStream};
use crate::special::{gamma_p, integrate_paneled, ln_gamma, sphere_charfn_kernel};
use rand::Rng;
use std::fmt;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// coefficient fields

type VecField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatField = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// Drift and diffusion coefficients with uniform-ellipticity metadata.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    drift: VecField,
    sigma: MatField,
    /// declared uniform ellipticity lower bound for a(x)
    pub ellipticity: f64,
    pub label: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientField({}, d={})", self.label, self.dim)
    }
}

impl CoefficientField {
    /// Build a field and verify symmetry, the ellipticity bound and
    /// boundedness of b and σ on a test grid of points.
    pub fn new(
        dim: usize,
        drift: VecField,
        sigma: MatField,
        ellipticity: f64,
        label: impl Into<String>,
        test_points: &[Vec<f64>],
    ) -> Result<Self> {
        if dim == 0 || ellipticity <= 0.0 {
            return Err(Error::invalid("need dim >= 1 and ellipticity > 0"));
        }
        let field = Self {
            dim,
            drift,
            sigma,
            ellipticity,
            label: label.into(),
        };
        for p in test_points {
            let a = field.a(p);
            if !a.is_symmetric(1e-9) {
                return Err(Error::invalid(format!(
                    "a(x) not symmetric at {p:?} for {}",
                    field.label
                )));
            }
            let (vals, _) = a.sym_eigen();
            if vals[0] < ellipticity - 1e-12 {
                return Err(Error::invalid(format!(
                    "ellipticity bound violated at {p:?}: eigenvalue {} < {}",
                    vals[0], ellipticity
                )));
            }
            let b = field.b(p);
            if b.iter().any(|v| !v.is_finite()) || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "coefficients unbounded at {p:?} for {}",
                    field.label
                )));
            }
        }
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn b(&self, x: &[f64]) -> Vec<f64> {
        (self.drift)(x)
    }

    pub fn sigma(&self, x: &[f64]) -> Matrix {
        (self.sigma)(x)
    }

    pub fn a(&self, x: &[f64]) -> Matrix {
        let s = self.sigma(x);
        s.matmul(&s.transpose())
    }

    fn default_test_grid(dim: usize) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in -8..=8 {
            let t = i as f64 * 0.75;
            pts.push(vec![t; dim]);
        }
        pts
    }

    /// b = 0, σ = I.
    pub fn unit(dim: usize) -> Self {
        Self::new(
            dim,
            Arc::new(move |x: &[f64]| vec![0.0; x.len()]),
            Arc::new(move |x: &[f64]| Matrix::identity(x.len())),
            1.0,
            "unit",
            &Self::default_test_grid(dim),
        )
        .expect("unit field is valid")
    }

    /// d = 2, b = 0, a = diag(1, 4).
    pub fn diag_one_four() -> Self {
        Self::new(
            2,
            Arc::new(|_: &[f64]| vec![0.0, 0.0]),
            Arc::new(|_: &[f64]| Matrix::diagonal(&[1.0, 2.0])),
            1.0,
            "diag(1,4)",
            &Self::default_test_grid(2),
        )
        .expect("diag field is valid")
    }

    /// d = 1, b = 0, σ(x) = 1 + 0.2 sin x; a ranges over [0.64, 1.44].
    pub fn sine_sigma() -> Self {
        Self::new(
            1,
            Arc::new(|_: &[f64]| vec![0.0]),
            Arc::new(|x: &[f64]| Matrix::diagonal(&[1.0 + 0.2 * x[0].sin()])),
            0.64,
            "sine-sigma",
            &Self::default_test_grid(1),
        )
        .expect("sine-sigma field is valid")
    }

    /// d = 1, b(x) = rate·x, σ = vol (linear-drift Gaussian benchmark with
    /// closed-form chain and limit densities).
    pub fn linear_drift(rate: f64, vol: f64) -> Self {
        Self::new(
            1,
            Arc::new(move |x: &[f64]| vec![rate * x[0]]),
            Arc::new(move |_: &[f64]| Matrix::diagonal(&[vol])),
            vol * vol * 0.999,
            format!("linear-drift({rate},{vol})"),
            &Self::default_test_grid(1),
        )
        .expect("linear drift field is valid")
    }

    /// Look up a named preset.
    pub fn preset(name: &str, dim: usize) -> Result<Self> {
        match name {
            "unit" => Ok(Self::unit(dim)),
            "diag(1,4)" => Ok(Self::diag_one_four()),
            "sine-sigma" => Ok(Self::sine_sigma()),
            other => Err(Error::Config(format!(
                "unknown coefficient preset {other:?}"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// radial families

/// Radial density family `f(r;θ)`, homogeneous of degree −1.
#[derive(Clone)]
pub enum RadialFamily {
    /// `f(r;θ) = r^{−1}(r/θ)^d e^{−r/θ} / Γ(d)` — Gamma(d, θ) radius,
    /// exponentially shaped ellipsoidal step.
    Example1 { dim: usize },
    /// `f(r;θ) = C_d r^{−1}(r/θ)^d e^{−r²/θ²}` with `C_d = 2/Γ(d/2)` —
    /// Gaussian step; the chain is the Euler scheme of the SDE.
    Example2 { dim: usize },
    /// User family; must declare the step-scale constant `c_d` in
    /// `Δ(θ) = c_d θ²`. Homogeneity and normalization are spot-checked at
    /// construction.
    Custom {
        f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        c_d: f64,
        label: String,
        dim: usize,
    },
}

impl fmt::Debug for RadialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialFamily::Example1 { dim } => write!(f, "Example1(d={dim})"),
            RadialFamily::Example2 { dim } => write!(f, "Example2(d={dim})"),
            RadialFamily::Custom { label, dim, .. } => write!(f, "Custom({label}, d={dim})"),
        }
    }
}

impl RadialFamily {
    pub fn example1(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        Ok(RadialFamily::Example1 { dim })
    }

    pub fn example2(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        Ok(RadialFamily::Example2 { dim })
    }

    pub fn custom<F>(f: F, c_d: f64, dim: usize, label: impl Into<String>) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !c_d.is_finite() || c_d <= 0.0 {
            return Err(Error::invalid("custom radial family must declare c_d > 0"));
        }
        let fam = RadialFamily::Custom {
            f: Arc::new(f),
            c_d,
            label: label.into(),
            dim,
        };
        fam.check_homogeneity()?;
        fam.check_normalization(1.0)?;
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        match self {
            RadialFamily::Example1 { dim }
            | RadialFamily::Example2 { dim }
            | RadialFamily::Custom { dim, .. } => *dim,
        }
    }

    /// Degree −1 homogeneity `f(λr; λθ) = λ^{−1} f(r;θ)` on a deterministic
    /// pseudo-random point set, to 1e-10 relative.
    pub fn check_homogeneity(&self) -> Result<()> {
        let mut rng = RngStream::new(0x0a11_0f5e, 7).rng();
        for _ in 0..200 {
            let r = 0.05 + 4.0 * uniform_open01(&mut rng);
            let th = 0.2 + 2.0 * uniform_open01(&mut rng);
            let lam = 0.1 + 5.0 * uniform_open01(&mut rng);
            let lhs = self.density(lam * r, lam * th)?;
            let rhs = self.density(r, th)? / lam;
            if (lhs - rhs).abs() > 1e-10 * rhs.abs().max(1e-30) {
                return Err(Error::invalid(format!(
                    "radial family is not homogeneous of degree -1 at r={r}, θ={th}, λ={lam}"
                )));
            }
        }
        Ok(())
    }

    /// `∫₀^∞ f(r;θ) dr = 1` by adaptive quadrature, to 1e-8.
    pub fn check_normalization(&self, theta: f64) -> Result<()> {
        let upper = self.quadrature_cutoff(theta);
        let f = |r: f64| self.density(r, theta).unwrap_or(0.0);
        let mass = integrate_paneled(&f, 1e-12, upper, 48, 1e-10)?;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "radial density mass is {mass}, not 1 (θ={theta})"
            )));
        }
        Ok(())
    }

    /// Radius beyond which the density tail is numerically negligible.
    fn quadrature_cutoff(&self, theta: f64) -> f64 {
        let d = self.dim() as f64;
        match self {
            RadialFamily::Example1 { .. } => theta * (30.0 + 8.0 * d),
            RadialFamily::Example2 { .. } => theta * (9.0 + d).sqrt() * 2.5,
            RadialFamily::Custom { .. } => theta * (30.0 + 8.0 * d),
        }
    }

    /// `f(r; θ)`.
    pub fn density(&self, r: f64, theta: f64) -> Result<f64> {
        if r <= 0.0 || theta <= 0.0 {
            return Err(Error::domain(format!(
                "need r > 0 and θ > 0, got {r}, {theta}"
            )));
        }
        let d = self.dim() as f64;
        Ok(match self {
            RadialFamily::Example1 { .. } => {
                ((d - 1.0) * (r / theta).ln() - r / theta - ln_gamma(d)).exp() / theta
            }
            RadialFamily::Example2 { .. } => {
                let c_d = 2.0 / ln_gamma(d / 2.0).exp();
                c_d * ((d - 1.0) * (r / theta).ln() - (r / theta).powi(2)).exp() / theta
            }
            RadialFamily::Custom { f, .. } => f(r, theta),
        })
    }

    /// Effective time step `Δ(θ) = c_d θ²`.
    pub fn delta_of_theta(&self, theta: f64) -> Result<f64> {
        if theta <= 0.0 {
            return Err(Error::domain(format!("θ must be positive, got {theta}")));
        }
        let d = self.dim() as f64;
        Ok(match self {
            RadialFamily::Example1 { .. } => (d + 1.0) * (d + 1.0) * theta * theta,
            RadialFamily::Example2 { .. } => theta * theta / 2.0,
            RadialFamily::Custom { c_d, .. } => c_d * theta * theta,
        })
    }

    /// θ_n = √(2/n): the Example-2 choice that makes Δ(θ_n) = 1/n.
    pub fn theta_for_unit_steps(n: usize) -> f64 {
        (2.0 / n as f64).sqrt()
    }

    /// Draw the *scaled* Mahalanobis radius, i.e. the radial part of the
    /// shape function q_x.
    pub fn sample_scaled_radius<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        let d = self.dim();
        match self {
            RadialFamily::Example1 { .. } => {
                Ok(gamma(rng, d as f64, 1.0 / ((d as f64 + 1.0).sqrt())))
            }
            RadialFamily::Example2 { .. } => Ok(chi(rng, d)),
            RadialFamily::Custom { .. } => Err(Error::invalid(
                "custom radial families have no sampler; only the Bessel-integral oracle applies",
            )),
        }
    }

    /// CDF of the scaled radius (for histogram tests).
    pub fn scaled_radius_cdf(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Ok(0.0);
        }
        let d = self.dim() as f64;
        match self {
            RadialFamily::Example1 { .. } => Ok(gamma_p(d, r * (d + 1.0).sqrt())),
            RadialFamily::Example2 { .. } => Ok(gamma_p(d / 2.0, r * r / 2.0)),
            RadialFamily::Custom { .. } => Err(Error::invalid(
                "custom radial families have no closed scaled CDF",
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// chain configuration and one-step law

/// Configuration of the ellipsoid walk.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub coefficients: CoefficientField,
    pub radial: RadialFamily,
    pub theta: f64,
    pub x0: Vec<f64>,
    pub steps: usize,
}

impl ChainConfig {
    pub fn new(
        coefficients: CoefficientField,
        radial: RadialFamily,
        theta: f64,
        x0: Vec<f64>,
        steps: usize,
    ) -> Result<Self> {
        if coefficients.dim() != radial.dim() {
            return Err(Error::DimensionMismatch {
                expected: coefficients.dim(),
                got: radial.dim(),
            });
        }
        if x0.len() != coefficients.dim() {
            return Err(Error::DimensionMismatch {
                expected: coefficients.dim(),
                got: x0.len(),
            });
        }
        if steps == 0 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        let delta = radial.delta_of_theta(theta)?;
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::invalid(format!(
                "Δ(θ) must be positive, got {delta}"
            )));
        }
        Ok(Self {
            coefficients,
            radial,
            theta,
            x0,
            steps,
        })
    }

    pub fn delta(&self) -> f64 {
        self.radial
            .delta_of_theta(self.theta)
            .expect("validated at construction")
    }

    pub fn dim(&self) -> usize {
        self.coefficients.dim()
    }
}

/// One step of the walk from `x`.
pub fn sample_step<R: Rng>(x: &[f64], config: &ChainConfig, rng: &mut R) -> Result<Vec<f64>> {
    let d = config.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let a = config.coefficients.a(x);
    let (vals, _) = a.sym_eigen();
    if vals[0] <= PSD_FLOOR * vals[d - 1].max(1.0) {
        return Err(Error::Singular(format!(
            "a(x) degenerate at {x:?}: smallest eigenvalue {}",
            vals[0]
        )));
    }
    let delta = config.delta();
    let b = config.coefficients.b(x);
    let sigma = config.coefficients.sigma(x);
    let radius = config.radial.sample_scaled_radius(rng)?;
    let u = sample_direction(&DirectionLaw::uniform(d)?, rng);
    let iso: Vec<f64> = u.iter().map(|ui| ui * radius).collect();
    let push = sigma.matvec(&iso);
    Ok((0..d)
        .map(|i| x[i] + delta * b[i] + delta.sqrt() * push[i])
        .collect())
}

/// Closed-form one-step transition density `p(1, x, y)` for the built-in
/// families.
pub fn one_step_density(x: &[f64], y: &[f64], config: &ChainConfig) -> Result<f64> {
    let d = config.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len().max(y.len()),
        });
    }
    let delta = config.delta();
    let b = config.coefficients.b(x);
    let z: Vec<f64> = (0..d)
        .map(|i| (y[i] - x[i] - delta * b[i]) / delta.sqrt())
        .collect();
    Ok(delta.powf(-(d as f64) / 2.0) * shape_density(&z, x, config)?)
}

/// The scale-free shape density q_x(z).
pub fn shape_density(z: &[f64], x: &[f64], config: &ChainConfig) -> Result<f64> {
    let d = config.dim() as f64;
    let a = config.coefficients.a(x);
    let inv_root = a.inv_sqrt_pd()?;
    let det_root = a.sym_det().sqrt();
    let w = inv_root.matvec(z);
    let maha = norm(&w);
    match &config.radial {
        RadialFamily::Example1 { .. } => {
            let dp1 = d + 1.0;
            let log_norm = (d / 2.0) * dp1.ln()
                - d * std::f64::consts::LN_2
                - (d - 1.0) / 2.0 * std::f64::consts::PI.ln()
                - ln_gamma((d + 1.0) / 2.0)
                - det_root.ln();
            Ok((log_norm - dp1.sqrt() * maha).exp())
        }
        RadialFamily::Example2 { .. } => {
            let log_norm =
                -(d / 2.0) * (2.0 * std::f64::consts::PI).ln() - det_root.ln();
            Ok((log_norm - 0.5 * maha * maha).exp())
        }
        RadialFamily::Custom { .. } => Err(Error::invalid(
            "no closed one-step density for custom radial families; use the characteristic-function oracle",
        )),
    }
}

/// Characteristic function of the unscaled step displacement `ρ₀ ε₀` by
/// quadrature of the Bessel-kernel integral
/// `Ψ(t) = ∫₀^∞ κ_d(r |a^{1/2}(x) t|) f(r;θ) dr`.
///
/// Works for any radial family (including custom ones) and serves as the
/// independent oracle for the closed-form densities.
pub fn charfn_bessel(t: &[f64], x: &[f64], config: &ChainConfig, quad_tol: f64) -> Result<f64> {
    let d = config.dim();
    if t.len() != d || x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: t.len().max(x.len()),
        });
    }
    if norm(t) == 0.0 {
        return Ok(1.0);
    }
    let a = config.coefficients.a(x);
    // |a^{1/2} t| = √(tᵀ a t)
    let s = a.quadratic_form(t).sqrt();
    let theta = config.theta;
    let upper = config.radial.quadrature_cutoff(theta);
    let fam = &config.radial;
    let integrand = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        sphere_charfn_kernel(d, r * s) * fam.density(r, theta).unwrap_or(0.0)
    };
    // panel width tracks both the density scale (~θ) and the kernel
    // oscillation period 2π/s
    let panels = ((upper / theta).ceil() as usize)
        .max((upper * s / 3.0).ceil() as usize)
        .clamp(16, 4096);
    integrate_paneled(&integrand, 0.0, upper, panels, quad_tol)
}

/// Closed-form characteristic functions of the built-in families (the
/// quadrature oracle's cross-check): the exponential family gives
/// `(1 + θ² tᵀa t)^{−(d+1)/2}`, the Gaussian one `exp(−(θ²/4) tᵀa t)`.
pub fn charfn_closed_form(t: &[f64], x: &[f64], config: &ChainConfig) -> Result<f64> {
    let a = config.coefficients.a(x);
    let s2 = a.quadratic_form(t);
    let theta = config.theta;
    let d = config.dim() as f64;
    match &config.radial {
        RadialFamily::Example1 { .. } => Ok((1.0 + theta * theta * s2).powf(-(d + 1.0) / 2.0)),
        RadialFamily::Example2 { .. } => Ok((-(theta * theta) / 4.0 * s2).exp()),
        RadialFamily::Custom { .. } => Err(Error::invalid(
            "no closed characteristic function for custom radial families",
        )),
    }
}

// ---------------------------------------------------------------------------
// the general-radius chain (unit-sphere directions, scalar radius law)

/// Scalar radius law for the general chain; must have a density on R₊ with
/// `E ρ² = d`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RhoLaw {
    /// Point mass at √d (no density; accepted as a degenerate test stub).
    FixedSqrtD,
    /// chi_d: the radius of a standard Gaussian vector, so σ(x)·ρ·ε is a
    /// Gaussian increment and the chain is the Euler scheme.
    ChiD,
    /// Mixture 1−p of chi_d with p of a Pareto(tail index a) calibrated so
    /// E ρ² = d exactly. The polynomial tail makes truncated-moment
    /// convergence visible above Monte Carlo noise.
    HeavyTail { tail_index: f64, mixture: f64 },
}

impl RhoLaw {
    pub fn validate(&self) -> Result<()> {
        if let RhoLaw::HeavyTail {
            tail_index,
            mixture,
        } = self
        {
            if !tail_index.is_finite() || *tail_index <= 2.0 {
                return Err(Error::invalid(format!(
                    "heavy tail index must exceed 2 for a finite second moment, got {tail_index}"
                )));
            }
            if !mixture.is_finite() || *mixture <= 0.0 || *mixture >= 1.0 {
                return Err(Error::invalid(format!(
                    "mixture weight must lie in (0,1), got {mixture}"
                )));
            }
        }
        Ok(())
    }

    fn pareto_min(&self, d: usize) -> f64 {
        match self {
            RhoLaw::HeavyTail { tail_index, .. } => {
                (d as f64 * (tail_index - 2.0) / tail_index).sqrt()
            }
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng>(&self, d: usize, rng: &mut R) -> f64 {
        match self {
            RhoLaw::FixedSqrtD => (d as f64).sqrt(),
            RhoLaw::ChiD => chi(rng, d),
            RhoLaw::HeavyTail {
                tail_index,
                mixture,
            } => {
                let u = uniform_open01(rng);
                if u < *mixture {
                    let v = uniform_open01(rng);
                    self.pareto_min(d) * v.powf(-1.0 / tail_index)
                } else {
                    chi(rng, d)
                }
            }
        }
    }

    /// Density on R₊ (None for the point mass).
    pub fn density(&self, d: usize, r: f64) -> Option<f64> {
        if r <= 0.0 {
            return match self {
                RhoLaw::FixedSqrtD => None,
                _ => Some(0.0),
            };
        }
        let df = d as f64;
        let chi_pdf = |r: f64| {
            // chi_d density: r^{d−1} e^{−r²/2} / (2^{d/2−1} Γ(d/2))
            ((df - 1.0) * r.ln()
                - r * r / 2.0
                - (df / 2.0 - 1.0) * std::f64::consts::LN_2
                - ln_gamma(df / 2.0))
            .exp()
        };
        match self {
            RhoLaw::FixedSqrtD => None,
            RhoLaw::ChiD => Some(chi_pdf(r)),
            RhoLaw::HeavyTail {
                tail_index,
                mixture,
            } => {
                let xm = self.pareto_min(d);
                let pareto = if r >= xm {
                    tail_index * xm.powf(*tail_index) * r.powf(-tail_index - 1.0)
                } else {
                    0.0
                };
                Some((1.0 - mixture) * chi_pdf(r) + mixture * pareto)
            }
        }
    }

    /// Numeric check of `E ρ²` against d: quadrature over the density plus
    /// the closed polynomial tail remainder for the heavy-tailed law.
    pub fn mean_square_numeric(&self, d: usize) -> Result<f64> {
        let df = d as f64;
        match self {
            RhoLaw::FixedSqrtD => Ok(df),
            RhoLaw::ChiD | RhoLaw::HeavyTail { .. } => {
                let cutoff = 40.0 + 3.0 * df;
                let f = |r: f64| r * r * self.density(d, r).unwrap_or(0.0);
                // split at the Pareto support edge (a density jump)
                let xm = self.pareto_min(d);
                let mut m = if xm > 0.0 && xm < cutoff {
                    integrate_paneled(&f, 1e-12, xm, 8, 1e-11)?
                        + integrate_paneled(&f, xm, cutoff, 48, 1e-10)?
                } else {
                    integrate_paneled(&f, 1e-12, cutoff, 48, 1e-10)?
                };
                if let RhoLaw::HeavyTail {
                    tail_index,
                    mixture,
                } = self
                {
                    // ∫_c^∞ r² a x_m^a r^{−a−1} dr = a x_m^a c^{2−a}/(a−2)
                    m +=
                        mixture * tail_index * xm.powf(*tail_index) * cutoff.powf(2.0 - tail_index)
                            / (tail_index - 2.0);
                }
                Ok(m)
            }
        }
    }
}

/// Configuration of the general chain `x' = x + h b(x) + √h ρ σ(x) ε`.
#[derive(Debug, Clone)]
pub struct GeneralChainConfig {
    pub coefficients: CoefficientField,
    pub rho: RhoLaw,
}

impl GeneralChainConfig {
    /// Validates the radius law, including the numeric `E ρ² = d` check
    /// (within 1%).
    pub fn new(coefficients: CoefficientField, rho: RhoLaw) -> Result<Self> {
        rho.validate()?;
        let d = coefficients.dim();
        let ms = rho.mean_square_numeric(d)?;
        if (ms - d as f64).abs() > 0.01 * d as f64 {
            return Err(Error::invalid(format!(
                "radius law has E ρ² = {ms}, expected {d} (1% tolerance)"
            )));
        }
        Ok(Self { coefficients, rho })
    }

    /// One increment `h b(x) + √h ρ σ(x) ε` added to x.
    pub fn step<R: Rng>(&self, x: &[f64], h: f64, rng: &mut R) -> Vec<f64> {
        let d = self.coefficients.dim();
        let rho = self.rho.sample(d, rng);
        let u = sample_direction(&DirectionLaw::uniform(d).expect("d >= 1"), rng);
        let iso: Vec<f64> = u.iter().map(|ui| ui * rho).collect();
        let push = self.coefficients.sigma(x).matvec(&iso);
        let b = self.coefficients.b(x);
        (0..d)
            .map(|i| x[i] + h * b[i] + h.sqrt() * push[i])
            .collect()
    }
}

/// Simulate the broken-line chain with vertices at `kh`; requires
/// `h·steps = 1` so the path lives on [0, 1].
pub fn simulate_chain13(
    config: &GeneralChainConfig,
    x0: &[f64],
    h: f64,
    steps: usize,
    stream: RngStream,
) -> Result<PolylinePath> {
    if x0.len() != config.coefficients.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.coefficients.dim(),
            got: x0.len(),
        });
    }
    if steps == 0 || (h * steps as f64 - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "need h·steps = 1 for a path on [0,1]; got h={h}, steps={steps}"
        )));
    }
    let mut rng = stream.rng();
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 1..=steps {
        x = config.step(&x, h, &mut rng);
        times.push(if k == steps { 1.0 } else { k as f64 * h });
        values.push(x.clone());
    }
    PolylinePath::new(times, values)
}

/// Monte Carlo estimates of the truncated one-step moments
/// `a_h(x), b_h(x), Δ_h^ε(x)` with standard errors.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TruncatedMoments {
    pub a_h: Vec<Vec<f64>>,
    pub b_h: Vec<f64>,
    pub delta_h_eps: f64,
    pub a_h_std_error: Vec<Vec<f64>>,
    pub b_h_std_error: Vec<f64>,
    pub delta_std_error: f64,
    pub samples: usize,
}

pub fn truncated_moments(
    x: &[f64],
    h: f64,
    config: &GeneralChainConfig,
    epsilon: f64,
    mc_samples: usize,
    stream: RngStream,
) -> Result<TruncatedMoments> {
    let d = config.coefficients.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if !(h.is_finite() && h > 0.0 && epsilon.is_finite() && epsilon > 0.0) || mc_samples < 2 {
        return Err(Error::invalid("need h > 0, ε > 0 and at least two samples"));
    }
    let mut rng = stream.rng();
    let mut sum_a = Matrix::zeros(d);
    let mut sum_a2 = Matrix::zeros(d);
    let mut sum_b = vec![0.0; d];
    let mut sum_b2 = vec![0.0; d];
    let mut exits = 0u64;
    for _ in 0..mc_samples {
        let y = config.step(x, h, &mut rng);
        let dx: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let r = norm(&dx);
        if r >= epsilon {
            exits += 1;
        }
        if r <= 1.0 {
            for i in 0..d {
                let bi = dx[i] / h;
                sum_b[i] += bi;
                sum_b2[i] += bi * bi;
                for j in 0..d {
                    let aij = dx[i] * dx[j] / h;
                    sum_a[(i, j)] += aij;
                    sum_a2[(i, j)] += aij * aij;
                }
            }
        }
    }
    let n = mc_samples as f64;
    let mut a_h = vec![vec![0.0; d]; d];
    let mut a_se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mean = sum_a[(i, j)] / n;
            let var = (sum_a2[(i, j)] / n - mean * mean).max(0.0);
            a_h[i][j] = mean;
            a_se[i][j] = (var / n).sqrt();
        }
    }
    let mut b_h = vec![0.0; d];
    let mut b_se = vec![0.0; d];
    for i in 0..d {
        let mean = sum_b[i] / n;
        let var = (sum_b2[i] / n - mean * mean).max(0.0);
        b_h[i] = mean;
        b_se[i] = (var / n).sqrt();
    }
    let p = exits as f64 / n;
    Ok(TruncatedMoments {
        a_h,
        b_h,
        delta_h_eps: p / h,
        a_h_std_error: a_se,
        b_h_std_error: b_se,
        delta_std_error: (p * (1.0 - p) / n).sqrt() / h,
        samples: mc_samples,
    })
}
